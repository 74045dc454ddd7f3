"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``. The two full
pipeline runs at the reference seed dominate the runtime (several minutes).
"""
import math
import sys
import time

import numpy as np
import pytest

from graphwatch import pipeline, sim, spc
from graphwatch.engine import GcnModel, Tensor, global_mean_pool, load_checkpoint, log_softmax
from graphwatch.graph import AttributedGraph, NoPathError, Topology, shortest_path

from . import gradcheck
from .conftest import brute_force_cost, random_simple_graph

RESULTS = {}

REFERENCE_SEED = pipeline.PipelineConfig().seed
DETERMINISM_FILES = (
    pipeline.CALIBRATION_FILE, pipeline.TRAIN_FILE, pipeline.VAL_FILE, pipeline.PHASE2_FILE,
    pipeline.CHART_STATE_FILE, pipeline.CHECKPOINT_FILE, pipeline.HISTORY_FILE,
    pipeline.CHART_CSV_FILE, pipeline.REPORT_FILE, pipeline.SUMMARY_FILE, pipeline.PLOT_FILE,
)


def record(n, name, ok, detail):
    line = f"[acceptance {n:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS[n] = line
    print(line, file=sys.stderr)
    assert ok, line


@pytest.fixture(scope="module")
def reference_runs(tmp_path_factory):
    """Two independent full pipeline runs at the reference seed."""
    outs = []
    for tag in ("a", "b"):
        out = tmp_path_factory.mktemp(f"reference_{tag}")
        cfg = pipeline.load_config(None, out=str(out))
        start = time.perf_counter()
        pipeline.run_all(cfg)
        outs.append((cfg, out, time.perf_counter() - start))
    return outs


def test_01_control_limit(reference_runs):
    cfg, out, _ = reference_runs[0]
    state = pipeline.cmd_calibrate(cfg)
    closed = -2 * math.log(0.001)
    ok = abs(state.control_limit - 13.8155) <= 1e-3 and state.control_limit == pytest.approx(closed, rel=1e-14)
    record(1, "control limit", ok, f"limit {state.control_limit:.6f}, closed form {closed:.6f}")


def test_02_in_control_false_alarm_rate(reference_runs):
    cfg, out, _ = reference_runs[0]
    import json

    state = spc.QuantileChartState.from_dict(json.loads((out / pipeline.CHART_STATE_FILE).read_text()))
    n_days = 100_000
    days = sim.simulate_days(pipeline.load_topology(cfg.topology), sim.IN_CONTROL, [sim.STABLE] * n_days,
                             cfg.seed, "montecarlo", cfg.shifts, capture=False)
    q = np.array([spc.quantile_vector(d.response_times) for d in days])
    a = spc.statistics(state, q)
    rate = float(np.mean(a >= state.control_limit))
    record(2, "in-control false-alarm rate", 0.0005 <= rate <= 0.002,
           f"{int(np.sum(a >= state.control_limit))} signals in {n_days} days, rate {rate:.5f} "
           f"(target [0.0005, 0.002])")


def _solve_statistic(q0, sigma, qt):
    # independent evaluation: solve sigma x = d by Cramer's rule, then d . x
    d0, d1 = qt[0] - q0[0], qt[1] - q0[1]
    a, b, c, e = sigma[0, 0], sigma[0, 1], sigma[1, 0], sigma[1, 1]
    det = a * e - b * c
    x0 = (d0 * e - b * d1) / det
    x1 = (a * d1 - c * d0) / det
    return d0 * x0 + d1 * x1


def test_03_quadratic_form_oracle():
    # covariances with a random orientation and eigenvalues within a factor e^4;
    # any two evaluations of the form can only agree to about cond * eps
    rng = np.random.default_rng(3)
    worst, worst_cond = 0.0, 0.0
    for _ in range(10_000):
        n = int(rng.integers(20, 80))
        angle = rng.uniform(0, np.pi)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        scale = np.exp(rng.uniform(-1, 1, 2)) * rng.uniform(0.1, 3.0)
        q = rng.normal(size=(n, 2)) * scale @ rot.T + rng.uniform(0, 20, 2)
        state = spc.calibrate(q)
        qt = state.q0 + rng.normal(size=2) * rng.uniform(0.1, 5.0)
        ref = _solve_statistic(state.q0, state.sigma0, qt)
        worst = max(worst, abs(spc.statistic(state, qt) - ref) / abs(ref))
        worst_cond = max(worst_cond, np.linalg.cond(state.sigma0))
    record(3, "quadratic-form oracle", worst <= 1e-12,
           f"worst relative error {worst:.2e} over 10^4 states (largest cond {worst_cond:.0f})")


def test_04_dijkstra_oracle():
    rng = np.random.default_rng(4)
    mismatches = 0
    pairs = 0
    for _ in range(1000):
        g, edges, weights = random_simple_graph(rng, max_nodes=8, p=float(rng.uniform(0.2, 0.8)))
        weights = rng.uniform(0.1, 10.0, len(edges))
        g = g.with_attrs(edge_attrs=np.column_stack([weights, np.zeros(len(edges))])) if edges else g
        s, t = (int(v) for v in rng.integers(g.node_count, size=2))
        expect = brute_force_cost(g.node_count, edges, weights.tolist(), s, t)
        try:
            _, cost = shortest_path(g, s, t)
        except NoPathError:
            cost = np.inf
        pairs += 1
        mismatches += cost != expect
    record(4, "Dijkstra oracle", mismatches == 0, f"{mismatches} mismatches in {pairs} random graphs (<= 8 vertices)")


def test_05_gradient_suite():
    worst = {}
    for name, fn in gradcheck.LAYER_CHECKS.items():
        worst[name] = max(fn(seed) for seed in range(20))
    worst["full_model_dropout"] = max(gradcheck.check_full_model(seed, training=True) for seed in range(20))
    ok = max(worst.values()) < 1e-4
    record(5, "gradient suite", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (20 seeds each)")


def test_06_training_reproduction(reference_runs):
    cfg, out, seconds = reference_runs[0]
    import csv
    import json

    with open(out / pipeline.HISTORY_FILE) as fh:
        hist = [r for r in csv.DictReader(fh) if int(r["epoch"]) <= 200]
    best_val = max(float(r["val_f"]) for r in hist)
    diag = json.loads((out / pipeline.REPORT_FILE).read_text())["diagnosis"]
    recall = diag["recall"]
    ok = (best_val >= 0.75 and diag["weighted_f"] >= 0.70 and all(recall[c] >= 0.8 for c in (0, 2, 3))
          and seconds <= 1800)
    record(6, "training reproduction", ok,
           f"best val F {best_val:.4f} (>= 0.75), Phase II F {diag['weighted_f']:.4f} (>= 0.70), "
           f"recall 0/2/3 = {recall[0]:.3f}/{recall[2]:.3f}/{recall[3]:.3f} (>= 0.8), "
           f"class 1 {recall[1]:.3f}, pipeline {seconds:.0f} s")


def test_07_phase2_schedule(reference_runs):
    cfg, out, _ = reference_runs[0]
    import json

    days = json.loads((out / pipeline.REPORT_FILE).read_text())["days"]
    regimes = [d["true_regime"] for d in days]
    runs = []
    for r in regimes:
        if runs and runs[-1][0] == r:
            runs[-1][1] += 1
        else:
            runs.append([r, 1])
    shortage = [d for d in days if d["true_regime"] == sim.SHORTAGE]
    rate = np.mean([d["signal"] for d in shortage])
    ok = [tuple(x) for x in runs] == [(0, 30), (1, 10), (2, 30), (3, 20), (0, 10)] and rate >= 0.8
    record(7, "Phase II schedule", ok, f"windows {[tuple(x) for x in runs]}, shortage signal rate {rate:.2f}")


def test_08_shortage_formula(equal_mix_topology):
    means = [math.exp(mu + 0.05**2 / 2) for mu in (0.1, 0.7, 1.1, 1.6)]
    expect = 4 * sum(means) / 4
    got = sim.apply_shortage(equal_mix_topology, sim.IN_CONTROL)
    err = abs(got - expect) / expect
    record(8, "shortage formula", err <= 1e-9, f"{got:.10f} vs {expect:.10f} (rel. error {err:.1e})")


def test_09_determinism(reference_runs):
    (_, a, _), (_, b, _) = reference_runs
    differ = [f for f in DETERMINISM_FILES if (a / f).read_bytes() != (b / f).read_bytes()]
    record(9, "determinism", not differ,
           f"{len(DETERMINISM_FILES) - len(differ)}/{len(DETERMINISM_FILES)} artifacts byte-identical"
           + (f"; differing: {differ}" if differ else ""))


def _scene_graph(rng, n=18):
    topo = pipeline.load_topology(None)
    days = sim.simulate_days(topo, sim.IN_CONTROL, [int(rng.integers(4))], int(rng.integers(1000)), "pilot")
    return days[0].scenes[0].graph


def test_10_softmax_pooling_invariants():
    rng = np.random.default_rng(10)
    norm_err = 0.0
    for _ in range(1000):
        lp = log_softmax(Tensor(rng.standard_normal((8, 4)) * rng.uniform(0.1, 50))).data
        norm_err = max(norm_err, np.abs(np.exp(lp).sum(1) - 1).max())
    pool_exact = True
    for _ in range(100):
        x = rng.standard_normal((18, 10)) * 10 ** rng.uniform(-6, 6, (18, 10))
        ref = global_mean_pool(Tensor(x)).data
        pool_exact &= np.array_equal(global_mean_pool(Tensor(x[rng.permutation(18)])).data, ref)
    model = GcnModel(seed=10)
    g = _scene_graph(rng)
    model.fit_standardizer([g])
    ref = model.predict_proba([g])[0]
    iso_err = 0.0
    for _ in range(100):
        perm = rng.permutation(g.node_count)
        inv = np.argsort(perm)
        order = rng.permutation(len(g.edges))
        h = AttributedGraph(g.node_count, inv[g.edges][order], g.node_attrs[perm], g.edge_attrs[order])
        iso_err = max(iso_err, np.abs(model.predict_proba([h])[0] - ref).max())
    ok = norm_err <= 1e-12 and pool_exact and iso_err <= 1e-9
    record(10, "softmax/pooling invariants", ok,
           f"normalisation error {norm_err:.1e}, pooling bit-exact {pool_exact}, isomorphic max diff {iso_err:.1e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
