"""Simulation -> calibration -> training -> Phase II monitoring -> report.

Each step reads and writes files in the output directory so the CLI
commands can run as separate processes.
"""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataset, sim, spc
from .engine.checkpoint import dumps, load_checkpoint
from .graph import load_topology
from .train import TrainConfig, confusion_matrix, evaluate, train, weighted_f_score

log = logging.getLogger(__name__)

# (regime, days): in control, shortage, construction, traffic jams, in control
PHASE2_WINDOWS = ((0, 30), (1, 10), (2, 30), (3, 20), (0, 10))

CALIBRATION_FILE = "calibration.jsonl"
TRAIN_FILE = "train.jsonl"
VAL_FILE = "val.jsonl"
CHART_STATE_FILE = "chart_state.json"
CHECKPOINT_FILE = "checkpoint.json"
HISTORY_FILE = "history.csv"
CHART_CSV_FILE = "chart.csv"
REPORT_FILE = "report.json"
PHASE2_FILE = "phase2_scenes.jsonl"
PLOT_FILE = "chart.svg"
SUMMARY_FILE = "report.txt"

CSV_VERSION = 1
CHART_COLUMNS = ("version", "day", "q80", "q95", "a_t", "limit", "signal", "true_regime", "predicted_label")


class ReportError(ValueError):
    pass


@dataclass
class PipelineConfig:
    topology: Optional[str] = None
    seed: int = 2021
    phase1_days: int = 2500
    windows: tuple = PHASE2_WINDOWS
    monitoring_days: int = 100
    arl: float = 1000.0
    train: TrainConfig = field(default_factory=TrainConfig)
    shifts: sim.ShiftTable = field(default_factory=sim.ShiftTable)
    validation_scale: tuple = sim.VALIDATION_SHIFTS.scale
    diagnose_all: bool = False
    out: str = "out"

    def __post_init__(self):
        self.windows = tuple((int(r), int(n)) for r, n in self.windows)
        if sum(n for _, n in self.windows) != self.monitoring_days:
            raise ValueError(
                f"Phase II windows cover {sum(n for _, n in self.windows)} days, "
                f"expected {self.monitoring_days}"
            )
        if any(r not in sim.LABELS or n <= 0 for r, n in self.windows):
            raise ValueError("windows must be (regime 0-3, positive length) pairs")
        if self.train.train_size % len(sim.LABELS) or self.train.val_size % len(sim.LABELS):
            raise ValueError("train_size and val_size must be multiples of the class count")

    @property
    def out_dir(self):
        return Path(self.out)

    def regimes(self):
        return [r for r, n in self.windows for _ in range(n)]

    def to_dict(self):
        d = asdict(self)
        d["shifts"] = self.shifts.to_dict()
        d["windows"] = [list(w) for w in self.windows]
        d["validation_scale"] = list(self.validation_scale)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        if "shifts" in d:
            d["shifts"] = sim.ShiftTable.from_dict(d["shifts"])
        if "windows" in d:
            d["windows"] = tuple(tuple(w) for w in d["windows"])
        if "validation_scale" in d:
            d["validation_scale"] = tuple(d["validation_scale"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path=None, **overrides) -> PipelineConfig:
    """Defaults, then the JSON config file, then non-None ``overrides`` (``train_*`` keys go to TrainConfig)."""
    base = json.loads(Path(path).read_text()) if path else {}
    train_over = {k[len("train_"):]: v for k, v in overrides.items() if k.startswith("train_") and v is not None}
    top_over = {k: v for k, v in overrides.items() if not k.startswith("train_") and v is not None}
    cfg = PipelineConfig.from_dict({**base, **top_over})
    if "seed" not in base.get("train", {}):
        train_over.setdefault("seed", cfg.seed)
    if train_over:
        cfg = replace(cfg, train=replace(cfg.train, **train_over))
    return cfg


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_simulate(cfg: PipelineConfig):
    """Write Phase I calibration days and the balanced training / validation scenes."""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    topo = load_topology(cfg.topology)
    model = sim.IN_CONTROL
    days = sim.simulate_days(topo, model, [sim.STABLE] * cfg.phase1_days, cfg.seed, "calibration",
                             cfg.shifts, capture=False)
    dataset.write_days(out / CALIBRATION_FILE, days)
    n_cls = len(sim.LABELS)
    train_set = sim.make_training_set(topo, model, cfg.train.train_size // n_cls, cfg.seed, "train", cfg.shifts)
    val_shifts = replace(cfg.shifts, scale=cfg.validation_scale)
    val_set = sim.make_training_set(topo, model, cfg.train.val_size // n_cls, cfg.seed, "validation", val_shifts)
    dataset.write_samples(out / TRAIN_FILE, train_set)
    dataset.write_samples(out / VAL_FILE, val_set)
    return {
        "calibration": out / CALIBRATION_FILE,
        "train": out / TRAIN_FILE,
        "val": out / VAL_FILE,
    }


def cmd_calibrate(cfg: PipelineConfig, calibration_file=None):
    path = Path(calibration_file) if calibration_file else cfg.out_dir / CALIBRATION_FILE
    days = dataset.read_days(path)
    q = np.array([spc.quantile_vector(rt) for rt in days])
    state = spc.calibrate(q, cfg.arl)
    _write_text(cfg.out_dir / CHART_STATE_FILE, json.dumps(state.to_dict(), indent=1) + "\n")
    return state


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["version", "epoch", "train_loss", "val_loss", "train_f", "val_f"])
        for r in history:
            w.writerow([CSV_VERSION, r.epoch] + [repr(float(v)) for v in (r.train_loss, r.val_loss, r.train_f, r.val_f)])


def cmd_train(cfg: PipelineConfig, train_file=None, val_file=None, on_epoch=None):
    from .engine.model import GcnModel

    out = cfg.out_dir
    train_set = dataset.read_samples(train_file or out / TRAIN_FILE)
    val_set = dataset.read_samples(val_file or out / VAL_FILE)
    model = GcnModel(seed=cfg.train.seed)
    result = train(model, train_set, val_set, cfg.train, on_epoch=on_epoch)
    _write_text(out / CHECKPOINT_FILE, dumps(result.best_checkpoint))
    write_history(out / HISTORY_FILE, result.history)
    return result


def majority_label(preds):
    """Most frequent label; ties go to the lowest label."""
    counts = Counter(int(p) for p in preds)
    top = max(counts.values())
    return min(k for k, v in counts.items() if v == top)


def run_phase2(cfg: PipelineConfig, topo=None):
    topo = load_topology(cfg.topology) if topo is None else topo
    return sim.simulate_days(topo, sim.IN_CONTROL, cfg.regimes(), cfg.seed, "phase2", cfg.shifts)


def cmd_monitor(cfg: PipelineConfig, chart_state=None, checkpoint=None, plot=True):
    """Monitor the Phase II schedule and diagnose signal days with the classifier."""
    out = cfg.out_dir
    state = spc.QuantileChartState.from_dict(
        json.loads(Path(chart_state or out / CHART_STATE_FILE).read_text()))
    ckpt_path = Path(checkpoint or out / CHECKPOINT_FILE)
    model = load_checkpoint(ckpt_path)[0] if ckpt_path.exists() else None
    days = run_phase2(cfg)
    if len(days) != cfg.monitoring_days:
        raise ValueError("schedule length does not match the monitoring period")

    records = []
    for d in days:
        q = spc.quantile_vector(d.response_times)
        signal, a = spc.monitor(state, q)
        rec = {
            "day": d.schedule.day,
            "q80": float(q[0]),
            "q95": float(q[1]),
            "a_t": float(a),
            "limit": state.control_limit,
            "signal": bool(signal),
            "true_regime": d.schedule.regime,
            "true_label": d.label,
            "scenes": len(d.scenes),
            "predicted_label": None,
            "diagnosis": "not-signalled",
        }
        if signal or cfg.diagnose_all:
            if model is None:
                rec["diagnosis"] = "skipped"
            else:
                preds = model.predict([s.graph for s in d.scenes])
                rec["predicted_label"] = majority_label(preds)
                rec["scene_predictions"] = np.bincount(preds, minlength=4).tolist()
                rec["diagnosis"] = "predicted"
        records.append(rec)

    scenes = [s for d in days for s in d.scenes]
    dataset.write_samples(out / PHASE2_FILE, scenes)
    diagnosis = None
    if model is not None:
        ev = evaluate(model, scenes)
        diagnosis = {
            "scene_count": len(scenes),
            "confusion": ev.confusion.tolist(),
            "proportions": ev.proportions.tolist(),
            "recall": ev.recall.tolist(),
            "weighted_f": ev.f_score,
        }
    report = {"version": 1, "control_limit": state.control_limit, "arl": state.arl,
              "windows": [list(w) for w in cfg.windows], "days": records,
              "summary": summarize(records, cfg.windows), "diagnosis": diagnosis}
    _write_text(out / REPORT_FILE, json.dumps(report, indent=1) + "\n")
    write_chart_csv(out / CHART_CSV_FILE, records)
    if plot:
        plot_chart(out / PLOT_FILE, records, state.control_limit, cfg.windows)
    return report


def _g17(x):
    return format(float(x), ".17g")


def write_chart_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CHART_COLUMNS)
        for r in records:
            pred = "" if r["predicted_label"] is None else r["predicted_label"]
            w.writerow([CSV_VERSION, r["day"], _g17(r["q80"]), _g17(r["q95"]), _g17(r["a_t"]), _g17(r["limit"]),
                        int(r["signal"]), r["true_regime"], pred])


def read_chart_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CHART_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    out = []
    for r in rows[1:]:
        if int(r[0]) != CSV_VERSION:
            raise ValueError(f"{path}: unsupported chart version {r[0]}")
        out.append({
            "day": int(r[1]), "q80": float(r[2]), "q95": float(r[3]), "a_t": float(r[4]),
            "limit": float(r[5]), "signal": r[6] == "1", "true_regime": int(r[7]),
            "predicted_label": int(r[8]) if r[8] else None,
        })
    return out


def summarize(records, windows):
    win = []
    start = 0
    for regime, n in windows:
        rs = records[start:start + n]
        signals = sum(r["signal"] for r in rs)
        expected = sum(r["true_label"] != sim.STABLE for r in rs)
        win.append({
            "regime": regime, "first_day": start, "days": len(rs), "signals": signals,
            "expected_signals": expected,
            "missed": sum(1 for r in rs if r["true_label"] != sim.STABLE and not r["signal"]),
            "detection_rate": signals / len(rs) if rs else 0.0,
        })
        start += n
    diagnosed = [r for r in records if r["predicted_label"] is not None]
    day_f = None
    if diagnosed:
        cm = confusion_matrix([r["true_label"] for r in diagnosed], [r["predicted_label"] for r in diagnosed])
        day_f = weighted_f_score(cm)
    return {
        "days": len(records),
        "signals": sum(r["signal"] for r in records),
        "false_alarms": sum(1 for r in records if r["signal"] and r["true_regime"] == sim.STABLE),
        "windows": win,
        "diagnosed_days": len(diagnosed),
        "diagnosis_day_weighted_f": day_f,
    }


def cmd_report(report_file) -> str:
    """Human-readable summary of a monitoring report."""
    try:
        rep = json.loads(Path(report_file).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read report {report_file}: {exc}") from None
    if not isinstance(rep, dict) or rep.get("version") != 1 or "days" not in rep:
        raise ReportError(f"{report_file}: not a version-1 monitoring report")
    days = rep["days"]
    if not days:
        raise ReportError(f"{report_file}: the monitoring period is empty")
    s = summarize(days, [tuple(w) for w in rep["windows"]])
    lines = [
        f"monitoring days: {s['days']}",
        f"control limit: {rep['control_limit']:.4f} (ARL {rep['arl']:g})",
        f"signals: {s['signals']}",
        f"false alarms: {s['false_alarms']}",
        "",
        "window  regime                days  signals  expected  missed  detection",
    ]
    for i, w in enumerate(s["windows"], start=1):
        lines.append(f"{i:<7d} {sim.LABEL_NAMES[w['regime']]:<21s} {w['days']:>4d}  {w['signals']:>7d}  "
                     f"{w['expected_signals']:>8d}  {w['missed']:>6d}  {w['detection_rate']:>9.3f}")
    lines.append("")
    skipped = sum(1 for r in days if r.get("diagnosis") == "skipped")
    lines.append(f"diagnosed days: {s['diagnosed_days']} (skipped: {skipped})")
    if s["diagnosis_day_weighted_f"] is not None:
        lines.append(f"diagnosis weighted F-score (days, majority vote): {s['diagnosis_day_weighted_f']:.4f}")
    diag = rep.get("diagnosis")
    if diag:
        lines.append(f"diagnosis weighted F-score (all {diag['scene_count']} Phase II scenes): {diag['weighted_f']:.4f}")
        lines.append("confusion proportions (rows true, columns predicted):")
        for i, row in enumerate(diag["proportions"]):
            lines.append(f"  {i}: " + "  ".join(f"{v:.3f}" for v in row))
    return "\n".join(lines) + "\n"


def plot_chart(path, records, limit, windows):
    """Statistic per day with the control limit and regime shading."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "graphwatch"
    colors = {0: "#c8e6c9", 1: "#ffcc80", 2: "#ffab91", 3: "#fff59d"}
    fig, ax = plt.subplots(figsize=(9, 4))
    start = 0
    for regime, n in windows:
        ax.axvspan(start - 0.5, start + n - 0.5, color=colors[regime], alpha=0.6, lw=0,
                   label=f"label {regime}")
        start += n
    x = [r["day"] for r in records]
    y = [r["a_t"] for r in records]
    ax.plot(x, y, "o-", ms=3, lw=0.8, color="k")
    ax.axhline(limit, color="red", lw=1.2, label="control limit")
    ax.set_yscale("symlog", linthresh=limit)
    ax.set_xlabel("day")
    ax.set_ylabel("a_t")
    handles, labels = ax.get_legend_handles_labels()
    uniq = dict(zip(labels, handles))
    ax.legend(uniq.values(), uniq.keys(), loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run_all(cfg: PipelineConfig, on_epoch=None):
    cmd_simulate(cfg)
    cmd_calibrate(cfg)
    cmd_train(cfg, on_epoch=on_epoch)
    report = cmd_monitor(cfg)
    _write_text(cfg.out_dir / SUMMARY_FILE, cmd_report(cfg.out_dir / REPORT_FILE))
    return report
