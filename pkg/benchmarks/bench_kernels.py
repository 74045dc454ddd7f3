"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N time for each backend and the
speed-up, then the same for a 200-day simulation and one training epoch
slice, where the kernels are swapped in place.
"""
import argparse
import contextlib
import timeit

import numpy as np

from graphwatch import kernels, sim
from graphwatch.engine import GcnModel
from graphwatch.engine.layers import GraphBatch
from graphwatch.graph import load_topology


@contextlib.contextmanager
def backend(name):
    saved = kernels._impl
    kernels._impl = kernels.get_backend(name)
    try:
        yield
    finally:
        kernels._impl = saved


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_cases():
    topo = load_topology()
    g = topo.nominal_graph()
    indptr, indices, eidx = g.csr
    w = np.ascontiguousarray(g.travel_times[eidx])
    yield "dijkstra (18 vertices)", lambda k: k.dijkstra(indptr, indices, w, 3), 2000

    rng = np.random.default_rng(0)
    model = GcnModel(seed=0)
    scenes = [s for d in sim.simulate_days(topo, sim.IN_CONTROL, [0, 1, 2, 3] * 4, 0, "pilot") for s in d.scenes[:1]]
    batch = GraphBatch.from_parts([model.graph_parts(s.graph) for s in scenes])
    z = rng.standard_normal((batch.n_nodes, 4, 10))
    wk = rng.random((len(batch.src), 4))
    gout = rng.standard_normal((batch.n_nodes, 10))
    yield "gmm_aggregate (batch of 16)", lambda k: k.gmm_aggregate(z, wk, batch.src, batch.dst, batch.n_nodes), 500
    yield "gmm_aggregate_backward", lambda k: k.gmm_aggregate_backward(z, wk, batch.src, batch.dst, gout), 500

    dist = np.stack([g.sssp(s)[0] for s in topo.ambulance_nodes])
    sizes = np.where(rng.random(60) < 0.2, 2, 1)
    pos = np.arange(sizes.sum()) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    picks = rng.integers(0, len(topo.patients) - pos)
    yield "serve_episodes (one day)", lambda k: k.serve_episodes(dist, topo.patients, sizes, picks, 10.8, False), 2000


def end_to_end_cases():
    topo = load_topology()
    yield "simulate 200 days", lambda: sim.simulate_days(topo, sim.IN_CONTROL, [0, 1, 2, 3] * 50, 1, "pilot",
                                                         capture=False), 1
    model = GcnModel(seed=0)
    scenes = sim.make_training_set(topo, sim.IN_CONTROL, 16, 0, "pilot")
    model.fit_standardizer([s.graph for s in scenes])
    batches = [model.batch([s.graph for s in scenes[i:i + 16]]) for i in range(0, len(scenes), 16)]

    def step():
        for b in batches:
            out = model.forward(b, training=True, rng=np.random.default_rng(0))
            out.sum().backward()

    yield "forward+backward, 4 batches of 16", step, 3


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        kernels.get_backend("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    print(f"{'case':36s} {'python':>11s} {'cython':>11s} {'speed-up':>9s}")
    for name, fn, number in kernel_cases():
        t_py = best(lambda: fn(kernels.get_backend("python")), args.repeat, number)
        t_cy = best(lambda: fn(kernels.get_backend("cython")), args.repeat, number)
        print(f"{name:36s} {t_py * 1e6:9.1f}us {t_cy * 1e6:9.1f}us {t_py / t_cy:8.1f}x")
    for name, fn, number in end_to_end_cases():
        times = {}
        for b in ("python", "cython"):
            with backend(b):
                times[b] = best(fn, args.repeat, number)
        print(f"{name:36s} {times['python'] * 1e3:9.1f}ms {times['cython'] * 1e3:9.1f}ms "
              f"{times['python'] / times['cython']:8.1f}x")


if __name__ == "__main__":
    main()
