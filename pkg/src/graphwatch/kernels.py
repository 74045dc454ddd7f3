"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy/heapq fallback in ``_pykernels`` is used. Set ``GRAPHWATCH_BACKEND=python``
to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("GRAPHWATCH_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def dijkstra(indptr, indices, weights, source):
    return _impl.dijkstra(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        int(source),
    )


def gmm_aggregate(z, w, src, dst, n_nodes):
    return _impl.gmm_aggregate(
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(src, dtype=np.int64),
        np.ascontiguousarray(dst, dtype=np.int64),
        int(n_nodes),
    )


def gmm_aggregate_backward(z, w, src, dst, grad_out):
    return _impl.gmm_aggregate_backward(
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(src, dtype=np.int64),
        np.ascontiguousarray(dst, dtype=np.int64),
        np.ascontiguousarray(grad_out, dtype=np.float64),
    )


def get_backend(name):
    """Return the kernel module for ``name`` ('python' or 'cython'); for tests and benchmarks."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def serve_episodes(dist, patients, sizes, picks, shortage_time, allow_shortage):
    return _impl.serve_episodes(
        np.ascontiguousarray(dist, dtype=np.float64),
        np.ascontiguousarray(patients, dtype=np.int64),
        np.ascontiguousarray(sizes, dtype=np.int64),
        np.ascontiguousarray(picks, dtype=np.int64),
        float(shortage_time),
        bool(allow_shortage),
    )
