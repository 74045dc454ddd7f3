"""Pure Python / numpy implementations of the hot kernels.

These are the reference fallbacks for ``_ckernels``; both must agree on
every input (exactly for ``dijkstra``, to rounding for the GMM kernels).
"""
import heapq

import numpy as np


def dijkstra(indptr, indices, weights, source):
    """Single-source shortest paths on a CSR adjacency.

    Returns ``(dist, pred)``; unreachable vertices get ``inf`` and ``-1``.
    Ties in the queue are broken by the lower vertex index, and a
    predecessor is only replaced on a strict improvement.
    """
    n = len(indptr) - 1
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[source] = 0.0
    heap = [(0.0, int(source))]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            if done[v]:
                continue
            nd = d + weights[p]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, int(v)))
    return dist, pred


def gmm_aggregate(z, w, src, dst, n_nodes):
    """out[dst[m]] += mean_k w[m, k] * z[src[m], k]  for every message m."""
    n_kernels = w.shape[1]
    contrib = np.einsum("mk,mko->mo", w, z[src]) / n_kernels
    out = np.zeros((n_nodes, z.shape[2]))
    np.add.at(out, dst, contrib)
    return out


def gmm_aggregate_backward(z, w, src, dst, grad_out):
    """Adjoint of ``gmm_aggregate`` with respect to ``z`` and ``w``."""
    n_kernels = w.shape[1]
    g = grad_out[dst]  # (M, out)
    grad_w = np.einsum("mko,mo->mk", z[src], g) / n_kernels
    grad_z = np.zeros_like(z)
    np.add.at(grad_z, src, w[:, :, None] * g[:, None, :] / n_kernels)
    return grad_z, grad_w


def serve_episodes(dist, patients, sizes, picks, shortage_time, allow_shortage):
    """Dispatch every accident of a day.

    ``dist`` is (stations, nodes); episode ``e`` takes ``sizes[e]`` patients
    by a partial Fisher-Yates shuffle of ``patients`` driven by ``picks``
    (``picks[a]`` uniform on ``[0, P - j)`` for the j-th accident of its
    episode). Stations are all free at the start of an episode. Returns
    ``(times, nodes, station_rows)`` with station row ``-1`` for an accident
    given the shortage time, or ``None`` if a station was needed but none
    was free and shortage is not allowed.
    """
    n_stations = dist.shape[0]
    n_pat = len(patients)
    total = int(sum(sizes))
    times = np.empty(total)
    nodes = np.empty(total, dtype=np.int64)
    rows = np.empty(total, dtype=np.int64)
    dist_l = dist.tolist()
    patients = list(patients)
    picks = list(picks)
    a = 0
    for size in sizes:
        pool = list(patients)
        busy = [False] * n_stations
        for j in range(size):
            r = picks[a]
            last = n_pat - 1 - j
            p = pool[r]
            pool[r] = pool[last]
            pool[last] = p
            best = -1
            for s in range(n_stations):
                if not busy[s] and (best < 0 or dist_l[s][p] < dist_l[best][p]):
                    best = s
            nodes[a] = p
            if best < 0:
                if not allow_shortage:
                    return None
                times[a] = shortage_time
            else:
                busy[best] = True
                times[a] = dist_l[best][p]
            rows[a] = best
            a += 1
    return times, nodes, rows
