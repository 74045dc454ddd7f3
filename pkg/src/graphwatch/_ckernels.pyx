# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``.

Road graphs here have tens of vertices, so Dijkstra selects the next vertex
by a linear scan instead of a heap; scanning in index order reproduces the
heap's lower-index tie-breaking exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def dijkstra(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
             const double[::1] weights, Py_ssize_t source):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_arr = np.full(n, np.inf)
    pred_arr = np.full(n, -1, dtype=np.int64)
    done_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] dist = dist_arr
    cdef cnp.int64_t[::1] pred = pred_arr
    cdef unsigned char[::1] done = done_arr
    cdef Py_ssize_t it, i, u, v, p
    cdef double best, nd
    dist[source] = 0.0
    for it in range(n):
        u = -1
        best = INFINITY
        for i in range(n):
            if not done[i] and dist[i] < best:
                best = dist[i]
                u = i
        if u < 0:
            break
        done[u] = 1
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            if done[v]:
                continue
            nd = best + weights[p]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
    return dist_arr, pred_arr


def gmm_aggregate(const double[:, :, ::1] z, const double[:, ::1] w,
                  const cnp.int64_t[::1] src, const cnp.int64_t[::1] dst,
                  Py_ssize_t n_nodes):
    cdef Py_ssize_t n_msg = w.shape[0], n_k = w.shape[1], n_out = z.shape[2]
    out_arr = np.zeros((n_nodes, n_out))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t m, k, o, s, d
    cdef double wk, scale = 1.0 / n_k
    for m in range(n_msg):
        s = src[m]
        d = dst[m]
        for k in range(n_k):
            wk = w[m, k] * scale
            for o in range(n_out):
                out[d, o] += wk * z[s, k, o]
    return out_arr


def gmm_aggregate_backward(const double[:, :, ::1] z, const double[:, ::1] w,
                           const cnp.int64_t[::1] src, const cnp.int64_t[::1] dst,
                           const double[:, ::1] grad_out):
    cdef Py_ssize_t n_msg = w.shape[0], n_k = w.shape[1], n_out = z.shape[2]
    grad_z_arr = np.zeros((z.shape[0], n_k, n_out))
    grad_w_arr = np.zeros((n_msg, n_k))
    cdef double[:, :, ::1] grad_z = grad_z_arr
    cdef double[:, ::1] grad_w = grad_w_arr
    cdef Py_ssize_t m, k, o, s, d
    cdef double acc, wk, scale = 1.0 / n_k
    for m in range(n_msg):
        s = src[m]
        d = dst[m]
        for k in range(n_k):
            acc = 0.0
            wk = w[m, k] * scale
            for o in range(n_out):
                acc += z[s, k, o] * grad_out[d, o]
                grad_z[s, k, o] += wk * grad_out[d, o]
            grad_w[m, k] = acc * scale
    return grad_z_arr, grad_w_arr


def serve_episodes(const double[:, ::1] dist, const cnp.int64_t[::1] patients,
                   const cnp.int64_t[::1] sizes, const cnp.int64_t[::1] picks,
                   double shortage_time, bint allow_shortage):
    cdef Py_ssize_t n_stations = dist.shape[0], n_pat = patients.shape[0]
    cdef Py_ssize_t total = 0, e, j, s, best, a = 0, last, r, p
    for e in range(sizes.shape[0]):
        total += sizes[e]
    times_arr = np.empty(total)
    nodes_arr = np.empty(total, dtype=np.int64)
    rows_arr = np.empty(total, dtype=np.int64)
    pool_arr = np.empty(n_pat, dtype=np.int64)
    busy_arr = np.empty(n_stations, dtype=np.uint8)
    cdef double[::1] times = times_arr
    cdef cnp.int64_t[::1] nodes = nodes_arr
    cdef cnp.int64_t[::1] rows = rows_arr
    cdef cnp.int64_t[::1] pool = pool_arr
    cdef unsigned char[::1] busy = busy_arr
    for e in range(sizes.shape[0]):
        pool[:] = patients
        busy[:] = 0
        for j in range(sizes[e]):
            r = picks[a]
            last = n_pat - 1 - j
            p = pool[r]
            pool[r] = pool[last]
            pool[last] = p
            best = -1
            for s in range(n_stations):
                if not busy[s] and (best < 0 or dist[s, p] < dist[best, p]):
                    best = s
            nodes[a] = p
            if best < 0:
                if not allow_shortage:
                    return None
                times[a] = shortage_time
            else:
                busy[best] = 1
                times[a] = dist[best, p]
            rows[a] = best
            a += 1
    return times_arr, nodes_arr, rows_arr
