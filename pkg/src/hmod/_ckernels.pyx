# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def od_counts(const cnp.int64_t[:] origins, const cnp.int64_t[:] dests, Py_ssize_t n):
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.zeros((n, n), dtype=np.int64)
    cdef cnp.int64_t[:, :] view = out
    cdef Py_ssize_t i
    for i in range(origins.shape[0]):
        view[origins[i], dests[i]] += 1
    return out


cdef Py_ssize_t _pick(double* cum, Py_ssize_t m, double u) nogil:
    cdef double target = u * cum[m - 1]
    cdef Py_ssize_t i
    for i in range(m):
        if cum[i] > target:
            return i
    return m - 1


def demand_walks(const double[:, :] demand, const cnp.int64_t[:] anchors,
                 const double[:, :, :] uniforms, double smoothing):
    cdef Py_ssize_t n = demand.shape[0]
    cdef Py_ssize_t n_anchor = uniforms.shape[0]
    cdef Py_ssize_t n_walk = uniforms.shape[1]
    cdef Py_ssize_t length = uniforms.shape[2]
    out_arr = np.empty((n_anchor, n_walk, length), dtype=np.int64)
    cdef cnp.int64_t[:, :, :] out = out_arr
    cum_arr = np.empty(n, dtype=np.float64)
    cdef double[:] cum = cum_arr
    cdef Py_ssize_t a, w, j, k, cur
    cdef bint forward
    cdef double run
    for a in range(n_anchor):
        for w in range(n_walk):
            cur = anchors[a]
            forward = w % 2 == 0
            for j in range(length):
                run = 0.0
                for k in range(n):
                    if forward:
                        run = run + (demand[cur, k] + smoothing)
                    else:
                        run = run + (demand[k, cur] + smoothing)
                    cum[k] = run
                cur = _pick(&cum[0], n, uniforms[a, w, j])
                out[a, w, j] = cur
                forward = not forward
    return out_arr


cdef Py_ssize_t _lower_bound(const double[:] times, Py_ssize_t lo, Py_ssize_t hi, double x) nogil:
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if times[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _upper_bound(const double[:] times, Py_ssize_t lo, Py_ssize_t hi, double x) nogil:
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if times[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def decay_walks(const cnp.int64_t[:] out_ptr, const double[:] out_time, const cnp.int64_t[:] out_nbr,
                const cnp.int64_t[:] in_ptr, const double[:] in_time, const cnp.int64_t[:] in_nbr,
                const cnp.int64_t[:] anchors, double t, double horizon, double timescale,
                const double[:, :, :] uniforms):
    cdef Py_ssize_t n_anchor = uniforms.shape[0]
    cdef Py_ssize_t n_walk = uniforms.shape[1]
    cdef Py_ssize_t length = uniforms.shape[2]
    nodes_arr = np.empty((n_anchor, n_walk, length), dtype=np.int64)
    times_arr = np.empty((n_anchor, n_walk, length), dtype=np.float64)
    lengths_arr = np.zeros((n_anchor, n_walk), dtype=np.int64)
    cdef cnp.int64_t[:, :, :] nodes = nodes_arr
    cdef double[:, :, :] hat = times_arr
    cdef cnp.int64_t[:, :] lengths = lengths_arr
    cdef Py_ssize_t widest = max(out_time.shape[0], in_time.shape[0], 1)
    cum_arr = np.empty(widest, dtype=np.float64)
    cdef double[:] cum = cum_arr
    cdef const cnp.int64_t[:] ptr
    cdef const double[:] times
    cdef const cnp.int64_t[:] nbr
    cdef Py_ssize_t a, w, j, i, i0, i1, k, cur, steps
    cdef double t_hat, run
    cdef bint forward
    for a in range(n_anchor):
        for w in range(n_walk):
            cur = anchors[a]
            t_hat = t
            forward = w % 2 == 0
            steps = 0
            for j in range(length):
                if forward:
                    ptr = out_ptr
                    times = out_time
                    nbr = out_nbr
                else:
                    ptr = in_ptr
                    times = in_time
                    nbr = in_nbr
                i0 = _lower_bound(times, ptr[cur], ptr[cur + 1], t_hat - horizon)
                # first step strictly before t; later steps may reuse an edge at t_hat
                if j == 0:
                    i1 = _lower_bound(times, ptr[cur], ptr[cur + 1], t_hat)
                else:
                    i1 = _upper_bound(times, ptr[cur], ptr[cur + 1], t_hat)
                if i1 <= i0:
                    break
                run = 0.0
                for i in range(i0, i1):
                    run = run + exp(-(t_hat - times[i]) / timescale)
                    cum[i - i0] = run
                k = i0 + _pick(&cum[0], i1 - i0, uniforms[a, w, j])
                cur = nbr[k]
                t_hat = times[k]
                nodes[a, w, j] = cur
                hat[a, w, j] = t_hat
                steps += 1
                forward = not forward
            if steps == 0:
                cur = anchors[a]
            for j in range(steps, length):
                nodes[a, w, j] = cur
                hat[a, w, j] = t_hat
            lengths[a, w] = steps
    return nodes_arr, times_arr, lengths_arr
