# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; semantics identical to exitkit._kernels._pykernels."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def first_exceed(double[:, ::1] scores, double threshold):
    """Per row, the first column index with score >= threshold."""
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t m = scores.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    cdef Py_ssize_t i, j, k
    for i in range(n):
        k = m
        for j in range(m):
            if scores[i, j] >= threshold:
                k = j
                break
        ov[i] = k
    return out


def smooth_sorted(
    double[::1] conf,
    double[::1] weight,
    cnp.int64_t[::1] orig_index,
    cnp.int64_t[::1] run_start,
    cnp.int64_t[::1] run_end,
    double[::1] run_conf,
    double[::1] run_wsum,
    cnp.int64_t[::1] run_of,
    Py_ssize_t h,
):
    """Mean weight over each sample's h nearest neighbors by confidence."""
    cdef Py_ssize_t n = conf.shape[0]
    cdef Py_ssize_t n_runs = run_start.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t p, r, q, left, right, a, a_end, b, b_end
    cdef Py_ssize_t need, cnt
    cdef double total, dl, dr
    cdef double inf = float("inf")
    for p in range(n):
        r = run_of[p]
        total = weight[p]
        need = h - 1
        cnt = run_end[r] - run_start[r] - 1
        if need >= cnt:
            total += run_wsum[r] - weight[p]
            need -= cnt
        else:
            q = run_start[r]
            while need > 0:
                if q != p:
                    total += weight[q]
                    need -= 1
                q += 1
        left = r - 1
        right = r + 1
        while need > 0:
            dl = conf[p] - run_conf[left] if left >= 0 else inf
            dr = run_conf[right] - conf[p] if right < n_runs else inf
            if dl < dr:
                cnt = run_end[left] - run_start[left]
                if need >= cnt:
                    total += run_wsum[left]
                    need -= cnt
                else:
                    q = run_start[left]
                    while need > 0:
                        total += weight[q]
                        need -= 1
                        q += 1
                left -= 1
            elif dr < dl:
                cnt = run_end[right] - run_start[right]
                if need >= cnt:
                    total += run_wsum[right]
                    need -= cnt
                else:
                    q = run_start[right]
                    while need > 0:
                        total += weight[q]
                        need -= 1
                        q += 1
                right += 1
            else:
                cnt = (
                    run_end[left]
                    - run_start[left]
                    + run_end[right]
                    - run_start[right]
                )
                if need >= cnt:
                    total += run_wsum[left] + run_wsum[right]
                    need -= cnt
                    left -= 1
                    right += 1
                else:
                    a = run_start[left]
                    a_end = run_end[left]
                    b = run_start[right]
                    b_end = run_end[right]
                    while need > 0:
                        if b >= b_end or (
                            a < a_end and orig_index[a] < orig_index[b]
                        ):
                            total += weight[a]
                            a += 1
                        else:
                            total += weight[b]
                            b += 1
                        need -= 1
        ov[p] = total / h
    return out
