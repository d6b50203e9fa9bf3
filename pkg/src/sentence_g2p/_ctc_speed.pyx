# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CTC kernels: loss forward-backward and prefix scoring.

Same contracts as the numpy reference module; see _ctc_ref for the
documented semantics. Kept in lockstep by the backend parity tests.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log

cnp.import_array()

cdef inline double lae(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log(1.0 + exp(b - a))
    return b + log(1.0 + exp(a - b))


def forward_backward(cnp.ndarray[cnp.float64_t, ndim=2] logp_arr,
                     targets_arr,
                     int blank):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tg = np.ascontiguousarray(targets_arr, dtype=np.int64)
    cdef int T = logp_arr.shape[0]
    cdef int V = logp_arr.shape[1]
    cdef int U = tg.shape[0]
    cdef int S = 2 * U + 1
    cdef int t, s, k

    for s in range(U):
        if tg[s] < 0 or tg[s] >= V:
            raise ValueError("target id out of range")
        if tg[s] == blank:
            raise ValueError("targets must not contain the blank id")

    cdef cnp.ndarray[cnp.int64_t, ndim=1] ext_arr = np.full(S, blank, dtype=np.int64)
    ext_arr[1::2] = tg
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] skip_arr = np.zeros(S, dtype=np.uint8)
    for s in range(2, S):
        if ext_arr[s] != blank and ext_arr[s] != ext_arr[s - 2]:
            skip_arr[s] = 1

    cdef cnp.ndarray[cnp.float64_t, ndim=2] alpha_arr = np.full((T, S), -INFINITY)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] beta_arr = np.full((T, S), -INFINITY)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad_arr = np.zeros((T, V))
    cdef double[:, ::1] logp = logp_arr
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] grad = grad_arr
    cdef long[::1] ext = ext_arr
    cdef unsigned char[::1] skip = skip_arr
    cdef double acc, total

    with nogil:
        alpha[0, 0] = logp[0, ext[0]]
        if S > 1:
            alpha[0, 1] = logp[0, ext[1]]
        for t in range(1, T):
            for s in range(S):
                acc = alpha[t - 1, s]
                if s >= 1:
                    acc = lae(acc, alpha[t - 1, s - 1])
                if s >= 2 and skip[s]:
                    acc = lae(acc, alpha[t - 1, s - 2])
                alpha[t, s] = acc + logp[t, ext[s]]

        total = alpha[T - 1, S - 1]
        if S > 1:
            total = lae(total, alpha[T - 1, S - 2])

    if total == -INFINITY:
        return np.inf, grad_arr, False

    with nogil:
        beta[T - 1, S - 1] = logp[T - 1, ext[S - 1]]
        if S > 1:
            beta[T - 1, S - 2] = logp[T - 1, ext[S - 2]]
        for t in range(T - 2, -1, -1):
            for s in range(S):
                acc = beta[t + 1, s]
                if s + 1 < S:
                    acc = lae(acc, beta[t + 1, s + 1])
                if s + 2 < S and skip[s + 2]:
                    acc = lae(acc, beta[t + 1, s + 2])
                beta[t, s] = acc + logp[t, ext[s]]

        for t in range(T):
            for s in range(S):
                acc = alpha[t, s] + beta[t, s] - logp[t, ext[s]]
                if acc != -INFINITY:
                    grad[t, ext[s]] -= exp(acc - total)

    return -total, grad_arr, True


def prefix_init(cnp.ndarray[cnp.float64_t, ndim=2] logp_arr, int blank):
    cdef int T = logp_arr.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r_arr = np.full((T, 2), -INFINITY)
    cdef double[:, ::1] r = r_arr
    cdef double[:, ::1] logp = logp_arr
    cdef int t
    cdef double acc = 0.0
    for t in range(T):
        acc += logp[t, blank]
        r[t, 1] = acc
    return r_arr


def prefix_extend(cnp.ndarray[cnp.float64_t, ndim=2] logp_arr,
                  int blank,
                  cnp.ndarray[cnp.float64_t, ndim=2] r_prev_arr,
                  int out_len,
                  int last,
                  cand_arr):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cd = np.ascontiguousarray(cand_arr, dtype=np.int64)
    cdef int T = logp_arr.shape[0]
    cdef int C = cd.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] psi_arr = np.full(C, -INFINITY)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] r_arr = np.full((C, T, 2), -INFINITY)
    cdef double[:, ::1] logp = logp_arr
    cdef double[:, ::1] r_prev = r_prev_arr
    cdef double[:, :, ::1] r = r_arr
    cdef double[::1] psi = psi_arr
    cdef long[::1] cand = cd
    cdef int ci, t, start
    cdef long c
    cdef double phi, psi_c, xc

    with nogil:
        for ci in range(C):
            c = cand[ci]
            if out_len == 0:
                r[ci, 0, 0] = logp[0, c]
                psi_c = logp[0, c]
                start = 1
            else:
                psi_c = -INFINITY
                start = out_len
            for t in range(start, T):
                if out_len > 0 and c == last:
                    phi = r_prev[t - 1, 1]
                else:
                    phi = lae(r_prev[t - 1, 0], r_prev[t - 1, 1])
                xc = logp[t, c]
                r[ci, t, 0] = lae(r[ci, t - 1, 0], phi) + xc
                r[ci, t, 1] = lae(r[ci, t - 1, 0], r[ci, t - 1, 1]) + logp[t, blank]
                psi_c = lae(psi_c, phi + xc)
            psi[ci] = psi_c

    return psi_arr, r_arr
