"""Numpy reference kernels for CTC: loss forward-backward, prefix scoring.

These are the fallback implementations; ``_ctc_speed`` (compiled) provides
drop-in replacements with identical signatures and semantics. All inputs
are float64 log-probabilities (already log-softmaxed), shape (T, V).

Alpha and beta both include the emission of their own frame, so the state
posterior is alpha + beta - logp and the label occupancy divides by the total
path probability once.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

NEG_INF = -np.inf


def _extended(targets: np.ndarray, blank: int) -> Tuple[np.ndarray, np.ndarray]:
    """Blank-interleaved target row and the skip-transition mask."""
    U = targets.shape[0]
    S = 2 * U + 1
    ext = np.full(S, blank, dtype=np.int64)
    ext[1::2] = targets
    allow_skip = np.zeros(S, dtype=bool)
    if S > 2:
        allow_skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return ext, allow_skip


def forward_backward(logp: np.ndarray, targets: np.ndarray, blank: int):
    """CTC negative log-likelihood and its gradient w.r.t. logp.

    Returns (loss, grad, feasible). When the target cannot be emitted in T
    frames, loss is +inf, grad is zero, and feasible is False.
    """
    T, V = logp.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise ValueError("target id out of range")
    if np.any(targets == blank):
        raise ValueError("targets must not contain the blank id")
    ext, allow_skip = _extended(targets, blank)
    S = ext.shape[0]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = logp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = logp[0, ext[1]]
    emit = logp[:, ext]  # (T, S)
    for t in range(1, T):
        prev = alpha[t - 1]
        move = np.empty(S)
        move[0] = NEG_INF
        move[1:] = prev[:-1]
        skip = np.full(S, NEG_INF)
        if S > 2:
            skip[2:] = np.where(allow_skip[2:], prev[:-2], NEG_INF)
        alpha[t] = emit[t] + np.logaddexp(np.logaddexp(prev, move), skip)

    total = alpha[T - 1, S - 1]
    if S > 1:
        total = np.logaddexp(total, alpha[T - 1, S - 2])
    if total == NEG_INF:
        return np.inf, np.zeros_like(logp), False

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = logp[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = logp[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        move = np.empty(S)
        move[:-1] = nxt[1:]
        move[-1] = NEG_INF
        skip = np.full(S, NEG_INF)
        if S > 2:
            skip[:-2] = np.where(allow_skip[2:], nxt[2:], NEG_INF)
        beta[t] = emit[t] + np.logaddexp(np.logaddexp(nxt, move), skip)

    gamma = alpha + beta - emit
    post = np.exp(gamma - total)  # occupancy, safe in linear space
    grad = np.zeros_like(logp)
    np.add.at(grad, (np.arange(T)[:, None], ext[None, :]), post)
    return -float(total), -grad, True


def prefix_init(logp: np.ndarray, blank: int) -> np.ndarray:
    """Forward variables of the empty prefix: (T, 2) = [non-blank, blank]."""
    T = logp.shape[0]
    r = np.full((T, 2), NEG_INF)
    r[:, 1] = np.cumsum(logp[:, blank])
    return r


def prefix_extend(
    logp: np.ndarray,
    blank: int,
    r_prev: np.ndarray,
    out_len: int,
    last: int,
    cand: np.ndarray,
):
    """Score every one-token extension of a prefix.

    r_prev is the (T, 2) forward-variable table of the current prefix,
    out_len its length in emitted tokens, last its final token id (-1 when
    empty). Returns (psi, r_new) where psi[c] is the prefix log-probability
    of appending cand[c] and r_new is (C, T, 2) with the extended tables.
    """
    T = logp.shape[0]
    cand = np.asarray(cand, dtype=np.int64)
    C = cand.shape[0]
    xs = logp[:, cand]  # (T, C)

    r_sum = np.logaddexp(r_prev[:, 0], r_prev[:, 1])  # (T,)
    log_phi = np.broadcast_to(r_sum[:, None], (T, C)).copy()
    if out_len > 0 and last >= 0:
        same = cand == last
        if same.any():
            # A repeated token only arises via a separating blank.
            log_phi[:, same] = r_prev[:, 1:2]

    r = np.full((C, T, 2), NEG_INF)
    if out_len == 0:
        r[:, 0, 0] = xs[0]
        psi = xs[0].copy()
        start = 1
    else:
        psi = np.full(C, NEG_INF)
        start = out_len
    for t in range(start, T):
        r[:, t, 0] = np.logaddexp(r[:, t - 1, 0], log_phi[t - 1]) + xs[t]
        r[:, t, 1] = np.logaddexp(r[:, t - 1, 0], r[:, t - 1, 1]) + logp[t, blank]
        psi = np.logaddexp(psi, log_phi[t - 1] + xs[t])
    return psi, r
