"""Training objectives: attention NLL, homograph-span NLL, CTC, combination.

Normalization conventions:
  * attention NLL: per-token mean within an example, then mean over the batch
  * homograph NLL: per-token mean over the tagged span, then mean over the
    span-carrying examples only
  * CTC: per-frame mean within an example, then mean over the examples whose
    target fits in the frame count (infeasible ones are skipped and counted)

The combined objective is nll + lambda_h * homograph + lambda_c * ctc.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import ctc as ctc_mod
from . import numerics as nm
from .numerics import Tensor


def nll_from_weights(logp: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar -(sum of logp * weights); weights fold selection and scaling."""
    w = nm.constant(np.asarray(weights, dtype=logp.data.dtype))
    return nm.mul(nm.sum(nm.mul(logp, w)), -1.0)


def nll_loss(logp: Tensor, targets: Sequence[int], mask: Optional[Sequence[bool]] = None) -> Tensor:
    """Mean -logp[u, targets[u]] over unmasked positions of one (U, V) example."""
    U, V = logp.shape
    tgt = np.asarray(targets, dtype=np.int64)
    if tgt.shape != (U,):
        raise ValueError("targets must have one id per log-prob row")
    if tgt.min() < 0 or tgt.max() >= V:
        raise ValueError("target id out of range")
    keep = np.ones(U, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    n = int(keep.sum())
    if n == 0:
        raise ValueError("all positions masked")
    w = np.zeros((U, V), dtype=logp.data.dtype)
    idx = np.flatnonzero(keep)
    w[idx, tgt[idx]] = 1.0 / n
    return nll_from_weights(logp, w)


def homograph_loss(logp: Tensor, targets: Sequence[int], span: Tuple[int, int]) -> Tensor:
    """nll_loss restricted to the half-open token range [start, end)."""
    U = logp.shape[0]
    start, end = span
    if not 0 <= start < end <= U:
        raise ValueError(f"span {span} outside target length {U}")
    keep = np.zeros(U, dtype=bool)
    keep[start:end] = True
    return nll_loss(logp, targets, keep)


def token_weights(
    targets: np.ndarray, lengths: Sequence[int], n_out: int, dtype=np.float64
) -> np.ndarray:
    """(B, U, V) one-hot weights for the per-token, per-example-mean NLL.

    targets is (B, U) padded; positions at or beyond lengths[b] get zero
    weight. Each example's tokens weigh 1/(B * lengths[b]).
    """
    B, U = targets.shape
    w = np.zeros((B, U, n_out), dtype=dtype)
    for b, L in enumerate(lengths):
        if L == 0:
            continue
        w[b, np.arange(L), targets[b, :L]] = 1.0 / (B * L)
    return w


def span_weights(
    targets: np.ndarray, spans: Sequence[Optional[Tuple[int, int]]], n_out: int, dtype=np.float64
) -> Optional[np.ndarray]:
    """(B, U, V) weights for the homograph loss; None if no example has a span.

    spans[b] is a half-open token range [start, end) or None. Tokens in a
    span weigh 1/(n_spans * span_len).
    """
    B, U = targets.shape
    n_spans = sum(1 for s in spans if s is not None)
    if n_spans == 0:
        return None
    w = np.zeros((B, U, n_out), dtype=dtype)
    for b, span in enumerate(spans):
        if span is None:
            continue
        start, end = span
        if not 0 <= start < end <= U:
            raise ValueError(f"span {span} outside target length {U}")
        w[b, np.arange(start, end), targets[b, start:end]] = 1.0 / (n_spans * (end - start))
    return w


def ctc_loss(logp: Tensor, targets: Sequence[int], blank: int) -> Optional[Tensor]:
    """Raw (unnormalized) CTC loss for one example; logp is (T, V).

    Registers a single tape node with the analytic gradient. Returns None
    when the target cannot be aligned to the frames.
    """
    loss, grad, feasible = ctc_mod.ctc_loss_grad(logp.data, targets, blank)
    if not feasible:
        return None

    def backward(g):
        return (g * grad,)

    out = np.asarray(loss)
    if logp.requires_grad or logp.node is not None:
        return Tensor(out, node=nm.TapeNode("ctc_loss", (logp,), backward))
    return Tensor(out)


@dataclass
class CTCBatchResult:
    loss: Optional[Tensor]  # mean over feasible examples of raw/frames
    n_feasible: int
    n_skipped: int


def ctc_loss_mean(
    logp: Tensor,
    frame_lengths: Sequence[int],
    targets: Sequence[Sequence[int]],
    blank: int,
) -> CTCBatchResult:
    """Batched CTC objective on (B, T, V) log-probs with per-example lengths."""
    B, T, V = logp.shape
    losses = []
    grads = np.zeros_like(logp.data, dtype=np.float64)
    n_skipped = 0
    for b in range(B):
        L = int(frame_lengths[b])
        loss, grad, feasible = ctc_mod.ctc_loss_grad(logp.data[b, :L], targets[b], blank)
        if not feasible:
            n_skipped += 1
            continue
        losses.append((b, L, loss, grad))
    n_feasible = len(losses)
    if n_feasible == 0:
        return CTCBatchResult(loss=None, n_feasible=0, n_skipped=n_skipped)

    total = 0.0
    for b, L, loss, grad in losses:
        total += loss / L
        grads[b, :L] += grad / (L * n_feasible)
    total /= n_feasible

    def backward(g):
        return (g * grads,)

    out = np.asarray(total)
    if logp.requires_grad or logp.node is not None:
        t = Tensor(out, node=nm.TapeNode("ctc_loss_mean", (logp,), backward))
    else:
        t = Tensor(out)
    return CTCBatchResult(loss=t, n_feasible=n_feasible, n_skipped=n_skipped)


@dataclass
class LossBreakdown:
    """Scalar values of the combined objective, for logging and invariants."""

    nll: float
    homograph: float
    ctc: float
    total: float
    lambda_h: float
    lambda_c: float
    ctc_skipped: int = 0


def combine_losses(
    nll: Tensor,
    homograph: Optional[Tensor],
    ctc: Optional[Tensor],
    lambda_h: float,
    lambda_c: float,
    ctc_skipped: int = 0,
) -> Tuple[Tensor, LossBreakdown]:
    """total = nll + lambda_h * homograph + lambda_c * ctc (missing parts 0)."""
    total = nll
    hg_val = 0.0
    ctc_val = 0.0
    if homograph is not None:
        total = nm.add(total, nm.mul(homograph, lambda_h))
        hg_val = float(homograph.data)
    if ctc is not None:
        total = nm.add(total, nm.mul(ctc, lambda_c))
        ctc_val = float(ctc.data)
    breakdown = LossBreakdown(
        nll=float(nll.data),
        homograph=hg_val,
        ctc=ctc_val,
        total=float(total.data),
        lambda_h=lambda_h,
        lambda_c=lambda_c,
        ctc_skipped=ctc_skipped,
    )
    return total, breakdown
