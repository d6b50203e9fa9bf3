"""Shared fixtures and oracles: finite-difference gradient checking and
brute-force CTC enumeration."""

import itertools
import math

import numpy as np
import pytest

import sentence_g2p.numerics as nm


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# -- finite differences -------------------------------------------------------


def rescale_params(params, rng, scale=0.8):
    """Redraw parameters at uniform(-scale, scale).

    At fan-in initialization some gradients (notably the attention query
    projection) sit at ~1e-10 because a uniform shift of all attention
    scores cancels in the softmax; finite differences cannot resolve them.
    Larger weights break that near-symmetry without changing the math
    being checked.
    """
    for p in params.values():
        p.data = rng.uniform(-scale, scale, size=p.data.shape).astype(p.data.dtype)


def fd_max_rel_err(loss_fn, params, rng, eps=1e-5, directions=1):
    """Max relative error between analytic and central-difference
    directional derivatives, one random unit direction per parameter.

    loss_fn() must rebuild the graph from the parameters' current data
    and return a scalar Tensor.
    """
    loss = loss_fn()
    nm.zero_grads(params.values())
    nm.backward(loss)
    grads = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
             for k, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        for _ in range(directions):
            d = rng.standard_normal(p.data.shape)
            d /= max(np.linalg.norm(d), 1e-12)
            analytic = float((grads[name] * d).sum())
            saved = p.data.copy()
            p.data = saved + eps * d
            f_plus = loss_fn().item()
            p.data = saved - eps * d
            f_minus = loss_fn().item()
            p.data = saved
            fd = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(fd - analytic) / max(1e-8, abs(fd), abs(analytic))
            worst = max(worst, rel)
    return worst


# -- CTC enumeration oracles ---------------------------------------------------


def collapse(path, blank):
    """CTC collapse: merge repeats, then drop blanks."""
    out = []
    prev = None
    for s in path:
        if s != prev and s != blank:
            out.append(s)
        prev = s
    return tuple(out)


def random_logp(rng, T, V):
    """Valid (T, V) log-distribution rows."""
    x = rng.standard_normal((T, V))
    x -= x.max(axis=-1, keepdims=True)
    x -= np.log(np.exp(x).sum(axis=-1, keepdims=True))
    return x


def enum_ctc_nll(logp, target, blank):
    """-log P(target) by summing every frame path that collapses to it."""
    T, V = logp.shape
    target = tuple(target)
    total = -math.inf
    for path in itertools.product(range(V), repeat=T):
        if collapse(path, blank) == target:
            lp = sum(logp[t, s] for t, s in enumerate(path))
            total = np.logaddexp(total, lp)
    return -total


def enum_prefix_logprob(logp, prefix, blank):
    """log P(collapsed output starts with prefix), by enumeration."""
    T, V = logp.shape
    prefix = tuple(prefix)
    k = len(prefix)
    total = -math.inf
    for path in itertools.product(range(V), repeat=T):
        if collapse(path, blank)[:k] == prefix:
            lp = sum(logp[t, s] for t, s in enumerate(path))
            total = np.logaddexp(total, lp)
    return total
