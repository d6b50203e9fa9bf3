"""Loss terms: selection weights, span restriction, combination invariant."""

import math

import numpy as np
import pytest

import sentence_g2p.numerics as nm
from sentence_g2p.objectives import (
    combine_losses,
    ctc_loss,
    ctc_loss_mean,
    homograph_loss,
    nll_loss,
    span_weights,
    token_weights,
)

from conftest import random_logp


def uniform_logp(U, V):
    return nm.constant(np.full((U, V), -math.log(V)))


class TestNLL:
    def test_uniform_distribution_gives_log_v(self):
        V = 43
        loss = nll_loss(uniform_logp(5, V), [0, 1, 2, 3, 4])
        assert abs(loss.item() - math.log(V)) < 1e-12

    def test_mean_over_unmasked_positions(self, rng):
        logp = nm.constant(random_logp(rng, 4, 6))
        tgt = [1, 2, 3, 4]
        mask = [True, False, True, False]
        want = -(logp.data[0, 1] + logp.data[2, 3]) / 2
        assert abs(nll_loss(logp, tgt, mask).item() - want) < 1e-12

    def test_validation(self, rng):
        logp = nm.constant(random_logp(rng, 3, 4))
        with pytest.raises(ValueError, match="one id per"):
            nll_loss(logp, [0, 1])
        with pytest.raises(ValueError, match="range"):
            nll_loss(logp, [0, 1, 9])
        with pytest.raises(ValueError, match="masked"):
            nll_loss(logp, [0, 1, 2], [False, False, False])

    def test_gradient_flows(self, rng):
        x = nm.param(rng.standard_normal((3, 5)))
        loss = nll_loss(nm.log_softmax(x), [0, 1, 2])
        nm.backward(loss)
        assert x.grad is not None and np.isfinite(x.grad).all()


class TestHomographLoss:
    def test_span_restriction(self, rng):
        logp = nm.constant(random_logp(rng, 6, 5))
        tgt = [0, 1, 2, 3, 4, 0]
        want = -(logp.data[2, 2] + logp.data[3, 3]) / 2
        assert abs(homograph_loss(logp, tgt, (2, 4)).item() - want) < 1e-12

    def test_invalid_span(self, rng):
        logp = nm.constant(random_logp(rng, 4, 5))
        for span in [(2, 2), (-1, 2), (3, 9)]:
            with pytest.raises(ValueError):
                homograph_loss(logp, [0, 1, 2, 3], span)


class TestBatchWeights:
    def test_token_weights_per_example_mean(self):
        tgt = np.array([[1, 2, 0], [3, 0, 0]])
        w = token_weights(tgt, [3, 1], n_out=5)
        assert w.shape == (2, 3, 5)
        # example 0: three tokens at 1/(2*3); example 1: one token at 1/(2*1)
        assert abs(w[0].sum() - 0.5) < 1e-12
        assert abs(w[1].sum() - 0.5) < 1e-12
        assert w[0, 0, 1] == pytest.approx(1 / 6)
        assert w[1, 0, 3] == pytest.approx(1 / 2)
        assert w[1, 1:].sum() == 0  # padding has no weight

    def test_span_weights_normalization(self):
        tgt = np.array([[1, 2, 3, 4], [2, 3, 4, 1]])
        w = span_weights(tgt, [(1, 3), None], n_out=5)
        assert abs(w.sum() - 1.0) < 1e-12
        assert w[1].sum() == 0
        assert span_weights(tgt, [None, None], n_out=5) is None

    def test_batch_size_invariance_of_scale(self, rng):
        # duplicating an example leaves the per-token scale of its own
        # weights halved and the total constant: a mean over examples
        tgt = np.array([[1, 2]])
        w1 = token_weights(tgt, [2], n_out=4)
        w2 = token_weights(np.repeat(tgt, 2, axis=0), [2, 2], n_out=4)
        assert abs(w1.sum() - w2.sum()) < 1e-12


class TestCTCLoss:
    def test_single_example_is_raw_nll(self, rng):
        # per-frame normalization happens in the batched mean, not here
        logp_np = random_logp(rng, 4, 3)
        loss = ctc_loss(nm.constant(logp_np), [0, 1], blank=2)
        from sentence_g2p.ctc import ctc_loss_grad

        raw, _, _ = ctc_loss_grad(logp_np, [0, 1], 2)
        assert abs(loss.item() - raw) < 1e-12

    def test_infeasible_returns_none(self, rng):
        assert ctc_loss(nm.constant(random_logp(rng, 1, 3)), [0, 1], blank=2) is None

    def test_batch_mean_skips_infeasible(self, rng):
        B, T, V = 3, 4, 3
        logp = nm.constant(np.stack([random_logp(rng, T, V) for _ in range(B)]))
        targets = [[0], [0, 1], [0, 1, 0, 1, 0]]  # last one infeasible at T=4
        res = ctc_loss_mean(logp, [T, T, T], targets, blank=V - 1)
        assert res.n_feasible == 2 and res.n_skipped == 1
        from sentence_g2p.ctc import ctc_loss_grad

        want = sum(
            ctc_loss_grad(logp.data[b], targets[b], V - 1)[0] / T for b in range(2)
        ) / 2
        assert abs(res.loss.item() - want) < 1e-12

    def test_batch_gradient_matches_fd(self, rng):
        B, T, V = 2, 3, 3
        x = nm.param(rng.standard_normal((B, T, V)))
        targets = [[0], [1, 0]]

        def loss_fn():
            return ctc_loss_mean(nm.log_softmax(x), [T, T], targets, blank=V - 1).loss

        loss = loss_fn()
        nm.backward(loss)
        g = x.grad.copy()
        eps = 1e-6
        for b, t, v in [(0, 0, 0), (1, 2, 1), (1, 0, 2)]:
            saved = x.data[b, t, v]
            x.data[b, t, v] = saved + eps
            up = loss_fn().item()
            x.data[b, t, v] = saved - eps
            down = loss_fn().item()
            x.data[b, t, v] = saved
            assert abs((up - down) / (2 * eps) - g[b, t, v]) < 1e-5


class TestCombine:
    def test_breakdown_invariant(self, rng):
        nll = nm.constant(np.array(1.25))
        hg = nm.constant(np.array(0.5))
        ctc = nm.constant(np.array(2.0))
        total, bd = combine_losses(nll, hg, ctc, lambda_h=2.0, lambda_c=0.5, ctc_skipped=3)
        assert abs(bd.total - (bd.nll + 2.0 * bd.homograph + 0.5 * bd.ctc)) <= 1e-12
        assert abs(total.item() - 3.25) < 1e-12
        assert bd.ctc_skipped == 3

    def test_lambda_linearity(self):
        nll = nm.constant(np.array(1.0))
        hg = nm.constant(np.array(0.7))
        for lam in [0.0, 1.0, 2.0, 5.0]:
            total, _ = combine_losses(nll, hg, None, lambda_h=lam, lambda_c=0.5)
            assert abs(total.item() - (1.0 + lam * 0.7)) < 1e-12

    def test_missing_terms_are_zero(self):
        total, bd = combine_losses(nm.constant(np.array(1.0)), None, None, 2.0, 0.5)
        assert total.item() == 1.0
        assert bd.homograph == 0.0 and bd.ctc == 0.0
