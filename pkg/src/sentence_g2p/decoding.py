"""Beam search over the attention decoder with CTC and LM score fusion.

Each hypothesis carries three running totals: attention log-probability,
CTC prefix log-probability, and language-model log-probability. The ranking
score is their convex/weighted mix

    (1 - ctc_weight) * att + ctc_weight * ctc + lm_weight * lm

recomputed from totals at every step (never from increments). The search is
token-synchronous: all live hypotheses extend by one token per iteration,
candidates compete jointly for the beam, and hypotheses that emit the
end-of-sequence token retire from the beam into the finished pool. Length
normalization (by emitted token count, end token included) applies only at
final ranking.

The end token is a candidate only when its attention log-probability exceeds
``eos_threshold`` times the best non-end log-probability (both negative, so
larger thresholds admit it more rarely); 0 disables the gate. The search
stops once beam_size hypotheses have finished or the step limit is reached;
if nothing finished within the limit, the surviving unfinished hypotheses
are returned flagged ``finished=False``.

With beam_size=1, zero fusion weights, and the gate disabled this reduces
exactly to greedy decoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import numerics as nm
from .ctc import CTCPrefixScorer, PrefixState
from .model import DecoderState, EncoderOutput, Model
from .phoneme_lm import PhonemeLM


@dataclass
class BeamConfig:
    beam_size: int = 16
    ctc_weight: float = 0.4
    lm_weight: float = 0.3
    eos_threshold: float = 1.5
    max_len: Optional[int] = None  # None resolves to 2*frames + 10
    length_normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.ctc_weight <= 1.0:
            raise ValueError("ctc_weight must be in [0, 1]")
        if self.lm_weight < 0.0:
            raise ValueError("lm_weight must be >= 0")
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")


@dataclass
class Hypothesis:
    tokens: List[int]
    att_total: float
    ctc_total: float
    lm_total: float
    dec_hidden: List[np.ndarray]  # one (H,) row per decoder layer
    ctc_state: Optional[PrefixState]
    lm_hidden: Optional[List[np.ndarray]]

    def combined(self, cfg: BeamConfig) -> float:
        s = (1.0 - cfg.ctc_weight) * self.att_total
        if cfg.ctc_weight:
            s += cfg.ctc_weight * self.ctc_total
        if cfg.lm_weight:
            s += cfg.lm_weight * self.lm_total
        return s


@dataclass
class ScoredHypothesis:
    tokens: List[int]  # emitted ids, end token excluded
    score: float  # ranking score (length-normalized when configured)
    att_total: float
    ctc_total: float
    lm_total: float
    finished: bool = True  # False: ran out of steps before the end token


def _stack_states(hyps: List[Hypothesis], layers: int) -> DecoderState:
    return DecoderState(
        [nm.constant(np.stack([h.dec_hidden[l] for h in hyps])) for l in range(layers)]
    )


def _stack_lm_states(hyps: List[Hypothesis], layers: int):
    return [nm.constant(np.stack([h.lm_hidden[l] for h in hyps])) for l in range(layers)]


def beam_search(
    model: Model,
    enc: EncoderOutput,
    eos_id: int,
    config: Optional[BeamConfig] = None,
    ctc_logp: Optional[np.ndarray] = None,
    blank_id: Optional[int] = None,
    lm: Optional[PhonemeLM] = None,
) -> List[ScoredHypothesis]:
    """N-best decoding of one encoded sentence (enc must have batch size 1).

    ctc_logp is the (T, V) CTC head output for the sentence; required when
    config.ctc_weight > 0, along with blank_id. lm is required when
    config.lm_weight > 0.
    """
    cfg = config or BeamConfig()
    if enc.mask.shape[0] != 1:
        raise ValueError("beam_search decodes one sentence at a time")
    T = enc.lengths[0]
    if T < 1:
        raise ValueError("empty input")
    max_len = cfg.max_len if cfg.max_len is not None else 2 * T + 10

    scorer = None
    if cfg.ctc_weight > 0.0:
        if ctc_logp is None or blank_id is None:
            raise ValueError("ctc_weight > 0 needs ctc_logp and blank_id")
        scorer = CTCPrefixScorer(np.asarray(ctc_logp, dtype=np.float64), blank_id)
        real_cands = np.array([c for c in range(ctc_logp.shape[1]) if c != blank_id], dtype=np.int64)
    if cfg.lm_weight > 0.0 and lm is None:
        raise ValueError("lm_weight > 0 needs a language model")

    n_layers = model.config.dec_layers
    dt = model.config.np_dtype
    zeros = [np.zeros(model.config.dec_hidden, dtype=dt) for _ in range(n_layers)]
    lm_zeros = (
        [np.zeros(lm.config.hidden, dtype=lm.config.np_dtype) for _ in range(lm.config.layers)]
        if (lm is not None and cfg.lm_weight > 0.0)
        else None
    )
    root = Hypothesis(
        tokens=[],
        att_total=0.0,
        ctc_total=0.0,
        lm_total=0.0,
        dec_hidden=zeros,
        ctc_state=scorer.initial_state() if scorer else None,
        lm_hidden=lm_zeros,
    )
    live = [root]
    finished: List[ScoredHypothesis] = []

    with nm.no_grad():
        for _step in range(max_len):
            B = len(live)
            prev = np.array([h.tokens[-1] if h.tokens else eos_id for h in live], dtype=np.int64)
            att_logp, new_state, _ = model.step(enc, _stack_states(live, n_layers), prev)
            att_logp = att_logp.data
            new_hidden = [h.data for h in new_state.hidden]

            if lm_zeros is not None:
                lm_logp_t, lm_new = lm.step(_stack_lm_states(live, lm.config.layers), prev)
                lm_logp = lm_logp_t.data
                lm_new_hidden = [h.data for h in lm_new]
            else:
                lm_logp = None

            # candidate tuple: (neg combined, token, parent, hypothesis)
            candidates: List[Tuple[float, int, int, Hypothesis]] = []
            for b, hyp in enumerate(live):
                dec_hidden = [arr[b] for arr in new_hidden]
                lm_hidden = [arr[b] for arr in lm_new_hidden] if lm_zeros is not None else None
                row = att_logp[b]
                non_eos = np.delete(row, eos_id)
                best_other = float(non_eos.max()) if non_eos.size else -np.inf

                if scorer is not None:
                    psi, ctc_states = scorer.extend(hyp.ctc_state, real_cands)

                for c in range(row.shape[0]):
                    if c == eos_id:
                        continue
                    att_total = hyp.att_total + float(row[c])
                    if scorer is not None:
                        ci = c if c < blank_id else c - 1  # index into real_cands
                        ctc_total = float(psi[ci])
                        ctc_state = ctc_states[ci]
                    else:
                        ctc_total = 0.0
                        ctc_state = None
                    lm_total = hyp.lm_total + (float(lm_logp[b, c]) if lm_logp is not None else 0.0)
                    cand = Hypothesis(
                        tokens=hyp.tokens + [c],
                        att_total=att_total,
                        ctc_total=ctc_total,
                        lm_total=lm_total,
                        dec_hidden=dec_hidden,
                        ctc_state=ctc_state,
                        lm_hidden=lm_hidden,
                    )
                    candidates.append((-cand.combined(cfg), c, b, cand))

                admit_eos = (
                    cfg.eos_threshold == 0.0
                    or float(row[eos_id]) > cfg.eos_threshold * best_other
                )
                if admit_eos:
                    att_total = hyp.att_total + float(row[eos_id])
                    ctc_total = scorer.full_score(hyp.ctc_state) if scorer is not None else 0.0
                    lm_total = hyp.lm_total + (
                        float(lm_logp[b, eos_id]) if lm_logp is not None else 0.0
                    )
                    cand = Hypothesis(
                        tokens=hyp.tokens,
                        att_total=att_total,
                        ctc_total=ctc_total,
                        lm_total=lm_total,
                        dec_hidden=dec_hidden,
                        ctc_state=None,
                        lm_hidden=lm_hidden,
                    )
                    candidates.append((-cand.combined(cfg), eos_id, b, cand))

            candidates.sort(key=lambda t: (t[0], t[1], t[2]))
            new_live: List[Hypothesis] = []
            for neg, token, parent, cand in candidates[: cfg.beam_size]:
                if token == eos_id:
                    n_tok = len(cand.tokens) + 1  # count the end token
                    score = -neg / n_tok if cfg.length_normalize else -neg
                    finished.append(
                        ScoredHypothesis(
                            tokens=cand.tokens,
                            score=score,
                            att_total=cand.att_total,
                            ctc_total=cand.ctc_total,
                            lm_total=cand.lm_total,
                            finished=True,
                        )
                    )
                else:
                    new_live.append(cand)
            live = new_live
            if not live or len(finished) >= cfg.beam_size:
                break

    if not finished:
        # nothing reached the end token within max_len: surface the best
        # unfinished hypotheses, flagged so callers can warn
        for hyp in live:
            total = hyp.combined(cfg)
            n_tok = max(1, len(hyp.tokens))
            score = total / n_tok if cfg.length_normalize else total
            finished.append(
                ScoredHypothesis(
                    tokens=hyp.tokens,
                    score=score,
                    att_total=hyp.att_total,
                    ctc_total=hyp.ctc_total,
                    lm_total=hyp.lm_total,
                    finished=False,
                )
            )

    finished.sort(key=lambda h: (-h.score, h.tokens))
    return finished


def transcribe_ids(
    model: Model,
    char_ids: Sequence[int],
    eos_id: int,
    config: Optional[BeamConfig] = None,
    blank_id: Optional[int] = None,
    lm: Optional[PhonemeLM] = None,
    word_vecs: Optional[np.ndarray] = None,
) -> List[ScoredHypothesis]:
    """Encode one grapheme-id sequence and beam-decode it."""
    cfg = config or BeamConfig()
    ids = np.asarray(char_ids, dtype=np.int64)[None, :]
    wv = None
    if word_vecs is not None:
        wv = np.asarray(word_vecs)[None, :, :]
    with nm.no_grad():
        enc = model.encode(ids, [ids.shape[1]], word_vecs=wv)
        ctc_logp = None
        if cfg.ctc_weight > 0.0:
            ctc_logp = model.ctc_log_probs(enc).data[0]
    return beam_search(
        model, enc, eos_id, cfg, ctc_logp=ctc_logp, blank_id=blank_id, lm=lm
    )
