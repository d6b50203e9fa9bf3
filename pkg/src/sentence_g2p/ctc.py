"""CTC kernel dispatch and the prefix-scorer wrapper.

The compiled extension is preferred when importable; set the environment
variable SENTENCE_G2P_NO_EXT=1 to force the numpy reference kernels. Both
backends expose forward_backward / prefix_init / prefix_extend with
identical numerics (covered by parity tests).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from . import _ctc_ref

if os.environ.get("SENTENCE_G2P_NO_EXT", "") in ("1", "true", "yes"):
    _backend = _ctc_ref
    _BACKEND_NAME = "numpy"
else:
    try:
        from . import _ctc_speed as _backend  # type: ignore[no-redef]

        _BACKEND_NAME = "cython"
    except ImportError:
        _backend = _ctc_ref
        _BACKEND_NAME = "numpy"


def backend_name() -> str:
    return _BACKEND_NAME


def ctc_loss_grad(logp: np.ndarray, targets: Sequence[int], blank: int):
    """Negative log-likelihood, d(loss)/d(logp), and a feasibility flag.

    logp is (T, V) log-probabilities; infeasible targets (longer than the
    frame count allows) give loss=inf, zero gradient, feasible=False.
    """
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    loss, grad, feasible = _backend.forward_backward(logp, targets, blank)
    return float(loss), grad, bool(feasible)


@dataclass
class PrefixState:
    """CTC forward variables of one decoded prefix."""

    r: np.ndarray  # (T, 2): [:, 0] non-blank, [:, 1] blank
    out_len: int
    last: int  # final token id, -1 for the empty prefix


class CTCPrefixScorer:
    """Incremental prefix log-probabilities over one encoded sentence.

    Built once per sentence from the CTC head's (T, V) log-probabilities,
    then queried per beam step: ``extend`` scores candidate next tokens,
    ``full_score`` gives the complete-sequence probability used when a
    hypothesis emits end-of-sequence.
    """

    def __init__(self, logp: np.ndarray, blank: int):
        self.logp = np.ascontiguousarray(logp, dtype=np.float64)
        if self.logp.ndim != 2:
            raise ValueError("prefix scorer expects (T, V) log-probabilities")
        self.blank = blank
        self._r0 = _backend.prefix_init(self.logp, blank)

    @property
    def n_frames(self) -> int:
        return self.logp.shape[0]

    def initial_state(self) -> PrefixState:
        return PrefixState(r=self._r0, out_len=0, last=-1)

    def extend(
        self, state: PrefixState, cand: Sequence[int]
    ) -> Tuple[np.ndarray, List[PrefixState]]:
        """Prefix scores and successor states for each candidate token."""
        cand = np.ascontiguousarray(cand, dtype=np.int64)
        psi, r_new = _backend.prefix_extend(
            self.logp, self.blank, state.r, state.out_len, state.last, cand
        )
        states = [
            PrefixState(r=r_new[i], out_len=state.out_len + 1, last=int(cand[i]))
            for i in range(cand.shape[0])
        ]
        return psi, states

    def full_score(self, state: PrefixState) -> float:
        """log P(prefix as the complete label sequence | inputs)."""
        return float(np.logaddexp(state.r[-1, 0], state.r[-1, 1]))
