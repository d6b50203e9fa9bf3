"""Phoneme-level recurrent language model for shallow fusion.

A GRU stack over output-token embeddings with a softmax head, trained on
next-token prediction over phoneme sequences (the same token inventory the
decoder emits, including the space and end-of-sequence tokens). The
end-of-sequence id doubles as the begin-of-sequence input.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint as ckpt
from . import numerics as nm
from . import objectives as obj
from .model import GRUCell
from .numerics import Tensor
from .optim import Adam, clip_global_norm


@dataclass
class LMConfig:
    n_tokens: int
    emb_dim: int = 256
    hidden: int = 512
    layers: int = 2
    dropout: float = 0.15
    dtype: str = "float64"

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict) -> "LMConfig":
        return cls(**d)


class PhonemeLM:
    def __init__(self, config: LMConfig, rng: np.random.Generator):
        self.config = config
        self.params: Dict[str, Tensor] = {}
        dt = config.np_dtype
        k_emb = 1.0 / np.sqrt(config.emb_dim)
        self.params["emb"] = nm.param(
            nm.uniform_init((config.n_tokens, config.emb_dim), k_emb, rng, dt)
        )
        for layer in range(config.layers):
            in_dim = config.emb_dim if layer == 0 else config.hidden
            GRUCell.init_params(self.params, f"gru.{layer}", in_dim, config.hidden, rng, dt)
        k_out = 1.0 / np.sqrt(config.hidden)
        self.params["out.w"] = nm.param(
            nm.uniform_init((config.hidden, config.n_tokens), k_out, rng, dt)
        )
        self.params["out.b"] = nm.param(np.zeros(config.n_tokens, dtype=dt))

    def parameters(self) -> Dict[str, Tensor]:
        return self.params

    def _cell(self, layer: int) -> GRUCell:
        return GRUCell(self.params, f"gru.{layer}", self.config.hidden)

    def init_state(self, B: int) -> List[Tensor]:
        dt = self.config.np_dtype
        return [
            nm.constant(np.zeros((B, self.config.hidden), dtype=dt))
            for _ in range(self.config.layers)
        ]

    def step(
        self,
        state: List[Tensor],
        prev_ids: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[Tensor, List[Tensor]]:
        """(B,) previous token ids -> ((B, V) log-probs, new state)."""
        x = nm.gather_rows(self.params["emb"], prev_ids)
        new_state = []
        for layer in range(self.config.layers):
            h = self._cell(layer).step(x, state[layer])
            new_state.append(h)
            x = nm.dropout(h, self.config.dropout, rng, training)
        logits = nm.add(nm.matmul(x, self.params["out.w"]), self.params["out.b"])
        return nm.log_softmax(logits), new_state

    def forward_teacher(
        self,
        prev_ids: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """(B, U) inputs -> (B, U, V) next-token log-probabilities."""
        B, U = prev_ids.shape
        state = self.init_state(B)
        outs = []
        for u in range(U):
            logp, state = self.step(state, prev_ids[:, u], training, rng)
            outs.append(nm.reshape(logp, (B, 1, -1)))
        return nm.concat(outs, axis=1)

    # -- persistence ----------------------------------------------------------

    def save(self, path, extra_meta: Optional[Dict] = None) -> None:
        meta = {"kind": "phoneme_lm", "config": self.config.to_dict()}
        if extra_meta:
            meta.update(extra_meta)
        arrays = {f"param.{k}": v.data for k, v in self.params.items()}
        ckpt.write_container(path, meta, arrays)

    @classmethod
    def load(cls, path) -> Tuple["PhonemeLM", Dict]:
        meta, arrays = ckpt.read_container(path)
        if meta.get("kind") != "phoneme_lm":
            raise ValueError(f"{path}: not a language-model checkpoint")
        config = LMConfig.from_dict(meta["config"])
        lm = cls(config, np.random.default_rng(0))
        for name, p in lm.params.items():
            p.data = arrays[f"param.{name}"].astype(config.np_dtype).copy()
        return lm, meta


def _batches(seqs: List[List[int]], batch_size: int, rng: np.random.Generator):
    order = rng.permutation(len(seqs))
    for i in range(0, len(order), batch_size):
        yield [seqs[j] for j in order[i : i + batch_size]]


def _teacher_arrays(batch: List[List[int]], eos_id: int) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    """Each sequence learns tokens + eos, with eos as the first input."""
    lens = [len(s) + 1 for s in batch]
    U = max(lens)
    B = len(batch)
    prev = np.full((B, U), eos_id, dtype=np.int64)
    tgt = np.full((B, U), eos_id, dtype=np.int64)
    for b, s in enumerate(batch):
        prev[b, 1 : len(s) + 1] = s
        tgt[b, : len(s)] = s
        tgt[b, len(s)] = eos_id
    return prev, tgt, lens


def evaluate_perplexity(lm: PhonemeLM, seqs: List[List[int]], eos_id: int, batch_size: int = 64):
    """Corpus perplexity: exp of total NLL over total predicted tokens."""
    total_nll = 0.0
    total_tokens = 0
    with nm.no_grad():
        for i in range(0, len(seqs), batch_size):
            batch = seqs[i : i + batch_size]
            prev, tgt, lens = _teacher_arrays(batch, eos_id)
            logp = lm.forward_teacher(prev).data
            for b, L in enumerate(lens):
                picked = logp[b, np.arange(L), tgt[b, :L]]
                total_nll -= float(picked.sum())
                total_tokens += L
    return float(np.exp(total_nll / max(total_tokens, 1)))


def train_lm(
    lm: PhonemeLM,
    train_seqs: List[List[int]],
    valid_seqs: List[List[int]],
    eos_id: int,
    epochs: int,
    batch_size: int = 32,
    lr: float = 1e-3,
    clip_norm: float = 5.0,
    rng: Optional[np.random.Generator] = None,
    log=None,
) -> List[Dict]:
    """Next-token training; returns per-epoch records with valid perplexity."""
    rng = rng or np.random.default_rng(0)
    optimizer = Adam(lm.parameters(), lr=lr)
    history = []
    for epoch in range(1, epochs + 1):
        epoch_loss = 0.0
        n_batches = 0
        for batch in _batches(train_seqs, batch_size, rng):
            prev, tgt, lens = _teacher_arrays(batch, eos_id)
            logp = lm.forward_teacher(prev, training=True, rng=rng)
            w = obj.token_weights(tgt, lens, lm.config.n_tokens, dtype=logp.data.dtype)
            loss = obj.nll_from_weights(logp, w)
            optimizer.zero_grad()
            nm.backward(loss)
            clip_global_norm(lm.parameters(), clip_norm)
            optimizer.step()
            epoch_loss += float(loss.data)
            n_batches += 1
        ppl = evaluate_perplexity(lm, valid_seqs, eos_id, batch_size)
        rec = {
            "epoch": epoch,
            "train_loss": epoch_loss / max(n_batches, 1),
            "valid_perplexity": ppl,
        }
        history.append(rec)
        if log is not None:
            log(rec)
    return history
