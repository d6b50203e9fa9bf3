"""Sequence-to-sequence G2P model.

Encoder: grapheme embeddings (optionally concatenated with adapted word
vectors), a stack of bidirectional LSTM layers, dropout after every layer.
Two heads read the encoder states: a CTC projection and an additive
attention feeding a unidirectional GRU decoder. The decoder consumes
concat(prev-token embedding, attention context) per step and projects
concat(top hidden, context) to output log-probabilities.

All timestep loops share one batched forward: input-side matmuls are hoisted
out of the loop ((B, T, D) @ (D, K) once per layer), the recurrent matmuls
run per step on (B, H) matrices.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import numerics as nm
from .numerics import Tensor

MASK_OFF = -1e9  # additive attention mask for padded positions


@dataclass
class ModelConfig:
    n_graphemes: int
    n_dec_out: int
    n_ctc_out: int
    emb_dim: int = 512
    enc_hidden: int = 512  # total width; split across directions when bidirectional
    enc_layers: int = 4
    dec_hidden: int = 512
    dec_layers: int = 4
    att_dim: int = 0  # 0 resolves to dec_hidden
    dropout: float = 0.5
    bidirectional: bool = True
    word_vec_dim: int = 0  # 0 disables the word-vector branch
    word_adapter_dim: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.bidirectional and self.enc_hidden % 2:
            raise ValueError("enc_hidden must be even (split across directions)")
        if self.att_dim == 0:
            self.att_dim = self.dec_hidden
        if self.word_vec_dim > 0 and self.word_adapter_dim <= 0:
            raise ValueError("word-vector branch needs word_adapter_dim > 0")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    @property
    def uses_word_vectors(self) -> bool:
        return self.word_vec_dim > 0

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict) -> "ModelConfig":
        return cls(**d)


def _linear_init(rng, fan_in, shape, dtype):
    k = 1.0 / np.sqrt(fan_in)
    return nm.uniform_init(shape, k, rng, dtype)


class LSTMCell:
    """Fused-gate LSTM cell; gate order along the 4H axis is [i, f, g, o]."""

    def __init__(self, params: Dict[str, Tensor], prefix: str, hidden: int):
        self.wx = params[f"{prefix}.wx"]
        self.wh = params[f"{prefix}.wh"]
        self.b = params[f"{prefix}.b"]
        self.hidden = hidden

    @staticmethod
    def init_params(params, prefix, in_dim, hidden, rng, dtype):
        params[f"{prefix}.wx"] = nm.param(_linear_init(rng, in_dim, (in_dim, 4 * hidden), dtype))
        params[f"{prefix}.wh"] = nm.param(_linear_init(rng, hidden, (hidden, 4 * hidden), dtype))
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden : 2 * hidden] = 1.0  # forget-gate bias
        params[f"{prefix}.b"] = nm.param(b)

    def input_projection(self, x_btd: Tensor) -> Tensor:
        """Hoistable part of the gate preactivation: (B, T, 4H)."""
        return nm.matmul(x_btd, self.wx)

    def step(self, xproj_t: Tensor, h: Tensor, c: Tensor) -> Tuple[Tensor, Tensor]:
        H = self.hidden
        gates = nm.add(nm.add(xproj_t, nm.matmul(h, self.wh)), self.b)
        i = nm.sigmoid(nm.narrow(gates, 1, 0, H))
        f = nm.sigmoid(nm.narrow(gates, 1, H, H))
        g = nm.tanh(nm.narrow(gates, 1, 2 * H, H))
        o = nm.sigmoid(nm.narrow(gates, 1, 3 * H, H))
        c_new = nm.add(nm.mul(f, c), nm.mul(i, g))
        h_new = nm.mul(o, nm.tanh(c_new))
        return h_new, c_new


class GRUCell:
    """GRU cell; reset/update gates fused along a 2H axis as [r, z]."""

    def __init__(self, params: Dict[str, Tensor], prefix: str, hidden: int):
        self.wx_rz = params[f"{prefix}.wx_rz"]
        self.wh_rz = params[f"{prefix}.wh_rz"]
        self.b_rz = params[f"{prefix}.b_rz"]
        self.wx_n = params[f"{prefix}.wx_n"]
        self.wh_n = params[f"{prefix}.wh_n"]
        self.b_n = params[f"{prefix}.b_n"]
        self.hidden = hidden

    @staticmethod
    def init_params(params, prefix, in_dim, hidden, rng, dtype):
        params[f"{prefix}.wx_rz"] = nm.param(_linear_init(rng, in_dim, (in_dim, 2 * hidden), dtype))
        params[f"{prefix}.wh_rz"] = nm.param(_linear_init(rng, hidden, (hidden, 2 * hidden), dtype))
        params[f"{prefix}.b_rz"] = nm.param(np.zeros(2 * hidden, dtype=dtype))
        params[f"{prefix}.wx_n"] = nm.param(_linear_init(rng, in_dim, (in_dim, hidden), dtype))
        params[f"{prefix}.wh_n"] = nm.param(_linear_init(rng, hidden, (hidden, hidden), dtype))
        params[f"{prefix}.b_n"] = nm.param(np.zeros(hidden, dtype=dtype))

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        H = self.hidden
        rz = nm.sigmoid(nm.add(nm.add(nm.matmul(x, self.wx_rz), nm.matmul(h, self.wh_rz)), self.b_rz))
        r = nm.narrow(rz, 1, 0, H)
        z = nm.narrow(rz, 1, H, H)
        n = nm.tanh(
            nm.add(nm.add(nm.matmul(x, self.wx_n), nm.matmul(nm.mul(r, h), self.wh_n)), self.b_n)
        )
        one_minus_z = nm.add(nm.mul(z, -1.0), 1.0)
        return nm.add(nm.mul(one_minus_z, n), nm.mul(z, h))


def lengths_mask(lengths: Sequence[int], T: int, dtype) -> np.ndarray:
    """(B, T) additive mask: 0 on valid positions, MASK_OFF on padding."""
    B = len(lengths)
    m = np.full((B, T), MASK_OFF, dtype=dtype)
    for b, L in enumerate(lengths):
        m[b, :L] = 0.0
    return m


class DecoderState:
    """Per-step decoder recurrence: one hidden tensor per GRU layer."""

    __slots__ = ("hidden",)

    def __init__(self, hidden: List[Tensor]):
        self.hidden = hidden


class EncoderOutput:
    """Everything decoding needs from one encoder pass."""

    __slots__ = ("states", "att_keys", "mask", "lengths")

    def __init__(self, states: Tensor, att_keys: Tensor, mask: np.ndarray, lengths: List[int]):
        self.states = states  # (B, T, H)
        self.att_keys = att_keys  # (B, T, A)
        self.mask = mask  # (B, T) additive
        self.lengths = lengths


class Model:
    """Attention encoder-decoder with a CTC auxiliary head."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.params: Dict[str, Tensor] = {}
        self._build(rng)

    def _build(self, rng):
        cfg = self.config
        dt = cfg.np_dtype
        p = self.params

        p["emb.char"] = nm.param(_linear_init(rng, cfg.emb_dim, (cfg.n_graphemes, cfg.emb_dim), dt))
        enc_in = cfg.emb_dim
        if cfg.uses_word_vectors:
            p["wordad.w"] = nm.param(
                _linear_init(rng, cfg.word_vec_dim, (cfg.word_vec_dim, cfg.word_adapter_dim), dt)
            )
            p["wordad.b"] = nm.param(np.zeros(cfg.word_adapter_dim, dtype=dt))
            enc_in += cfg.word_adapter_dim

        dir_hidden = cfg.enc_hidden // 2 if cfg.bidirectional else cfg.enc_hidden
        for layer in range(cfg.enc_layers):
            in_dim = enc_in if layer == 0 else cfg.enc_hidden
            LSTMCell.init_params(p, f"enc.{layer}.fwd", in_dim, dir_hidden, rng, dt)
            if cfg.bidirectional:
                LSTMCell.init_params(p, f"enc.{layer}.bwd", in_dim, dir_hidden, rng, dt)

        p["ctc.w"] = nm.param(_linear_init(rng, cfg.enc_hidden, (cfg.enc_hidden, cfg.n_ctc_out), dt))
        p["ctc.b"] = nm.param(np.zeros(cfg.n_ctc_out, dtype=dt))

        p["att.w_enc"] = nm.param(_linear_init(rng, cfg.enc_hidden, (cfg.enc_hidden, cfg.att_dim), dt))
        p["att.w_dec"] = nm.param(_linear_init(rng, cfg.dec_hidden, (cfg.dec_hidden, cfg.att_dim), dt))
        p["att.v"] = nm.param(_linear_init(rng, cfg.att_dim, (cfg.att_dim, 1), dt))

        p["emb.dec"] = nm.param(_linear_init(rng, cfg.emb_dim, (cfg.n_dec_out, cfg.emb_dim), dt))
        dec_in = cfg.emb_dim + cfg.enc_hidden
        for layer in range(cfg.dec_layers):
            in_dim = dec_in if layer == 0 else cfg.dec_hidden
            GRUCell.init_params(p, f"dec.{layer}", in_dim, cfg.dec_hidden, rng, dt)

        p["out.w"] = nm.param(
            _linear_init(
                rng,
                cfg.dec_hidden + cfg.enc_hidden,
                (cfg.dec_hidden + cfg.enc_hidden, cfg.n_dec_out),
                dt,
            )
        )
        p["out.b"] = nm.param(np.zeros(cfg.n_dec_out, dtype=dt))

    def parameters(self) -> Dict[str, Tensor]:
        return self.params

    def _enc_cell(self, layer: int, direction: str) -> LSTMCell:
        hidden = self.config.enc_hidden // 2 if self.config.bidirectional else self.config.enc_hidden
        return LSTMCell(self.params, f"enc.{layer}.{direction}", hidden)

    def _dec_cell(self, layer: int) -> GRUCell:
        return GRUCell(self.params, f"dec.{layer}", self.config.dec_hidden)

    # -- encoder ----------------------------------------------------------

    def _run_lstm(self, cell: LSTMCell, x_btd: Tensor, B: int, T: int) -> Tensor:
        dt = self.config.np_dtype
        xproj = cell.input_projection(x_btd)  # (B, T, 4H)
        h = nm.constant(np.zeros((B, cell.hidden), dtype=dt))
        c = nm.constant(np.zeros((B, cell.hidden), dtype=dt))
        outs = []
        for t in range(T):
            xp = nm.reshape(nm.narrow(xproj, 1, t, 1), (B, 4 * cell.hidden))
            h, c = cell.step(xp, h, c)
            outs.append(nm.reshape(h, (B, 1, cell.hidden)))
        return nm.concat(outs, axis=1)  # (B, T, H)

    def encode(
        self,
        char_ids: np.ndarray,
        lengths: Sequence[int],
        word_vecs: Optional[np.ndarray] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> EncoderOutput:
        """char_ids (B, T) int, lengths true char counts, word_vecs (B, T, Dw)."""
        cfg = self.config
        B, T = char_ids.shape
        if T == 0 or B == 0:
            raise ValueError("empty input")
        if char_ids.min() < 0 or char_ids.max() >= cfg.n_graphemes:
            raise ValueError("grapheme id out of range")
        lengths = [int(x) for x in lengths]
        if any(L < 1 or L > T for L in lengths):
            raise ValueError("lengths must be in [1, T]")

        x = nm.gather_rows(self.params["emb.char"], char_ids)  # (B, T, E)
        if cfg.uses_word_vectors:
            if word_vecs is None:
                raise ValueError("model was built with the word-vector branch; pass word_vecs")
            wv_arr = np.asarray(word_vecs, dtype=cfg.np_dtype)
            if wv_arr.shape != (B, T, cfg.word_vec_dim):
                raise ValueError(
                    f"word_vecs shape {wv_arr.shape} does not align with "
                    f"({B}, {T}, {cfg.word_vec_dim})"
                )
            wv = nm.constant(wv_arr)
            adapted = nm.tanh(
                nm.add(nm.matmul(nm.l2_normalize(wv), self.params["wordad.w"]), self.params["wordad.b"])
            )
            x = nm.concat([x, adapted], axis=2)
        elif word_vecs is not None:
            raise ValueError("word_vecs given but the model has no word-vector branch")

        for layer in range(cfg.enc_layers):
            fwd = self._run_lstm(self._enc_cell(layer, "fwd"), x, B, T)
            if cfg.bidirectional:
                x_rev = nm.reverse_sequence(x, lengths)
                bwd = nm.reverse_sequence(
                    self._run_lstm(self._enc_cell(layer, "bwd"), x_rev, B, T), lengths
                )
                x = nm.concat([fwd, bwd], axis=2)
            else:
                x = fwd
            x = nm.dropout(x, cfg.dropout, rng, training)

        att_keys = nm.matmul(x, self.params["att.w_enc"])  # (B, T, A)
        mask = lengths_mask(lengths, T, cfg.np_dtype)
        return EncoderOutput(states=x, att_keys=att_keys, mask=mask, lengths=lengths)

    def adapt_word_vector(self, vec: np.ndarray) -> np.ndarray:
        """tanh(W · unit-normalized vec + b) for a single word vector."""
        cfg = self.config
        v = np.asarray(vec, dtype=cfg.np_dtype)
        if v.shape != (cfg.word_vec_dim,):
            raise ValueError(f"expected a vector of size {cfg.word_vec_dim}, got {v.shape}")
        with nm.no_grad():
            unit = nm.l2_normalize(nm.constant(v.reshape(1, -1)))
            out = nm.tanh(nm.add(nm.matmul(unit, self.params["wordad.w"]), self.params["wordad.b"]))
        return out.data.reshape(-1)

    def ctc_log_probs(self, enc: EncoderOutput) -> Tensor:
        """(B, T, n_ctc_out) log-probabilities from the CTC head."""
        logits = nm.add(nm.matmul(enc.states, self.params["ctc.w"]), self.params["ctc.b"])
        return nm.log_softmax(logits)

    # -- attention --------------------------------------------------------

    def _attend(self, enc: EncoderOutput, query_h: Tensor) -> Tuple[Tensor, Tensor]:
        """Additive attention for a (B, Hdec) query.

        score_t = v' tanh(W·enc_t + U·query); returns (context (B, H),
        weights (B, T)). A single encoded sentence broadcasts over a larger
        query batch (several beam hypotheses share one encoding).
        """
        T = enc.mask.shape[1]
        B = query_h.shape[0]
        q = nm.matmul(query_h, self.params["att.w_dec"])  # (B, A)
        q3 = nm.reshape(q, (B, 1, -1))
        e = nm.matmul(nm.tanh(nm.add(enc.att_keys, q3)), self.params["att.v"])  # (B, T, 1)
        scores = nm.add(nm.reshape(e, (B, T)), enc.mask)
        w = nm.softmax(scores)  # (B, T)
        ctx = nm.matmul(nm.reshape(w, (B, 1, T)), enc.states)  # (B, 1, H)
        return nm.reshape(ctx, (B, self.config.enc_hidden)), w

    # -- decoder ----------------------------------------------------------

    def init_decoder_state(self, B: int) -> DecoderState:
        dt = self.config.np_dtype
        zeros = [
            nm.constant(np.zeros((B, self.config.dec_hidden), dtype=dt))
            for _ in range(self.config.dec_layers)
        ]
        return DecoderState(zeros)

    def step(
        self,
        enc: EncoderOutput,
        state: DecoderState,
        prev_ids: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[Tensor, DecoderState, Tensor]:
        """One decoder step: (B,) previous token ids -> (B, V) log-probs.

        The attention query is the top-layer hidden from the previous step
        (zeros at the first step). Also returns the (B, T) attention weights.
        """
        cfg = self.config
        prev_ids = np.asarray(prev_ids)
        if prev_ids.min() < 0 or prev_ids.max() >= cfg.n_dec_out:
            raise ValueError("decoder token id out of range")
        ctx, att_w = self._attend(enc, state.hidden[-1])
        emb = nm.gather_rows(self.params["emb.dec"], prev_ids)  # (B, E)
        x = nm.concat([emb, ctx], axis=1)
        new_hidden = []
        for layer in range(cfg.dec_layers):
            h = self._dec_cell(layer).step(x, state.hidden[layer])
            new_hidden.append(h)
            x = nm.dropout(h, cfg.dropout, rng, training)
        logits = nm.add(
            nm.matmul(nm.concat([x, ctx], axis=1), self.params["out.w"]), self.params["out.b"]
        )
        return nm.log_softmax(logits), DecoderState(new_hidden), att_w

    def decode_teacher_forced(
        self,
        enc: EncoderOutput,
        prev_ids: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """prev_ids (B, U): begin-of-sequence id followed by targets[:-1].

        Returns (B, U, V) log-probabilities.
        """
        B, U = prev_ids.shape
        state = self.init_decoder_state(B)
        outs = []
        for u in range(U):
            logp, state, _ = self.step(enc, state, prev_ids[:, u], training, rng)
            outs.append(nm.reshape(logp, (B, 1, -1)))
        return nm.concat(outs, axis=1)

    # -- inference --------------------------------------------------------

    def greedy_decode(
        self,
        char_ids: np.ndarray,
        lengths: Sequence[int],
        eos_id: int,
        word_vecs: Optional[np.ndarray] = None,
        max_len: Optional[int] = None,
    ) -> List[List[int]]:
        """Batched argmax decoding; returns token ids without the eos.

        Each row caps at max_len tokens, default 2·length + 10 per row, so
        the result does not depend on what the row was batched with.
        """
        B, T = char_ids.shape
        budgets = [max_len if max_len is not None else 2 * int(n) + 10 for n in lengths]
        with nm.no_grad():
            enc = self.encode(char_ids, lengths, word_vecs)
            state = self.init_decoder_state(B)
            prev = np.full(B, eos_id, dtype=np.int64)
            done = np.zeros(B, dtype=bool)
            out: List[List[int]] = [[] for _ in range(B)]
            for _ in range(max(budgets)):
                logp, state, _ = self.step(enc, state, prev)
                nxt = logp.data.argmax(axis=1)
                for b in range(B):
                    if done[b]:
                        continue
                    if nxt[b] == eos_id:
                        done[b] = True
                    else:
                        out[b].append(int(nxt[b]))
                        if len(out[b]) >= budgets[b]:
                            done[b] = True
                if done.all():
                    break
                prev = np.where(done, eos_id, nxt)
        return out
