"""Curriculum training: lexicon words, then sentences, then homographs.

Each stage runs its own Adam instance (the later stages use a smaller
learning rate), length-bucketed shuffled batches, per-epoch validation
(greedy-decode phoneme error rate, and homograph accuracy when spans are
present), a best-validation checkpoint that is restored at stage end, and a
rolling full-state checkpoint enabling bit-exact resume: model weights,
optimizer moments, RNG state, counters, and history all serialize.

The homograph stage draws balanced samples (equal mass per homograph and
per variant) instead of sweeping the dataset, applies the span-weighted
loss, and stops early when validation homograph accuracy plateaus.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint as ckpt
from . import metrics as mx
from . import numerics as nm
from . import objectives as obj
from .data import BalancedSampler, Example
from .inventory import SymbolTable, ctc_table, decoder_table, grapheme_table
from .model import Model, ModelConfig
from .optim import Adam, clip_global_norm
from .tokenizer import PhonemeTokenizer
from .wordvec import align_word_vectors

STAGES = ("lexicon", "sentence", "homograph")


@dataclass
class TrainConfig:
    stages: Tuple[str, ...] = STAGES
    lexicon_epochs: int = 50
    sentence_epochs: int = 35
    homograph_epochs: int = 50
    homograph_patience: int = 10
    batch_size: int = 32
    val_batch_size: int = 64
    lr_main: float = 1e-3
    lr_homograph: float = 1e-4
    clip_norm: float = 5.0
    lambda_h: float = 2.0
    lambda_c: float = 0.5
    balanced_sampling: bool = True
    per_excludes_space: bool = False
    seed: int = 0

    def epochs_for(self, stage: str) -> int:
        return {
            "lexicon": self.lexicon_epochs,
            "sentence": self.sentence_epochs,
            "homograph": self.homograph_epochs,
        }[stage]

    def lr_for(self, stage: str) -> float:
        return self.lr_homograph if stage == "homograph" else self.lr_main

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["stages"] = list(self.stages)
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "TrainConfig":
        d = dict(d)
        d["stages"] = tuple(d["stages"])
        return cls(**d)


@dataclass
class EncodedExample:
    char_ids: np.ndarray
    dec_ids: List[int]  # decoder-vocabulary targets, end token excluded
    ctc_ids: List[int]  # base phoneme/space ids
    span: Optional[Tuple[int, int]] = None  # in dec_ids positions
    hg_word_index: Optional[int] = None
    hg_true_ids: Optional[List[int]] = None
    hg_word: Optional[str] = None
    variant: Optional[str] = None


class Tables:
    """The three symbol tables plus the ids decoding cares about."""

    def __init__(
        self,
        graphemes: Optional[SymbolTable] = None,
        dec: Optional[SymbolTable] = None,
        ctc: Optional[SymbolTable] = None,
    ):
        self.graphemes = graphemes or grapheme_table()
        self.dec = dec or decoder_table()
        self.ctc = ctc or ctc_table()
        self.eos_id = self.dec.id("<eos>")
        self.space_id = self.dec.id(" ")
        self.blank_id = self.ctc.id("<blank>")
        if self.ctc.id(" ") != self.space_id:
            raise ValueError("decoder and CTC tables must share real-symbol ids")

    def to_dict(self) -> Dict:
        return {
            "graphemes": self.graphemes.to_dict(),
            "dec": self.dec.to_dict(),
            "ctc": self.ctc.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "Tables":
        return cls(
            SymbolTable.from_dict(d["graphemes"]),
            SymbolTable.from_dict(d["dec"]),
            SymbolTable.from_dict(d["ctc"]),
        )


def encode_example(
    ex: Example, tables: Tables, tokenizer: Optional[PhonemeTokenizer] = None
) -> EncodedExample:
    char_ids = np.array([tables.graphemes.id(c) for c in ex.char], dtype=np.int64)
    base_ids = [tables.dec.id(p) for p in ex.phn]
    span = ex.homograph_phn_span
    if tokenizer is not None:
        dec_ids = tokenizer.encode(base_ids)
        if span is not None:
            span = tokenizer.map_span(dec_ids, span[0], span[1])
    else:
        dec_ids = list(base_ids)
    enc = EncodedExample(char_ids=char_ids, dec_ids=dec_ids, ctc_ids=list(base_ids), span=span)
    if ex.homograph_phn_span is not None:
        s, e = ex.homograph_phn_span
        enc.hg_word_index = sum(1 for p in ex.phn[:s] if p == " ")
        enc.hg_true_ids = base_ids[s:e]
        enc.hg_word = ex.homograph_word
        enc.variant = ex.variant
    return enc


def encode_dataset(examples, tables, tokenizer=None) -> List[EncodedExample]:
    return [encode_example(ex, tables, tokenizer) for ex in examples]


@dataclass
class Batch:
    char_ids: np.ndarray  # (B, T) padded with 0
    char_lens: List[int]
    prev_ids: np.ndarray  # (B, U) decoder inputs
    target_ids: np.ndarray  # (B, U) decoder targets (end token appended)
    target_lens: List[int]
    ctc_targets: List[List[int]]
    spans: List[Optional[Tuple[int, int]]]
    word_vecs: Optional[np.ndarray] = None


def collate(
    batch: Sequence[EncodedExample],
    eos_id: int,
    word_vec_rows: Optional[List[np.ndarray]] = None,
) -> Batch:
    B = len(batch)
    T = max(len(e.char_ids) for e in batch)
    U = max(len(e.dec_ids) for e in batch) + 1  # room for the end token
    chars = np.zeros((B, T), dtype=np.int64)
    prev = np.full((B, U), eos_id, dtype=np.int64)
    tgt = np.full((B, U), eos_id, dtype=np.int64)
    char_lens = []
    tlens = []
    for b, e in enumerate(batch):
        n = len(e.char_ids)
        chars[b, :n] = e.char_ids
        char_lens.append(n)
        u = len(e.dec_ids)
        prev[b, 1 : u + 1] = e.dec_ids
        tgt[b, :u] = e.dec_ids
        tgt[b, u] = eos_id
        tlens.append(u + 1)
    wv = None
    if word_vec_rows is not None:
        D = word_vec_rows[0].shape[1]
        wv = np.zeros((B, T, D))
        for b, rows in enumerate(word_vec_rows):
            wv[b, : rows.shape[0]] = rows
    return Batch(
        char_ids=chars,
        char_lens=char_lens,
        prev_ids=prev,
        target_ids=tgt,
        target_lens=tlens,
        ctc_targets=[e.ctc_ids for e in batch],
        spans=[e.span for e in batch],
        word_vecs=wv,
    )


class JsonlLogger:
    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self._f = open(self.path, "a" if append else "w", encoding="utf-8")

    def log(self, rec: Dict) -> None:
        self._f.write(json.dumps(rec) + "\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()


class Trainer:
    def __init__(
        self,
        model: Model,
        tables: Tables,
        config: TrainConfig,
        rng: np.random.Generator,
        tokenizer: Optional[PhonemeTokenizer] = None,
        word_provider=None,
        logger: Optional[JsonlLogger] = None,
    ):
        if tokenizer is not None and config.lambda_c > 0.0:
            raise ValueError(
                "the CTC head scores base phonemes; disable it (lambda_c=0) "
                "when decoder targets are tokenized"
            )
        self.model = model
        self.tables = tables
        self.config = config
        self.rng = rng
        self.tokenizer = tokenizer
        self.word_provider = word_provider
        self.logger = logger
        self.optimizer: Optional[Adam] = None
        self.stage_idx = 0
        self.epoch_in_stage = 0
        self.history: List[Dict] = []
        self.best_metric: Optional[float] = None
        self.bad_epochs = 0
        self._wv_cache: Dict[str, np.ndarray] = {}

    # -- batching -----------------------------------------------------------

    def _epoch_batches(self, n: int, lens: List[int], sampler: Optional[BalancedSampler]):
        """Yields index arrays; length-bucketed after a shuffle."""
        bs = self.config.batch_size
        if sampler is not None:
            order = sampler.draw(n)
        else:
            order = self.rng.permutation(n)
        order = sorted(order, key=lambda i: lens[i])  # stable: keeps shuffle within ties
        batches = [order[i : i + bs] for i in range(0, len(order), bs)]
        batch_order = self.rng.permutation(len(batches))
        for bi in batch_order:
            yield batches[bi]

    # -- steps ----------------------------------------------------------------

    def train_step(self, batch: Batch) -> obj.LossBreakdown:
        cfg = self.config
        model = self.model
        n_out = model.config.n_dec_out
        enc = model.encode(
            batch.char_ids, batch.char_lens, batch.word_vecs, training=True, rng=self.rng
        )
        dec_logp = model.decode_teacher_forced(enc, batch.prev_ids, training=True, rng=self.rng)
        dt = dec_logp.data.dtype
        nll = obj.nll_from_weights(
            dec_logp, obj.token_weights(batch.target_ids, batch.target_lens, n_out, dtype=dt)
        )
        hg = None
        wspan = obj.span_weights(batch.target_ids, batch.spans, n_out, dtype=dt)
        if wspan is not None:
            hg = obj.nll_from_weights(dec_logp, wspan)
        ctc_loss = None
        n_skipped = 0
        if cfg.lambda_c > 0.0:
            ctc_logp = model.ctc_log_probs(enc)
            res = obj.ctc_loss_mean(ctc_logp, batch.char_lens, batch.ctc_targets, self.tables.blank_id)
            ctc_loss = res.loss
            n_skipped = res.n_skipped
        total, breakdown = obj.combine_losses(nll, hg, ctc_loss, cfg.lambda_h, cfg.lambda_c, n_skipped)
        self.optimizer.zero_grad()
        nm.backward(total)
        clip_global_norm(self.model.params, cfg.clip_norm)
        self.optimizer.step()
        return breakdown

    def train_epoch(self, encoded: List[EncodedExample], examples, stage: str) -> Dict:
        sampler = None
        if stage == "homograph" and self.config.balanced_sampling:
            sampler = BalancedSampler(examples, self.rng)
        lens = [len(e.char_ids) for e in encoded]
        sums = {"nll": 0.0, "homograph": 0.0, "ctc": 0.0, "total": 0.0}
        n_batches = 0
        n_skipped = 0
        for idxs in self._epoch_batches(len(encoded), lens, sampler):
            rows = None
            if self.word_provider is not None:
                rows = [self._aligned_vectors(examples[i]) for i in idxs]
            batch = collate([encoded[i] for i in idxs], self.tables.eos_id, rows)
            try:
                bd = self.train_step(batch)
            except nm.NonFiniteError as exc:
                raise RuntimeError(
                    f"non-finite loss in stage {stage!r}, batch {n_batches} "
                    f"(examples {[examples[i].id for i in idxs]}): {exc}; "
                    f"running sums {sums}"
                ) from exc
            for k in ("nll", "homograph", "ctc", "total"):
                sums[k] += getattr(bd, k)
            n_skipped += bd.ctc_skipped
            n_batches += 1
        out = {k: v / max(n_batches, 1) for k, v in sums.items()}
        out["ctc_skipped"] = n_skipped
        return out

    def _aligned_vectors(self, ex: Example) -> np.ndarray:
        cached = self._wv_cache.get(ex.id)
        if cached is None:
            cached = align_word_vectors(ex.char, self.word_provider, self.model.config.word_vec_dim)
            self._wv_cache[ex.id] = cached
        return cached

    # -- validation -----------------------------------------------------------

    def predict_greedy(self, encoded: List[EncodedExample], examples) -> List[List[int]]:
        """Greedy decoding of a dataset, grouped by length for batching."""
        order = sorted(range(len(encoded)), key=lambda i: len(encoded[i].char_ids))
        preds: List[Optional[List[int]]] = [None] * len(encoded)
        bs = self.config.val_batch_size
        for i in range(0, len(order), bs):
            idxs = order[i : i + bs]
            T = max(len(encoded[j].char_ids) for j in idxs)
            chars = np.zeros((len(idxs), T), dtype=np.int64)
            lens = []
            for row, j in enumerate(idxs):
                n = len(encoded[j].char_ids)
                chars[row, :n] = encoded[j].char_ids
                lens.append(n)
            wv = None
            if self.word_provider is not None:
                D = self.model.config.word_vec_dim
                wv = np.zeros((len(idxs), T, D))
                for row, j in enumerate(idxs):
                    rows = self._aligned_vectors(examples[j])
                    wv[row, : rows.shape[0]] = rows
            outs = self.model.greedy_decode(chars, lens, self.tables.eos_id, word_vecs=wv)
            for row, j in enumerate(idxs):
                preds[j] = outs[row]
        return preds  # type: ignore[return-value]

    def validate(self, encoded: List[EncodedExample], examples) -> Dict:
        with nm.no_grad():
            preds = self.predict_greedy(encoded, examples)
        refs = []
        hyps = []
        for e, p in zip(encoded, preds):
            hyp = self.tokenizer.decode(p) if self.tokenizer is not None else p
            refs.append(e.ctc_ids)
            hyps.append(hyp)
        exclude = self.tables.space_id if self.config.per_excludes_space else None
        val_per = mx.corpus_per(refs, hyps, exclude=exclude)
        hg_items = []
        for e, hyp in zip(encoded, hyps):
            if e.hg_word_index is None:
                continue
            hg_items.append((hyp, e.hg_word_index, e.hg_true_ids))
        out = {"val_per": val_per}
        if hg_items:
            out["val_homograph_acc"] = mx.homograph_accuracy(hg_items, self.tables.space_id)
        return out

    # -- checkpointing ----------------------------------------------------------

    def _meta(self) -> Dict:
        return {
            "kind": "train_state",
            "model_config": self.model.config.to_dict(),
            "train_config": self.config.to_dict(),
            "tables": self.tables.to_dict(),
            "stage_idx": self.stage_idx,
            "epoch_in_stage": self.epoch_in_stage,
            "history": self.history,
            "best_metric": self.best_metric,
            "bad_epochs": self.bad_epochs,
            "rng": ckpt.rng_state(self.rng),
            "optimizer": self.optimizer.state_meta() if self.optimizer else None,
        }

    def save_state(self, path) -> None:
        arrays = {f"param.{k}": v.data for k, v in self.model.params.items()}
        if self.optimizer is not None:
            arrays.update(self.optimizer.state_arrays())
        ckpt.write_container(path, self._meta(), arrays)

    @classmethod
    def restore(
        cls,
        path,
        tokenizer: Optional[PhonemeTokenizer] = None,
        word_provider=None,
        logger: Optional[JsonlLogger] = None,
    ) -> "Trainer":
        meta, arrays = ckpt.read_container(path)
        if meta.get("kind") != "train_state":
            raise ValueError(f"{path}: not a training checkpoint")
        mcfg = ModelConfig.from_dict(meta["model_config"])
        model = Model(mcfg, np.random.default_rng(0))
        for name, p in model.params.items():
            p.data = arrays[f"param.{name}"].astype(mcfg.np_dtype).copy()
        tables = Tables.from_dict(meta["tables"])
        tcfg = TrainConfig.from_dict(meta["train_config"])
        rng = ckpt.restore_rng(meta["rng"])
        trainer = cls(model, tables, tcfg, rng, tokenizer, word_provider, logger)
        trainer.stage_idx = int(meta["stage_idx"])
        trainer.epoch_in_stage = int(meta["epoch_in_stage"])
        trainer.history = list(meta["history"])
        trainer.best_metric = meta["best_metric"]
        trainer.bad_epochs = int(meta["bad_epochs"])
        if meta["optimizer"] is not None:
            opt = Adam(model.params)
            opt.load_state(meta["optimizer"], arrays)
            trainer.optimizer = opt
        return trainer

    # -- driver -----------------------------------------------------------------

    def run(self, datasets: Dict[str, Tuple[List[Example], List[Example]]], ckpt_dir) -> List[Dict]:
        """datasets: stage -> (train, valid). Returns the full history."""
        ckpt_dir = Path(ckpt_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        resume_stage = self.stage_idx
        resume_epoch = self.epoch_in_stage
        for si in range(resume_stage, len(self.config.stages)):
            stage = self.config.stages[si]
            if stage not in datasets:
                raise ValueError(f"no data for stage {stage!r}")
            self.stage_idx = si
            train_ex, valid_ex = datasets[stage]
            enc_train = encode_dataset(train_ex, self.tables, self.tokenizer)
            enc_valid = encode_dataset(valid_ex, self.tables, self.tokenizer)
            n_epochs = self.config.epochs_for(stage)
            start = resume_epoch if si == resume_stage else 0
            if start == 0:
                self.optimizer = Adam(self.model.params, lr=self.config.lr_for(stage))
                self.best_metric = None
                self.bad_epochs = 0
            best_path = ckpt_dir / f"best_{stage}.ckpt"
            for epoch in range(start, n_epochs):
                t0 = time.monotonic()
                train_stats = self.train_epoch(enc_train, train_ex, stage)
                val_stats = self.validate(enc_valid, valid_ex)
                rec = {
                    "stage": stage,
                    "epoch": epoch + 1,
                    **{f"loss_{k}": v for k, v in train_stats.items()},
                    **val_stats,
                    "seconds": round(time.monotonic() - t0, 3),
                }
                self.history.append(rec)
                if self.logger is not None:
                    self.logger.log(rec)
                metric, bigger_better = self._stage_metric(stage, val_stats)
                improved = self.best_metric is None or (
                    metric > self.best_metric if bigger_better else metric < self.best_metric
                )
                if improved:
                    self.best_metric = metric
                    self.bad_epochs = 0
                    self.save_state(best_path)
                else:
                    self.bad_epochs += 1
                self.epoch_in_stage = epoch + 1
                self.save_state(ckpt_dir / "last.ckpt")
                if (
                    stage == "homograph"
                    and self.config.homograph_patience > 0
                    and self.bad_epochs >= self.config.homograph_patience
                ):
                    break
            if best_path.exists():
                self._load_weights(best_path)
            self.epoch_in_stage = 0
        return self.history

    @staticmethod
    def _stage_metric(stage: str, val_stats: Dict) -> Tuple[float, bool]:
        if stage == "homograph" and "val_homograph_acc" in val_stats:
            return val_stats["val_homograph_acc"], True
        return val_stats["val_per"], False

    def _load_weights(self, path) -> None:
        _, arrays = ckpt.read_container(path)
        for name, p in self.model.params.items():
            p.data = arrays[f"param.{name}"].astype(self.model.config.np_dtype).copy()


def save_model(path, model: Model, tables: Tables, extra: Optional[Dict] = None) -> None:
    """Inference-only checkpoint: weights, config, and symbol tables."""
    meta = {"kind": "g2p_model", "config": model.config.to_dict(), "tables": tables.to_dict()}
    if extra:
        meta.update(extra)
    ckpt.write_container(path, meta, {f"param.{k}": v.data for k, v in model.params.items()})


def load_model(path) -> Tuple[Model, Tables, Dict]:
    meta, arrays = ckpt.read_container(path)
    if meta.get("kind") not in ("g2p_model", "train_state"):
        raise ValueError(f"{path}: not a model checkpoint")
    key = "config" if meta["kind"] == "g2p_model" else "model_config"
    cfg = ModelConfig.from_dict(meta[key])
    model = Model(cfg, np.random.default_rng(0))
    for name, p in model.params.items():
        p.data = arrays[f"param.{name}"].astype(cfg.np_dtype).copy()
    tables = Tables.from_dict(meta["tables"])
    return model, tables, meta
