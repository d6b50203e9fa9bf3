"""Command-line pipeline: build datasets, train the tokenizer, the phoneme
language model, and the sentence G2P model, then evaluate or transcribe.

One binary with subcommands. Every run is driven by a structured YAML config
plus ``--set section.key=value`` overrides; the resolved config is echoed to
the output directory so a run can be reproduced from that file and the seed
alone. All file outputs go through a temp-and-rename step, so an interrupted
run never leaves a truncated artifact behind.

The ``SENTENCE_G2P_CONFIG`` environment variable supplies a default config
file path when ``--config`` is not given; nothing else is read from the
environment here.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import data as D
from . import metrics as M
from .decoding import BeamConfig, beam_search
from .model import Model, ModelConfig
from .phoneme_lm import LMConfig, PhonemeLM, train_lm
from .tokenizer import PhonemeTokenizer
from .training import (
    JsonlLogger,
    Tables,
    TrainConfig,
    Trainer,
    encode_dataset,
    load_model,
    save_model,
)
from .wordvec import FileWordVectors, HashedWordVectors, align_word_vectors

ENV_CONFIG = "SENTENCE_G2P_CONFIG"

# Word separators for rendered output; ids on disk never change with this.
SEPARATORS = {"symbol": "␣", "dash": "-"}

DEFAULT_CONFIG: Dict = {
    "seed": 0,
    "model": {
        "emb_dim": 512,
        "enc_hidden": 512,
        "enc_layers": 4,
        "dec_hidden": 512,
        "dec_layers": 4,
        "att_dim": 0,
        "dropout": 0.5,
        "bidirectional": True,
        "word_adapter_dim": 0,
        "dtype": "float64",
    },
    "word_vectors": {
        "kind": "none",  # none | hashed | file
        "dim": 0,
        "salt": "word-vec",
        "path": "",
    },
    "train": {
        "stages": ["lexicon", "sentence", "homograph"],
        "lexicon_epochs": 50,
        "sentence_epochs": 35,
        "homograph_epochs": 50,
        "homograph_patience": 10,
        "batch_size": 32,
        "val_batch_size": 64,
        "lr_main": 1.0e-3,
        "lr_homograph": 1.0e-4,
        "clip_norm": 5.0,
        "lambda_h": 2.0,
        "lambda_c": 0.5,
        "balanced_sampling": True,
        "per_excludes_space": False,
    },
    "lm": {
        "emb_dim": 256,
        "hidden": 512,
        "layers": 2,
        "dropout": 0.15,
        "dtype": "float64",
    },
    "lm_train": {
        "epochs": 10,
        "batch_size": 32,
        "lr": 1.0e-3,
        "clip_norm": 5.0,
    },
    "tokenizer": {
        "target_size": 128,
        "min_count": 2,
        "protect_space": True,
    },
    "beam": {
        "beam_size": 16,
        "ctc_weight": 0.4,
        "lm_weight": 0.3,
        "eos_threshold": 1.5,
        "max_len": 0,  # 0 resolves to 2*chars + 10
        "length_normalize": True,
    },
    "data": {
        "train_frac": 0.95,
        "valid_frac": 0.025,
        "valid_count": 0,  # count mode when either count is > 0
        "test_count": 0,
        "harmonize": False,
    },
}


class ConfigError(Exception):
    pass


class CliError(Exception):
    pass


# -- config plumbing --------------------------------------------------------


def _merge_section(base: Dict, override: Dict, prefix: str) -> None:
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{path}' expects a section")
            _merge_section(base[key], value, path + ".")
        else:
            base[key] = _coerce(base[key], value, path)


def _coerce(default, value, path: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key '{path}' expects true/false")
        return value
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, int) and not isinstance(value, int):
        raise ConfigError(f"config key '{path}' expects an integer")
    return value


def _apply_set(config: Dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    node = config
    parts = dotted.strip().split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config key '{dotted.strip()}'")
        node = node[part]
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"unknown config key '{dotted.strip()}'")
    if isinstance(node[leaf], dict):
        raise ConfigError(f"config key '{dotted.strip()}' is a section, not a value")
    node[leaf] = _coerce(node[leaf], value, dotted.strip())


def load_config(path: Optional[str], sets: Sequence[str]) -> Dict:
    """Defaults, then the config file, then --set overrides."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise CliError(f"cannot read config file: {e}")
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        _merge_section(config, loaded, "")
    for assignment in sets:
        _apply_set(config, assignment)
    return config


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def atomic_write_jsonl(path, examples) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    D.write_jsonl(tmp, examples)
    os.replace(tmp, path)


def echo_config(out_dir: Path, config: Dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    text = yaml.safe_dump(config, sort_keys=True, default_flow_style=False)
    atomic_write_text(out_dir / "effective_config.yaml", text)


def make_word_provider(section: Dict, path_override: Optional[str] = None):
    """Returns (provider, dim); (None, 0) when the branch is off."""
    kind = section.get("kind", "none")
    if kind == "none":
        return None, 0
    if kind == "hashed":
        dim = int(section["dim"])
        if dim <= 0:
            raise CliError("word_vectors.dim must be > 0 for hashed vectors")
        return HashedWordVectors(dim, section.get("salt", "word-vec")), dim
    if kind == "file":
        path = path_override or section.get("path")
        if not path:
            raise CliError("word_vectors.path is required for file vectors")
        provider = FileWordVectors.load(path)
        return provider, provider.dim
    raise CliError(f"unknown word_vectors.kind {kind!r}")


# -- shared loading helpers --------------------------------------------------


def _read_slice(path) -> List[D.Example]:
    path = Path(path)
    if not path.exists():
        raise CliError(f"missing dataset file: {path}")
    return D.read_jsonl(path)


def _load_tokenizer_from_meta(meta: Dict) -> Optional[PhonemeTokenizer]:
    text = meta.get("tokenizer_tsv")
    if not text:
        return None
    with tempfile.NamedTemporaryFile("w", suffix=".tsv", delete=False) as f:
        f.write(text)
        tmp = f.name
    try:
        return PhonemeTokenizer.load(tmp)
    finally:
        os.unlink(tmp)


def _restore_inference(model_path, wv_path_override=None):
    """Model checkpoint plus everything inference needs around it."""
    model, tables, meta = load_model(model_path)
    tokenizer = _load_tokenizer_from_meta(meta)
    provider, dim = make_word_provider(meta.get("word_vectors", {"kind": "none"}), wv_path_override)
    if model.config.uses_word_vectors and provider is None:
        raise CliError("checkpoint expects word vectors but none are configured")
    if provider is not None and dim != model.config.word_vec_dim:
        raise CliError(
            f"word vector dim {dim} does not match the checkpoint ({model.config.word_vec_dim})"
        )
    return model, tables, tokenizer, provider, meta


def _word_vec_rows(texts: List[str], T: int, provider, dim: int, dtype) -> Optional[np.ndarray]:
    if provider is None:
        return None
    rows = np.zeros((len(texts), T, dim), dtype=dtype)
    for i, text in enumerate(texts):
        aligned = align_word_vectors(text, provider, dim)
        rows[i, : aligned.shape[0]] = aligned
    return rows


def _predict_greedy(model, tables, examples, tokenizer, provider, batch_size=64):
    """Base-phoneme-id predictions for a slice, input order preserved."""
    encoded = encode_dataset(examples, tables, tokenizer)
    order = sorted(range(len(encoded)), key=lambda i: len(encoded[i].char_ids))
    preds: List[Optional[List[int]]] = [None] * len(encoded)
    for i in range(0, len(order), batch_size):
        idxs = order[i : i + batch_size]
        T = max(len(encoded[j].char_ids) for j in idxs)
        chars = np.zeros((len(idxs), T), dtype=np.int64)
        lens = []
        for row, j in enumerate(idxs):
            n = len(encoded[j].char_ids)
            chars[row, :n] = encoded[j].char_ids
            lens.append(n)
        wv = _word_vec_rows(
            [examples[j].char for j in idxs], T, provider,
            model.config.word_vec_dim, model.config.np_dtype,
        )
        out = model.greedy_decode(chars, lens, tables.eos_id, word_vecs=wv)
        for row, j in enumerate(idxs):
            pred = out[row]
            preds[j] = tokenizer.decode(pred) if tokenizer is not None else list(pred)
    return preds


def _predict_beam(model, tables, examples, tokenizer, provider, beam_cfg: BeamConfig, lm):
    preds: List[List[int]] = []
    dim = model.config.word_vec_dim
    for ex in examples:
        chars = np.array([[tables.graphemes.id(c) for c in ex.char]], dtype=np.int64)
        wv = _word_vec_rows([ex.char], chars.shape[1], provider, dim, model.config.np_dtype)
        enc = model.encode(chars, [chars.shape[1]], word_vecs=wv)
        ctc_logp = None
        if beam_cfg.ctc_weight > 0.0:
            ctc_logp = model.ctc_log_probs(enc).data[0]
        hyps = beam_search(
            model, enc, tables.eos_id, beam_cfg,
            ctc_logp=ctc_logp, blank_id=tables.blank_id, lm=lm,
        )
        best = hyps[0].tokens
        preds.append(tokenizer.decode(best) if tokenizer is not None else list(best))
    return preds


def _beam_config(section: Dict, lm_loaded: bool) -> BeamConfig:
    lm_weight = float(section["lm_weight"])
    if lm_weight > 0.0 and not lm_loaded:
        lm_weight = 0.0  # no LM checkpoint given; drop the fusion term
    max_len = int(section["max_len"]) or None
    return BeamConfig(
        beam_size=int(section["beam_size"]),
        ctc_weight=float(section["ctc_weight"]),
        lm_weight=lm_weight,
        eos_threshold=float(section["eos_threshold"]),
        max_len=max_len,
        length_normalize=bool(section["length_normalize"]),
    )


# -- build-dataset -----------------------------------------------------------


def _split(examples, dcfg: Dict, seed: int):
    if dcfg["valid_count"] > 0 or dcfg["test_count"] > 0:
        return D.split_dataset(
            examples, seed, valid_count=dcfg["valid_count"], test_count=dcfg["test_count"]
        )
    return D.split_dataset(
        examples, seed, train_frac=dcfg["train_frac"], valid_frac=dcfg["valid_frac"]
    )


def cmd_build_dataset(args) -> int:
    config = load_config(args.config, args.set or [])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = int(config["seed"])
    dcfg = config["data"]

    lex_path = Path(args.lexicon)
    if not lex_path.exists():
        raise CliError(f"missing lexicon file: {lex_path}")
    lexicon, rejected = D.load_lexicon(lex_path)
    manifest: Dict = {"seed": seed, "slices": {}}

    def emit(name: str, examples, stats: Optional[D.BuildStats]) -> None:
        train, valid, test = _split(examples, dcfg, seed)
        for split, exs in (("train", train), ("valid", valid), ("test", test)):
            atomic_write_jsonl(out_dir / f"{name}.{split}.jsonl", exs)
        entry = {
            "built": len(examples),
            "splits": {"train": len(train), "valid": len(valid), "test": len(test)},
        }
        if stats is not None:
            entry["dropped"] = stats.dropped
            entry["drop_reasons"] = dict(sorted(stats.reasons.items()))
        manifest["slices"][name] = entry

    emit("lexicon", D.build_lexicon_slice(lexicon), None)
    manifest["lexicon_entries"] = len(lexicon)
    manifest["lexicon_rejected_lines"] = rejected

    if args.sentences:
        sent_path = Path(args.sentences)
        if not sent_path.exists():
            raise CliError(f"missing sentences file: {sent_path}")
        lines = [l for l in sent_path.read_text(encoding="utf-8").splitlines() if l.strip()]
        examples, stats = D.build_sentence_slice(lines, lexicon, harmonize=dcfg["harmonize"])
        emit("sentence", examples, stats)

    if args.homographs:
        if not args.glossary:
            raise CliError("--homographs requires --glossary")
        hg_path, gl_path = Path(args.homographs), Path(args.glossary)
        for p in (hg_path, gl_path):
            if not p.exists():
                raise CliError(f"missing input file: {p}")
        records = [
            json.loads(l) for l in hg_path.read_text(encoding="utf-8").splitlines() if l.strip()
        ]
        glossary = json.loads(gl_path.read_text(encoding="utf-8"))
        examples, stats = D.build_homograph_slice(records, lexicon, glossary)
        emit("homograph", examples, stats)

    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    echo_config(out_dir, config)
    print(f"wrote {len(manifest['slices'])} slice(s) to {out_dir}")
    return 0


# -- tokenizer-train ---------------------------------------------------------


def cmd_tokenizer_train(args) -> int:
    config = load_config(args.config, args.set or [])
    tcfg = config["tokenizer"]
    tables = Tables()
    corpus = []
    for path in args.data:
        for ex in _read_slice(path):
            corpus.append([tables.dec.id(p) for p in ex.phn])
    protected = {tables.eos_id}
    if tcfg["protect_space"]:
        protected.add(tables.space_id)
    tok = PhonemeTokenizer.train(
        corpus, tables.dec, int(tcfg["target_size"]),
        protected=protected, min_count=int(tcfg["min_count"]),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + ".tmp")
    tok.save(tmp)
    os.replace(tmp, out)
    print(f"tokenizer: {len(tok)} tokens ({len(tok.merges)} merges) -> {out}")
    return 0


# -- lm-train ----------------------------------------------------------------


def cmd_lm_train(args) -> int:
    config = load_config(args.config, args.set or [])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_config(out_dir, config)
    seed = int(config["seed"])
    tables = Tables()

    train_seqs = [[tables.dec.id(p) for p in ex.phn] for ex in _read_slice(args.train)]
    valid_seqs = [[tables.dec.id(p) for p in ex.phn] for ex in _read_slice(args.valid)]
    if not train_seqs or not valid_seqs:
        raise CliError("lm-train needs non-empty train and valid slices")

    lm_cfg = LMConfig(n_tokens=len(tables.dec), **config["lm"])
    lm = PhonemeLM(lm_cfg, np.random.default_rng(seed))
    tr = config["lm_train"]
    logger = JsonlLogger(out_dir / "metrics.jsonl")
    try:
        history = train_lm(
            lm, train_seqs, valid_seqs, tables.eos_id,
            epochs=int(tr["epochs"]), batch_size=int(tr["batch_size"]),
            lr=float(tr["lr"]), clip_norm=float(tr["clip_norm"]),
            rng=np.random.default_rng(seed), log=logger.log,
        )
    finally:
        logger.close()
    lm.save(out_dir / "lm.ckpt")
    last = history[-1]
    print(f"epoch {last['epoch']}: valid perplexity {last['valid_perplexity']:.4f}")
    return 0


# -- train -------------------------------------------------------------------


def _stage_files(data_dir: Path, stage: str) -> Tuple[List[D.Example], List[D.Example]]:
    train = _read_slice(data_dir / f"{stage}.train.jsonl")
    valid = _read_slice(data_dir / f"{stage}.valid.jsonl")
    if not train:
        raise CliError(f"empty training slice for stage {stage!r}")
    if not valid:
        raise CliError(f"empty validation slice for stage {stage!r}")
    return train, valid


def cmd_train(args) -> int:
    config = load_config(args.config, args.set or [])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo_config(out_dir, config)
    seed = int(config["seed"])
    data_dir = Path(args.data)

    tokenizer = None
    tokenizer_tsv = None
    if args.tokenizer:
        tok_path = Path(args.tokenizer)
        if not tok_path.exists():
            raise CliError(f"missing tokenizer file: {tok_path}")
        tokenizer = PhonemeTokenizer.load(tok_path)
        tokenizer_tsv = tok_path.read_text(encoding="utf-8")

    provider, word_dim = make_word_provider(config["word_vectors"])

    train_section = dict(config["train"])
    train_section["stages"] = tuple(train_section["stages"])
    tcfg = TrainConfig(seed=seed, **train_section)

    ckpt_dir = out_dir / "ckpt"
    last = ckpt_dir / "last.ckpt"
    if args.resume:
        if not last.exists():
            raise CliError(f"--resume: no checkpoint at {last}")
        logger = JsonlLogger(out_dir / "metrics.jsonl", append=True)
        trainer = Trainer.restore(last, tokenizer=tokenizer, word_provider=provider, logger=logger)
    else:
        tables = Tables()
        mcfg_section = dict(config["model"])
        adapter = int(mcfg_section.pop("word_adapter_dim"))
        if word_dim > 0 and adapter <= 0:
            adapter = word_dim
        mcfg = ModelConfig(
            n_graphemes=len(tables.graphemes),
            n_dec_out=len(tokenizer) if tokenizer is not None else len(tables.dec),
            n_ctc_out=len(tables.ctc),
            word_vec_dim=word_dim,
            word_adapter_dim=adapter if word_dim > 0 else 0,
            **mcfg_section,
        )
        model = Model(mcfg, np.random.default_rng(seed))
        logger = JsonlLogger(out_dir / "metrics.jsonl")
        trainer = Trainer(
            model, tables, tcfg, np.random.default_rng(seed),
            tokenizer=tokenizer, word_provider=provider, logger=logger,
        )
    datasets = {stage: _stage_files(data_dir, stage) for stage in trainer.config.stages}
    try:
        trainer.run(datasets, ckpt_dir)
    finally:
        logger.close()
    extra = {"word_vectors": config["word_vectors"]}
    if tokenizer_tsv is not None:
        extra["tokenizer_tsv"] = tokenizer_tsv
    save_model(out_dir / "model.ckpt", trainer.model, trainer.tables, extra=extra)
    print(f"model -> {out_dir / 'model.ckpt'}")
    return 0


# -- evaluate ----------------------------------------------------------------


def _render(ids: Sequence[int], table, sep: str) -> str:
    return " ".join(sep if s == " " else s for s in table.decode(ids))


def cmd_evaluate(args) -> int:
    config = load_config(args.config, args.set or [])
    model, tables, tokenizer, provider, meta = _restore_inference(args.model, args.word_vectors)
    examples = _read_slice(args.data)
    if not examples:
        raise CliError(f"empty dataset: {args.data}")

    lm = None
    if args.lm:
        lm, _ = PhonemeLM.load(args.lm)
    sep = SEPARATORS[args.separator]

    try:
        refs = [[tables.dec.id(p) for p in ex.phn] for ex in examples]
        if args.decoder == "beam":
            beam_cfg = _beam_config(config["beam"], lm is not None)
            preds = _predict_beam(model, tables, examples, tokenizer, provider, beam_cfg, lm)
        else:
            preds = _predict_greedy(model, tables, examples, tokenizer, provider)
    except KeyError as e:
        raise CliError(f"inventory mismatch between checkpoint and data: {e}")

    exclude = tables.space_id if args.exclude_space else None
    print(f"examples: {len(examples)}")
    print(f"corpus PER: {M.corpus_per(refs, preds, exclude=exclude):.4f}")

    hg_items = []
    for ex, pred in zip(examples, preds):
        if ex.homograph_word is None:
            continue
        idx = ex.char[: ex.homograph_char_span[0]].count(" ")
        true_ids = [
            tables.dec.id(p)
            for p in ex.phn[ex.homograph_phn_span[0] : ex.homograph_phn_span[1]]
        ]
        hg_items.append((ex.homograph_word, ex.variant or "?", pred, idx, true_ids))
    if hg_items:
        acc, confusion = M.evaluate_homographs(hg_items, tables.space_id)
        print(f"homograph examples: {len(hg_items)}")
        print(f"homograph accuracy: {acc:.2f}")
        print("confusion:")
        for word, true_label, pred_label, n in confusion.rows():
            print(f"  {word} {true_label} -> {pred_label}: {n}")

    if args.report:
        lines = []
        for ex, ref, hyp in zip(examples, refs, preds):
            lines.append(json.dumps({
                "id": ex.id,
                "ref": _render(ref, tables.dec, sep),
                "hyp": _render(hyp, tables.dec, sep),
                "distance": M.levenshtein(ref, hyp),
            }))
        atomic_write_text(args.report, "\n".join(lines) + "\n")
    return 0


# -- transcribe --------------------------------------------------------------


def cmd_transcribe(args) -> int:
    config = load_config(args.config, args.set or [])
    model, tables, tokenizer, provider, meta = _restore_inference(args.model, args.word_vectors)
    lm = None
    if args.lm:
        lm, _ = PhonemeLM.load(args.lm)
    sep = SEPARATORS[args.separator]

    if args.input == "-":
        raw_lines = sys.stdin.read().splitlines()
    else:
        in_path = Path(args.input)
        if not in_path.exists():
            raise CliError(f"missing input file: {in_path}")
        raw_lines = in_path.read_text(encoding="utf-8").splitlines()

    outputs: List[Optional[str]] = [None] * len(raw_lines)
    todo: List[Tuple[int, str]] = []  # (line index, uppercased text)
    for i, raw in enumerate(raw_lines):
        text = " ".join(raw.upper().split())
        if not text:
            outputs[i] = ""
            continue
        bad = next((c for c in text if c not in tables.graphemes), None)
        if bad is not None:
            outputs[i] = f"ERROR: character {bad!r} not in the grapheme inventory"
            continue
        todo.append((i, text))

    dim = model.config.word_vec_dim
    if args.decoder == "beam":
        beam_cfg = _beam_config(config["beam"], lm is not None)
        for i, text in todo:
            chars = np.array([[tables.graphemes.id(c) for c in text]], dtype=np.int64)
            wv = _word_vec_rows([text], chars.shape[1], provider, dim, model.config.np_dtype)
            enc = model.encode(chars, [chars.shape[1]], word_vecs=wv)
            ctc_logp = model.ctc_log_probs(enc).data[0] if beam_cfg.ctc_weight > 0 else None
            hyps = beam_search(model, enc, tables.eos_id, beam_cfg,
                               ctc_logp=ctc_logp, blank_id=tables.blank_id, lm=lm)
            ids = hyps[0].tokens
            if tokenizer is not None:
                ids = tokenizer.decode(ids)
            outputs[i] = _render(ids, tables.dec, sep)
    else:
        # batch greedy across lines, grouped by length; order restored below
        order = sorted(range(len(todo)), key=lambda k: len(todo[k][1]))
        bs = 64
        for start in range(0, len(order), bs):
            group = [todo[k] for k in order[start : start + bs]]
            T = max(len(text) for _, text in group)
            chars = np.zeros((len(group), T), dtype=np.int64)
            lens = []
            for row, (_, text) in enumerate(group):
                ids = [tables.graphemes.id(c) for c in text]
                chars[row, : len(ids)] = ids
                lens.append(len(ids))
            wv = _word_vec_rows([t for _, t in group], T, provider, dim, model.config.np_dtype)
            out = model.greedy_decode(chars, lens, tables.eos_id, word_vecs=wv)
            for (i, _), ids in zip(group, out):
                if tokenizer is not None:
                    ids = tokenizer.decode(ids)
                outputs[i] = _render(ids, tables.dec, sep)

    text = "\n".join(o for o in outputs)
    if raw_lines:
        text += "\n"
    if args.output == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(args.output, text)
    return 0


# -- argument parsing --------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"YAML config file (default: ${ENV_CONFIG})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config value, e.g. --set beam.beam_size=8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentence-g2p",
        description="sentence-level grapheme-to-phoneme pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="build train/valid/test slices from raw inputs")
    p.add_argument("--lexicon", required=True, help="pronunciation dictionary file")
    p.add_argument("--sentences", help="plain-text sentences, one per line")
    p.add_argument("--homographs", help="homograph records (jsonl)")
    p.add_argument("--glossary", help="homograph variant glossary (json, IPA)")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("tokenizer-train", help="learn a merged-pair phoneme vocabulary")
    p.add_argument("--data", nargs="+", required=True, help="jsonl slice file(s)")
    p.add_argument("--out", required=True, help="tokenizer output file")
    _add_config_flags(p)
    p.set_defaults(func=cmd_tokenizer_train)

    p = sub.add_parser("lm-train", help="train the phoneme language model")
    p.add_argument("--train", required=True, help="training slice (jsonl)")
    p.add_argument("--valid", required=True, help="validation slice (jsonl)")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("train", help="run the staged curriculum")
    p.add_argument("--data", required=True, help="directory from build-dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tokenizer", help="tokenizer file (switches decoder targets to merged tokens)")
    p.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="corpus metrics for a checkpoint on a slice")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--data", required=True, help="dataset slice (jsonl)")
    p.add_argument("--decoder", choices=["greedy", "beam"], default="greedy")
    p.add_argument("--lm", help="language-model checkpoint for shallow fusion")
    p.add_argument("--report", help="write a per-example jsonl report here")
    p.add_argument("--word-vectors", help="override the word-vector file path")
    p.add_argument("--separator", choices=sorted(SEPARATORS), default="symbol",
                   help="word-boundary rendering in the report")
    p.add_argument("--exclude-space", action="store_true",
                   help="drop word separators before scoring")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("transcribe", help="phoneme sequences for text lines")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--input", default="-", help="input file ('-' for stdin)")
    p.add_argument("--output", default="-", help="output file ('-' for stdout)")
    p.add_argument("--decoder", choices=["greedy", "beam"], default="beam")
    p.add_argument("--lm", help="language-model checkpoint for shallow fusion")
    p.add_argument("--word-vectors", help="override the word-vector file path")
    p.add_argument("--separator", choices=sorted(SEPARATORS), default="symbol",
                   help="word-boundary rendering")
    _add_config_flags(p)
    p.set_defaults(func=cmd_transcribe)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CliError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
