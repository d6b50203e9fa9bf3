"""Command-line pipeline: every subcommand exercised against a toy corpus."""

import io
import json

import pytest
import yaml

from sentence_g2p.cli import ENV_CONFIG, main
from sentence_g2p.synthdata import build_toy_corpus, write_toy_corpus
from sentence_g2p.tokenizer import PhonemeTokenizer

TINY_MODEL = [
    "--set", "model.emb_dim=8", "--set", "model.enc_hidden=8",
    "--set", "model.enc_layers=1", "--set", "model.dec_hidden=8",
    "--set", "model.dec_layers=1", "--set", "model.att_dim=8",
    "--set", "model.dropout=0.0",
]
ONE_EPOCH = [
    "--set", "train.lexicon_epochs=1", "--set", "train.sentence_epochs=1",
    "--set", "train.homograph_epochs=1", "--set", "train.batch_size=16",
    "--set", "train.val_batch_size=32",
]


@pytest.fixture(scope="module")
def raw_dir(tmp_path_factory):
    corpus = build_toy_corpus(seed=1, n_words=60, n_sentences=120,
                              n_homograph_sentences=80, n_heldout_sentences=40,
                              cues_per_sign=6, heldout_cues_per_sign=3)
    out = tmp_path_factory.mktemp("raw")
    write_toy_corpus(corpus, out)
    return out


def build_args(raw, out):
    return [
        "build-dataset",
        "--lexicon", str(raw / "lexicon.txt"),
        "--sentences", str(raw / "sentences.txt"),
        "--homographs", str(raw / "homograph_records.jsonl"),
        "--glossary", str(raw / "glossary.json"),
        "--out", str(out),
    ]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory, raw_dir):
    out = tmp_path_factory.mktemp("ds")
    assert main(build_args(raw_dir, out)) == 0
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("run")
    argv = ["train", "--data", str(data_dir), "--out", str(out)]
    assert main(argv + TINY_MODEL + ONE_EPOCH) == 0
    return out


@pytest.fixture(scope="module")
def lm_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("lm")
    argv = [
        "lm-train",
        "--train", str(data_dir / "lexicon.train.jsonl"),
        "--valid", str(data_dir / "lexicon.valid.jsonl"),
        "--out", str(out),
        "--set", "lm.emb_dim=8", "--set", "lm.hidden=16",
        "--set", "lm.layers=1", "--set", "lm_train.epochs=2",
    ]
    assert main(argv) == 0
    return out


class TestBuildDataset:
    def test_manifest_counts(self, data_dir):
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert manifest["lexicon_entries"] == 64
        assert manifest["lexicon_rejected_lines"] == 0
        slices = manifest["slices"]
        assert set(slices) == {"lexicon", "sentence", "homograph"}
        for name, entry in slices.items():
            assert sum(entry["splits"].values()) == entry["built"]
            path = data_dir / f"{name}.train.jsonl"
            lines = [l for l in path.read_text().splitlines() if l]
            assert len(lines) == entry["splits"]["train"]
        assert slices["sentence"]["dropped"] == 0
        assert slices["homograph"]["dropped"] == 0

    def test_rerun_is_byte_identical(self, tmp_path, raw_dir, data_dir):
        out2 = tmp_path / "again"
        assert main(build_args(raw_dir, out2)) == 0
        for name in ("manifest.json", "homograph.train.jsonl", "sentence.valid.jsonl"):
            assert (out2 / name).read_bytes() == (data_dir / name).read_bytes()

    def test_homographs_require_glossary(self, tmp_path, raw_dir, capsys):
        argv = [
            "build-dataset", "--lexicon", str(raw_dir / "lexicon.txt"),
            "--homographs", str(raw_dir / "homograph_records.jsonl"),
            "--out", str(tmp_path / "x"),
        ]
        assert main(argv) == 1
        assert "--glossary" in capsys.readouterr().err

    def test_missing_lexicon(self, tmp_path, capsys):
        argv = ["build-dataset", "--lexicon", str(tmp_path / "nope.txt"),
                "--out", str(tmp_path / "x")]
        assert main(argv) == 1
        assert "missing lexicon" in capsys.readouterr().err

    def test_count_mode_via_env_config(self, tmp_path, raw_dir, monkeypatch):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump(
            {"data": {"valid_count": 5, "test_count": 5}}
        ))
        monkeypatch.setenv(ENV_CONFIG, str(cfg))
        out = tmp_path / "counted"
        assert main(build_args(raw_dir, out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        splits = manifest["slices"]["lexicon"]["splits"]
        assert splits == {"train": 54, "valid": 5, "test": 5}


class TestConfigHandling:
    def test_unknown_key_exit_2(self, tmp_path, raw_dir, capsys):
        argv = build_args(raw_dir, tmp_path / "x") + ["--set", "train.lr_mian=0.1"]
        assert main(argv) == 2
        assert "train.lr_mian" in capsys.readouterr().err

    def test_wrong_value_type_exit_2(self, tmp_path, raw_dir, capsys):
        argv = build_args(raw_dir, tmp_path / "x") + ["--set", "seed=hello"]
        assert main(argv) == 2
        assert "integer" in capsys.readouterr().err

    def test_malformed_set_exit_2(self, tmp_path, raw_dir, capsys):
        argv = build_args(raw_dir, tmp_path / "x") + ["--set", "seed"]
        assert main(argv) == 2
        assert "key=value" in capsys.readouterr().err

    def test_effective_config_is_echoed(self, run_dir):
        echoed = yaml.safe_load((run_dir / "effective_config.yaml").read_text())
        assert echoed["model"]["emb_dim"] == 8
        assert echoed["train"]["lexicon_epochs"] == 1


class TestTokenizerTrain:
    def test_trains_and_saves(self, tmp_path, data_dir, capsys):
        out = tmp_path / "tok.tsv"
        argv = [
            "tokenizer-train", "--data", str(data_dir / "lexicon.train.jsonl"),
            "--out", str(out), "--set", "tokenizer.target_size=60",
        ]
        assert main(argv) == 0
        assert "tokenizer: 60 tokens" in capsys.readouterr().out
        tok = PhonemeTokenizer.load(out)
        assert len(tok) == 60 and len(tok.merges) == 60 - 43


class TestLmTrain:
    def test_outputs(self, lm_dir):
        assert (lm_dir / "lm.ckpt").exists()
        assert (lm_dir / "effective_config.yaml").exists()
        records = [
            json.loads(l)
            for l in (lm_dir / "metrics.jsonl").read_text().splitlines()
        ]
        assert len(records) == 2
        assert {"epoch", "train_loss", "valid_perplexity"} <= set(records[0])

    def test_empty_slice_fails(self, tmp_path, data_dir, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        argv = ["lm-train", "--train", str(empty),
                "--valid", str(data_dir / "lexicon.valid.jsonl"),
                "--out", str(tmp_path / "o")]
        assert main(argv) == 1
        assert "non-empty" in capsys.readouterr().err


class TestTrain:
    def test_outputs(self, run_dir):
        assert (run_dir / "model.ckpt").exists()
        for stage in ("lexicon", "sentence", "homograph"):
            assert (run_dir / "ckpt" / f"best_{stage}.ckpt").exists()
        assert (run_dir / "ckpt" / "last.ckpt").exists()
        records = [
            json.loads(l)
            for l in (run_dir / "metrics.jsonl").read_text().splitlines()
        ]
        assert [r["stage"] for r in records] == ["lexicon", "sentence", "homograph"]

    def test_resume_without_checkpoint_fails(self, tmp_path, data_dir, capsys):
        argv = ["train", "--data", str(data_dir), "--out", str(tmp_path / "r"),
                "--resume"]
        assert main(argv) == 1
        assert "no checkpoint" in capsys.readouterr().err

    def test_resume_continues(self, tmp_path, data_dir):
        out = tmp_path / "resume"
        base = ["train", "--data", str(data_dir), "--out", str(out)]
        one_stage = TINY_MODEL + [
            "--set", "train.lexicon_epochs=1", "--set", "train.batch_size=16",
        ]
        cfg = out / "stages.yaml"
        out.mkdir()
        cfg.write_text(yaml.safe_dump({"train": {"stages": ["lexicon"]}}))
        stage_flag = ["--config", str(cfg)]
        assert main(base + one_stage + stage_flag) == 0
        n_before = len((out / "metrics.jsonl").read_text().splitlines())
        argv = base + ["--resume", "--set", "train.lexicon_epochs=2"]
        assert main(argv + one_stage + stage_flag) == 0
        n_after = len((out / "metrics.jsonl").read_text().splitlines())
        # restored config still says one epoch, so the stage is already done
        assert n_after >= n_before

    def test_tokenizer_with_ctc_is_rejected(self, tmp_path, data_dir, capsys):
        tok = tmp_path / "tok.tsv"
        assert main([
            "tokenizer-train", "--data", str(data_dir / "lexicon.train.jsonl"),
            "--out", str(tok), "--set", "tokenizer.target_size=50",
        ]) == 0
        argv = ["train", "--data", str(data_dir), "--out", str(tmp_path / "t"),
                "--tokenizer", str(tok)] + TINY_MODEL + ONE_EPOCH
        assert main(argv) == 1
        assert "lambda_c" in capsys.readouterr().err


class TestEvaluate:
    def test_greedy_metrics(self, run_dir, data_dir, capsys):
        argv = ["evaluate", "--model", str(run_dir / "model.ckpt"),
                "--data", str(data_dir / "homograph.valid.jsonl")]
        assert main(argv) == 0
        out = capsys.readouterr().out
        assert "corpus PER:" in out
        assert "homograph accuracy:" in out
        assert "confusion:" in out

    def test_beam_decoder(self, run_dir, data_dir, capsys):
        argv = ["evaluate", "--model", str(run_dir / "model.ckpt"),
                "--data", str(data_dir / "homograph.valid.jsonl"),
                "--decoder", "beam", "--set", "beam.beam_size=2",
                "--set", "beam.max_len=8"]
        assert main(argv) == 0
        assert "corpus PER:" in capsys.readouterr().out

    def test_report_file(self, tmp_path, run_dir, data_dir, capsys):
        report = tmp_path / "report.jsonl"
        argv = ["evaluate", "--model", str(run_dir / "model.ckpt"),
                "--data", str(data_dir / "sentence.valid.jsonl"),
                "--report", str(report), "--separator", "dash"]
        assert main(argv) == 0
        records = [json.loads(l) for l in report.read_text().splitlines()]
        assert records and {"id", "ref", "hyp", "distance"} <= set(records[0])
        assert any("-" in r["ref"] for r in records)

    def test_inventory_mismatch(self, tmp_path, run_dir, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps(
            {"id": "x", "char": "GO", "phn": ["NOT_A_PHONEME"], "words": ["GO"]}
        ) + "\n")
        argv = ["evaluate", "--model", str(run_dir / "model.ckpt"),
                "--data", str(bad)]
        assert main(argv) == 1
        assert "inventory mismatch" in capsys.readouterr().err

    def test_empty_dataset(self, tmp_path, run_dir, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        argv = ["evaluate", "--model", str(run_dir / "model.ckpt"),
                "--data", str(empty)]
        assert main(argv) == 1
        assert "empty dataset" in capsys.readouterr().err


class TestTranscribe:
    def test_stdin_lines(self, run_dir, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO("TEEBO GO\n\nnaïve\n"))
        argv = ["transcribe", "--model", str(run_dir / "model.ckpt"),
                "--decoder", "greedy"]
        assert main(argv) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
        assert lines[1] == ""
        assert lines[2].startswith("ERROR: character")
        assert "Ï" in lines[2]

    def test_file_to_file(self, tmp_path, run_dir):
        src = tmp_path / "in.txt"
        src.write_text("BO TAT\n")
        dst = tmp_path / "out.txt"
        argv = ["transcribe", "--model", str(run_dir / "model.ckpt"),
                "--input", str(src), "--output", str(dst),
                "--decoder", "greedy"]
        assert main(argv) == 0
        assert dst.exists()
        assert not list(tmp_path.glob("*.tmp"))
        assert len(dst.read_text().splitlines()) == 1

    def test_beam_with_lm(self, run_dir, lm_dir, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO("SAKEL\n"))
        argv = ["transcribe", "--model", str(run_dir / "model.ckpt"),
                "--lm", str(lm_dir / "lm.ckpt"),
                "--set", "beam.beam_size=2", "--set", "beam.max_len=8"]
        assert main(argv) == 0
        assert len(capsys.readouterr().out.splitlines()) == 1

    def test_missing_input_file(self, tmp_path, run_dir, capsys):
        argv = ["transcribe", "--model", str(run_dir / "model.ckpt"),
                "--input", str(tmp_path / "nope.txt")]
        assert main(argv) == 1
        assert "missing input" in capsys.readouterr().err


class TestWordVectorRuns:
    def test_hashed_vectors_train_and_transcribe(self, tmp_path, data_dir,
                                                 capsys, monkeypatch):
        cfg = tmp_path / "wv.yaml"
        cfg.write_text(yaml.safe_dump({
            "model": {"emb_dim": 8, "enc_hidden": 8, "enc_layers": 1,
                      "dec_hidden": 8, "dec_layers": 1, "att_dim": 8,
                      "dropout": 0.0},
            "word_vectors": {"kind": "hashed", "dim": 8},
            "train": {"stages": ["lexicon", "homograph"], "lexicon_epochs": 1,
                      "homograph_epochs": 1, "batch_size": 16,
                      "val_batch_size": 32},
        }))
        out = tmp_path / "wvrun"
        argv = ["train", "--data", str(data_dir), "--out", str(out),
                "--config", str(cfg)]
        assert main(argv) == 0
        capsys.readouterr()  # drain the train command's output

        monkeypatch.setattr("sys.stdin", io.StringIO("TEEBO GO\n"))
        argv = ["transcribe", "--model", str(out / "model.ckpt"),
                "--decoder", "greedy"]
        assert main(argv) == 0
        assert len(capsys.readouterr().out.splitlines()) == 1
