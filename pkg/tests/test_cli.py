import subprocess
import sys

import numpy as np
import pytest

from cswd.cli import main, parse_args
from cswd.trainer import read_report

SMALL_MODEL = ["--epochs", "1", "--warmup", "5", "--batch-size", "16"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    assert main(["gencorpus", "--n", "40", "--seed", "2", "--eval-fraction", "0.25", "--out", str(out)]) == 0
    return out


def test_gencorpus_outputs(corpus):
    for name in ("manifest.tsv", "train.tsv", "eval.tsv", "truth.tsv", "corpus.cfg"):
        assert (corpus / name).exists()
    assert len((corpus / "eval.tsv").read_text().splitlines()) == 10


def test_featdump_to_stdout(corpus, capsys):
    assert main(["featdump", "--wav", str(corpus / "wav" / "utt00000.wav")]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert all(len(r.split(",")) == 13 for r in rows)


def test_featdump_to_file(corpus, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["featdump", "--wav", str(corpus / "wav" / "utt00001.wav"), "--out", str(out)]) == 0
    assert np.loadtxt(out, delimiter=",").shape[1] == 13


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["train", "--manifest", "x"]) == 1
    assert main(["gencorpus", "--out", "x", "--corruption-mode", "swap"]) == 1
    assert "cswd" in capsys.readouterr().err


def test_runtime_errors_exit_2(tmp_path, capsys):
    assert main(["featdump", "--wav", str(tmp_path / "missing.wav")]) == 2
    assert main(["train", "--manifest", str(tmp_path / "no.tsv"), "--eval", str(tmp_path / "no.tsv"),
                 "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_config_file_sets_defaults_and_flags_win(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# training\nepochs = 7\nlr = 0.002\nmanifest = m.tsv\n")
    args = parse_args(["train", "--config", str(cfg), "--eval", "e.tsv", "--out", "o", "--epochs", "3"])
    assert args.epochs == 3 and args.lr == 0.002 and args.manifest == "m.tsv"
    cfg.write_text("bogus = 1\n")
    assert main(["train", "--config", str(cfg), "--manifest", "m", "--eval", "e", "--out", "o"]) == 1


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("CSWD_SEED", "17")
    assert parse_args(["gradcheck"]).seed == 17
    assert parse_args(["gradcheck", "--seed", "4"]).seed == 4
    monkeypatch.setenv("CSWD_SEED", "abc")
    assert main(["gradcheck", "--scope", "heads"]) == 1


def test_train_then_eval(corpus, tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["train", "--manifest", str(corpus / "train.tsv"), "--eval", str(corpus / "eval.tsv"),
            "--variant", "phoneme_only", "--arch", "cnn_bilstm", "--out", str(out), *SMALL_MODEL]
    assert main(argv) == 0
    rep = read_report(out / "report.txt")
    assert rep["config.model.variant"] == "phoneme_only"
    preds = tmp_path / "pred.tsv"
    assert main(["eval", "--checkpoint", str(out), "--manifest", str(corpus / "eval.tsv"), "--out", str(preds)]) == 0
    text = capsys.readouterr().out
    acc = float([l for l in text.splitlines() if l.startswith("accuracy = ")][0].split("= ")[1])
    assert acc == pytest.approx(float(rep["final_eval_accuracy"]), abs=1e-6)
    lines = preds.read_text().splitlines()
    assert lines[0].split("\t") == ["utt_id", "label", "prediction", "p_cs"]
    assert len(lines) == 11


def test_ablate_writes_report(corpus, tmp_path):
    out = tmp_path / "abl"
    argv = ["ablate", "--manifest", str(corpus / "train.tsv"), "--eval", str(corpus / "eval.tsv"),
            "--variants", "audio_only,phoneme_only", "--archs", "cnn_bilstm", "--seeds", "0,1",
            "--out", str(out), *SMALL_MODEL]
    assert main(argv) == 0
    rep = read_report(out / "ablation.txt")
    assert rep["runs"] == "4"
    assert "audio_only.cnn_bilstm.median_accuracy" in rep
    assert main([*argv[:-len(SMALL_MODEL) - 2], "--out", str(out), "--variants", "nope"]) == 1


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--scope", "pooling"]) == 0
    assert "ok" in capsys.readouterr().out


def test_module_entry_point(corpus):
    res = subprocess.run([sys.executable, "-m", "cswd", "featdump", "--wav", str(corpus / "wav" / "utt00002.wav")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.count("\n") > 10
