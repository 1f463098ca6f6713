"""Acceptance criteria, one test per criterion.

The terminal summary prints a PASS/FAIL line per criterion (see conftest).
Training-based criteria are slow: the directional comparison trains nine
full-size models and takes roughly 8-10 minutes on one core.
"""
import hashlib
import math
import time

import numpy as np
import pytest

from cswd import gradcheck
from cswd.autograd import Tensor
from cswd.cli import main as cli_main
from cswd.datagen import CorpusSpec, generate_corpus, load_manifest
from cswd.layers import MultiHeadAttention, length_mask, stats_pool
from cswd.model import ARCHS, CswModel, ModelConfig, UtteranceBatch, conv_stack_lengths
from cswd.trainer import TrainConfig, evaluate, prepare, read_report, run_ablation, train

# corpus for the directional comparison: both channels individually degraded
DIRECTIONAL_SPEC = dict(
    n_utterances=2400, eval_fraction=1 / 6, snr_db=5.0, corruption_rate=0.15,
    corruption_mode="other", formant_jitter_hz=150.0, seed=11,
)
DIRECTIONAL_SEEDS = (0, 1, 2)
DIRECTIONAL_EPOCHS = 8


def _detail(record_property, text):
    record_property("detail", text)


@pytest.mark.criterion("published-accuracy reproducibility")
def test_published_accuracies_not_reproducible():
    pytest.skip("absolute accuracies need the external challenge corpus and ASR phoneme labels; "
                "covered by the substituted property criteria below")


@pytest.mark.criterion("gradient suite")
def test_gradient_suite(record_property):
    t0 = time.perf_counter()
    results = gradcheck.run("all", seed=0, precision=64)
    elapsed = time.perf_counter() - t0
    worst = max(results.values())
    _detail(record_property, f"worst rel err {worst:.2e} over {len(results)} scopes in {elapsed:.1f} s")
    for name, err in results.items():
        assert err < 1e-4, f"{name}: {err:.3e}"
    assert {"conv", "bilstm", "embedding", "mha", "transformer", "pooling", "heads", "model"} <= set(results)
    assert elapsed < 120


@pytest.mark.criterion("shape/length suite")
def test_shape_suite(record_property):
    cfg = ModelConfig(vocab_size=44)
    assert conv_stack_lengths(98, cfg.audio_conv) == [98, 31, 9]
    assert conv_stack_lengths(20, cfg.phoneme_conv) == [20, 18, 14]
    model = CswModel(cfg, seed=0)
    rng = np.random.default_rng(0)
    batch = UtteranceBatch.from_items([rng.normal(size=(98, 13))], [rng.integers(1, 44, 20)])
    seq_a, len_a, ua = model.audio_branch(batch.mfcc, batch.mfcc_len)
    seq_p, len_p, up = model.phoneme_branch(batch.phonemes, batch.phoneme_len)
    assert seq_a.shape[1] == 9 and int(len_a[0]) == 9
    assert seq_p.shape[1] == 14 and int(len_p[0]) == 14
    assert ua.shape == (1, 512) and up.shape == (1, 512)
    assert cfg.fused_dim == 1024 and model.proj.W.shape[0] == 1024
    _detail(record_property, "audio 98->31->9, phoneme 20->18->14, U=512, C=1024")


@pytest.mark.criterion("attention invariants")
def test_attention_invariants(record_property):
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(50):
        B, T = int(rng.integers(1, 5)), int(rng.integers(1, 12))
        mha = MultiHeadAttention(16, 4, rng, np.float32)
        lengths = rng.integers(1, T + 1, B)
        mha(Tensor(rng.normal(size=(B, T, 16)).astype(np.float32)), lengths)
        w = mha.last_attention
        worst = max(worst, float(np.abs(w.sum(-1) - 1).max()))
        masked = np.broadcast_to(~length_mask(lengths, T)[:, None, None, :], w.shape)
        assert np.all(w[masked] == 0.0)
    mha = MultiHeadAttention(16, 4, rng, np.float32)
    mha(Tensor(rng.normal(size=(3, 1, 16)).astype(np.float32)))
    assert np.all(mha.last_attention == 1.0)
    assert worst <= 1e-6
    _detail(record_property, f"max |row sum - 1| = {worst:.1e}; masked weights exactly 0; T=1 -> 1.0")


@pytest.mark.criterion("pooling oracle")
def test_pooling_oracle(record_property):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        B, T, C = int(rng.integers(1, 5)), int(rng.integers(1, 15)), int(rng.integers(1, 9))
        x = rng.normal(size=(B, T, C))
        lengths = rng.integers(1, T + 1, B)
        out = stats_pool(Tensor(x), lengths).data
        for b in range(B):
            for c in range(C):
                vals = [x[b, t, c] for t in range(lengths[b])]
                mu = sum(vals) / len(vals)
                sd = math.sqrt(sum((v - mu) ** 2 for v in vals) / len(vals) + 1e-9)
                worst = max(worst, abs(out[b, c] - mu), abs(out[b, C + c] - sd))
    assert worst <= 1e-6
    _detail(record_property, f"max deviation from loop {worst:.1e}")


@pytest.mark.criterion("padding invariance")
def test_padding_invariance(record_property):
    model = CswModel(ModelConfig(vocab_size=44, precision=32), seed=4)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(5):
        n = int(rng.integers(1, 5))
        mf = [rng.normal(size=(int(rng.integers(19, 120)), 13)) for _ in range(n)]
        ph = [rng.integers(1, 44, int(rng.integers(7, 25))) for _ in range(n)]
        ref = model.forward(UtteranceBatch.from_items(mf, ph)).data
        padded = model.forward(UtteranceBatch.from_items(mf, ph, t_max=200, n_max=40)).data
        worst = max(worst, float(np.abs(ref - padded).max()))
    assert worst <= 1e-5
    _detail(record_property, f"max probability change {worst:.1e} (float32)")


@pytest.mark.criterion("overfit smoke")
def test_overfit_smoke(tmp_path, record_property):
    spec = CorpusSpec(n_utterances=32, eval_fraction=0.0, snr_db=30.0, seed=21)
    generate_corpus(spec, tmp_path)
    entries = load_manifest(tmp_path / "manifest.tsv")
    vocab, items, _ = prepare(entries, entries[:1])
    model = CswModel(ModelConfig(vocab_size=len(vocab)), seed=0)
    t0 = time.perf_counter()
    rep = train(model, items, items, TrainConfig(epochs=300, seed=0, target_eval_accuracy=1.0))
    elapsed = time.perf_counter() - t0
    acc, _ = evaluate(model, items)
    _detail(record_property, f"train accuracy {acc:.3f} after {len(rep.train_loss)} epochs, {elapsed:.0f} s")
    assert acc == 1.0
    assert elapsed < 300


@pytest.fixture(scope="module")
def directional_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("directional")
    generate_corpus(CorpusSpec(**DIRECTIONAL_SPEC), out)
    return prepare(load_manifest(out / "train.tsv"), load_manifest(out / "eval.tsv"))


@pytest.mark.slow
@pytest.mark.criterion("directional multi-modal gain")
def test_directional_multimodal_gain(directional_corpus, record_property):
    vocab, tr, ev = directional_corpus
    assert (len(tr), len(ev)) == (2000, 400)
    t0 = time.perf_counter()
    rep = run_ablation(tr, ev, len(vocab), ("multi_modal", "audio_only", "phoneme_only"),
                       ["cnn_bilstm_transformer"], list(DIRECTIONAL_SEEDS),
                       TrainConfig(epochs=DIRECTIONAL_EPOCHS))
    elapsed = time.perf_counter() - t0
    multi, audio, phon = (rep.median(v) for v in ("multi_modal", "audio_only", "phoneme_only"))
    _detail(record_property, f"median acc multi {multi:.4f}, audio {audio:.4f}, phoneme {phon:.4f} "
                             f"({elapsed / 60:.1f} min)")
    assert multi >= audio + 0.02
    assert multi >= phon + 0.02
    assert elapsed < 3600


@pytest.mark.criterion("ablation harness")
def test_ablation_harness(small_items, tmp_path, record_property):
    vocab, tr, ev = small_items
    rep = run_ablation(tr, ev, len(vocab), ["multi_modal"], list(ARCHS), [0], TrainConfig(epochs=1, warmup_steps=5))
    rep.write(tmp_path / "ablation.txt")
    parsed = read_report(tmp_path / "ablation.txt")
    assert parsed["runs"] == "3"
    for arch in ARCHS:
        acc = float(parsed[f"multi_modal.{arch}.median_accuracy"])
        assert 0.0 <= acc <= 1.0
    assert parsed["best"].split("/")[1] in ARCHS
    _detail(record_property, f"{len(ARCHS)} architectures trained; report has {len(parsed)} keys")


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.mark.criterion("determinism")
def test_determinism(small_items, tmp_path, record_property):
    vocab, tr, ev = small_items
    runs = []
    for _ in range(2):
        model = CswModel(ModelConfig(vocab_size=len(vocab)), seed=5)
        rep = train(model, tr, ev, TrainConfig(epochs=2, seed=5, warmup_steps=10))
        runs.append((rep.train_loss, evaluate(model, ev)[1]))
    loss_diff = float(np.max(np.abs(np.array(runs[0][0]) - np.array(runs[1][0]))))
    assert loss_diff <= 1e-6
    np.testing.assert_array_equal(runs[0][1], runs[1][1])
    for name in ("a", "b"):
        assert cli_main(["gencorpus", "--n", "20", "--seed", "3", "--snr-db", "10",
                         "--corruption-rate", "0.1", "--out", str(tmp_path / name)]) == 0
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    _detail(record_property, f"max loss difference {loss_diff:.1e}; predictions and corpus bytes identical")
