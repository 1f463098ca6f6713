import numpy as np
import pytest

from cswd import gradcheck
from cswd.errors import SequenceTooShort, VariantMismatch
from cswd.model import ARCHS, VARIANTS, CswModel, ModelConfig, UtteranceBatch, conv_stack_lengths, parameter_count


def _batch(rng, frames, phonemes, vocab=44, labels=None):
    mf = [rng.normal(size=(t, 13)) for t in frames]
    ph = [rng.integers(1, vocab, size=n) for n in phonemes]
    return UtteranceBatch.from_items(mf, ph, labels=labels)


@pytest.fixture(scope="module")
def model32():
    return CswModel(ModelConfig(vocab_size=44), seed=0)


def test_length_chain_matches_hand_computation():
    cfg = ModelConfig()
    assert conv_stack_lengths(98, cfg.audio_conv) == [98, 31, 9]
    assert conv_stack_lengths(20, cfg.phoneme_conv) == [20, 18, 14]


def test_minimum_input_lengths():
    cfg = ModelConfig()
    assert cfg.min_audio_frames() == 19
    assert conv_stack_lengths(19, cfg.audio_conv) == [19, 5, 1]
    assert conv_stack_lengths(18, cfg.audio_conv)[-1] == 0
    assert cfg.min_phonemes() == 7
    assert conv_stack_lengths(7, cfg.phoneme_conv) == [7, 5, 1]


def test_too_short_audio_raises(model32):
    rng = np.random.default_rng(0)
    batch = _batch(rng, [13], [10])
    with pytest.raises(SequenceTooShort):
        model32.forward(batch)


def test_branch_shapes(model32):
    rng = np.random.default_rng(1)
    batch = _batch(rng, [98, 60], [20, 12])
    seq_a, len_a, ua = model32.audio_branch(batch.mfcc, batch.mfcc_len)
    seq_p, len_p, up = model32.phoneme_branch(batch.phonemes, batch.phoneme_len)
    assert seq_a.shape == (2, 9, 256)
    np.testing.assert_array_equal(len_a, [9, 5])
    assert seq_p.shape == (2, 14, 256)
    np.testing.assert_array_equal(len_p, [14, 6])
    assert ua.shape == (2, 512) and up.shape == (2, 512)
    assert model32.config.fused_dim == 1024
    probs = model32.fuse_and_classify(ua, up).data
    assert probs.shape == (2, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(probs, model32.forward(batch).data, atol=1e-6)


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("arch", ARCHS)
def test_every_variant_and_arch_runs(variant, arch):
    rng = np.random.default_rng(2)
    cfg = ModelConfig.tiny(variant=variant, arch=arch)
    model = CswModel(cfg, seed=0)
    probs = model.forward(_batch(rng, [40, 25], [9, 12], vocab=6)).data
    assert probs.shape == (2, 2)
    assert cfg.fused_dim == 2 * 16 * (cfg.uses_audio + cfg.uses_phoneme)
    assert sum(p.data.size for p in model.parameters()) == parameter_count(cfg)


def test_fusion_needs_multi_modal():
    model = CswModel(ModelConfig.tiny(variant="audio_only"))
    with pytest.raises(VariantMismatch):
        model.fuse_and_classify(None, None)


def test_parameter_count_default_config(model32):
    assert parameter_count(ModelConfig(vocab_size=44)) == 2_186_306
    assert sum(p.data.size for p in model32.parameters()) == 2_186_306


def test_parameter_count_breakdown_by_hand():
    # conv blocks have no bias, BN adds gamma and beta
    audio_conv = 64 * 13 * 7 + 128 + 64 * 64 * 5 + 128
    phon_conv = 64 * 128 * 3 + 128 + 64 * 64 * 5 + 128
    lstm = 2 * (64 * 512 + 128 * 512 + 512)
    # per encoder layer: two layer norms, six 256x256 matrices, biases on all but the key
    enc = 2 * (2 * 512 + 6 * 256 * 256 + 5 * 256)
    head = 1024 * 128 + 128 + 128 * 2 + 2
    emb = 44 * 128
    assert parameter_count(ModelConfig(vocab_size=44)) == audio_conv + phon_conv + 2 * lstm + 2 * enc + head + emb


def test_padding_invariance_float32(model32):
    rng = np.random.default_rng(3)
    mf = [rng.normal(size=(t, 13)) for t in (50, 80, 35)]
    ph = [rng.integers(1, 44, size=n) for n in (9, 15, 11)]
    tight = model32.forward(UtteranceBatch.from_items(mf, ph)).data
    loose = model32.forward(UtteranceBatch.from_items(mf, ph, t_max=140, n_max=30)).data
    single = model32.forward(UtteranceBatch.from_items(mf[:1], ph[:1])).data
    assert tight.dtype == np.float32
    np.testing.assert_allclose(loose, tight, atol=1e-5, rtol=0)
    np.testing.assert_allclose(single[0], tight[0], atol=1e-5, rtol=0)


def test_eval_mode_is_deterministic(model32):
    rng = np.random.default_rng(4)
    batch = _batch(rng, [40, 44], [10, 8])
    a = model32.forward(batch).data
    b = model32.forward(batch).data
    assert a.tobytes() == b.tobytes()


def test_state_dict_roundtrip():
    a = CswModel(ModelConfig.tiny(), seed=1)
    b = CswModel(ModelConfig.tiny(), seed=2)
    b.load_state_dict(a.state_dict())
    rng = np.random.default_rng(5)
    batch = _batch(rng, [40], [10], vocab=6)
    np.testing.assert_array_equal(a.forward(batch).data, b.forward(batch).data)


def test_pad_row_stays_zero_after_step():
    model = CswModel(ModelConfig.tiny(), seed=0)
    model.embedding.table.data[0] = 1.0
    model.after_step()
    assert np.all(model.embedding.table.data[0] == 0.0)


@pytest.mark.parametrize("arch", ARCHS)
def test_tiny_model_gradients(arch):
    assert gradcheck.check_model(seed=0, max_coords=150, arch=arch) < 1e-4
