import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from gestureforge.features import FeatureMatrix
from gestureforge.fusion import (
    FusionConfig,
    FusionModule,
    cross_attend,
    fuse_concat,
    fuse_cross_attention,
    make_projection,
    project_single,
)


def fm(values, modality):
    return FeatureMatrix(values=np.asarray(values, dtype=np.float32), modality=modality)


def random_inputs(seed, n=6, da=5, dt=7, ds=8):
    rng = np.random.default_rng(seed)
    return (
        fm(rng.normal(size=(n, da)), "audio"),
        fm(rng.normal(size=(n, dt)), "text"),
        fm(rng.normal(size=(n, ds)), "speaker"),
    )


def identity_projection(dim):
    proj = torch.nn.Linear(dim, dim)
    with torch.no_grad():
        proj.weight.copy_(torch.eye(dim))
        proj.bias.zero_()
    return proj


def test_identity_projection_returns_concatenation():
    audio, _, speaker = random_inputs(0)
    proj = identity_projection(5 + 8)
    out = project_single(audio, speaker, proj)
    np.testing.assert_allclose(out.values, np.concatenate([audio.values, speaker.values], axis=1), atol=1e-6)
    assert out.modality == "fused"


def test_zero_weight_returns_bias():
    audio, _, speaker = random_inputs(1)
    proj = torch.nn.Linear(13, 4)
    with torch.no_grad():
        proj.weight.zero_()
        proj.bias.copy_(torch.tensor([1.0, -2.0, 3.0, 0.5]))
    out = project_single(audio, speaker, proj)
    np.testing.assert_allclose(out.values, np.tile([1.0, -2.0, 3.0, 0.5], (6, 1)), atol=1e-7)


def test_project_single_matches_gemm_oracle():
    audio, _, speaker = random_inputs(2)
    proj = make_projection(13, 9)
    out = project_single(audio, speaker, proj).values
    w = proj.weight.detach().numpy()
    b = proj.bias.detach().numpy()
    expected = np.concatenate([audio.values, speaker.values], axis=1) @ w.T + b
    np.testing.assert_allclose(out, expected, atol=1e-5)


def test_project_single_rejects_speaker_modality():
    _, _, speaker = random_inputs(3)
    with pytest.raises(ValueError, match="audio or text"):
        project_single(speaker, speaker, make_projection(16, 4))


def test_fuse_concat_zero_inputs_give_bias():
    audio, text, speaker = (fm(np.zeros((4, d)), m) for d, m in ((5, "audio"), (7, "text"), (8, "speaker")))
    proj = torch.nn.Linear(20, 3)
    with torch.no_grad():
        proj.weight.normal_()
        proj.bias.copy_(torch.tensor([0.5, 1.5, -0.5]))
    out = fuse_concat(audio, text, speaker, proj)
    np.testing.assert_allclose(out.values, np.tile([0.5, 1.5, -0.5], (4, 1)), atol=1e-7)


def test_fuse_concat_matches_gemm_oracle():
    audio, text, speaker = random_inputs(4)
    proj = make_projection(20, 6)
    out = fuse_concat(audio, text, speaker, proj).values
    stacked = np.concatenate([audio.values, text.values, speaker.values], axis=1)
    expected = stacked @ proj.weight.detach().numpy().T + proj.bias.detach().numpy()
    np.testing.assert_allclose(out, expected, atol=1e-5)


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_property_concat_fusion_affine(seed, alpha):
    audio, text, speaker = random_inputs(seed)
    zero_audio = fm(np.zeros_like(audio.values), "audio")
    scaled = fm(alpha * audio.values, "audio")
    torch.manual_seed(seed % 1000)
    proj = make_projection(20, 6)
    f = lambda a: fuse_concat(a, text, speaker, proj).values
    lhs = f(scaled) - f(zero_audio)
    rhs = alpha * (f(audio) - f(zero_audio))
    np.testing.assert_allclose(lhs, rhs, atol=1e-4)


def test_dimension_mismatch_raises():
    audio, text, speaker = random_inputs(5)
    with pytest.raises(ValueError, match="expects"):
        fuse_concat(audio, text, speaker, make_projection(19, 6))
    short = fm(np.zeros((3, 5)), "audio")
    with pytest.raises(ValueError, match="frame count"):
        fuse_concat(short, text, speaker, make_projection(20, 6))


# ---------------------------------------------------------------------------
# cross-attention
# ---------------------------------------------------------------------------

def test_single_frame_attention_returns_text_row():
    xa = torch.tensor([[0.3, -1.2]])
    xt = torch.tensor([[2.0, 5.0]])
    np.testing.assert_allclose(cross_attend(xa, xt).numpy(), [[2.0, 5.0]], atol=1e-7)


def test_attention_rows_sum_to_one():
    torch.manual_seed(0)
    xa, xt = torch.randn(9, 4), torch.randn(9, 4)
    weights = torch.softmax(xa @ xt.T / 2.0, dim=1)
    np.testing.assert_allclose(weights.sum(dim=1).numpy(), np.ones(9), atol=1e-6)


def test_two_frame_uniform_attention_hand_case():
    # equal logits -> uniform weights -> every output row = mean(text rows) = 2.0
    xa = torch.tensor([[0.0], [0.0]])
    xt = torch.tensor([[1.0], [3.0]])
    np.testing.assert_allclose(cross_attend(xa, xt).numpy(), [[2.0], [2.0]], atol=1e-7)


def test_cross_attention_outputs_in_text_envelope():
    rng = np.random.default_rng(6)
    audio, text, speaker = random_inputs(6)
    torch.manual_seed(6)
    proj_a, proj_t = make_projection(13, 5), make_projection(15, 5)
    out = fuse_cross_attention(audio, text, speaker, proj_a, proj_t).values
    xt = (torch.cat([torch.from_numpy(text.values), torch.from_numpy(speaker.values)], dim=1) @ proj_t.weight.T + proj_t.bias).detach().numpy()
    assert np.all(out <= xt.max(axis=0) + 1e-5)
    assert np.all(out >= xt.min(axis=0) - 1e-5)


def test_cross_attention_requires_matching_widths():
    audio, text, speaker = random_inputs(7)
    with pytest.raises(ValueError, match="output width"):
        fuse_cross_attention(audio, text, speaker, make_projection(13, 5), make_projection(15, 6))


def test_cross_attend_rejects_empty():
    with pytest.raises(ValueError, match="at least one frame"):
        cross_attend(torch.zeros(0, 3), torch.zeros(0, 3))


# ---------------------------------------------------------------------------
# module-level behaviour
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["audio_only", "text_only", "concat", "cross_attention"])
def test_output_shape_always_n_by_d(mode):
    torch.manual_seed(1)
    module = FusionModule(FusionConfig(mode=mode, proj_dim=11), audio_dim=5, text_dim=7, speaker_dim=8)
    audio, text, speaker = (torch.randn(6, d) for d in (5, 7, 8))
    out = module(audio, text, speaker)
    assert out.shape == (6, 11)


def test_unknown_mode_rejected():
    with pytest.raises(ValueError, match="unknown fusion mode"):
        FusionConfig(mode="film")


def test_make_projection_init_bounds():
    torch.manual_seed(2)
    proj = make_projection(64, 32)
    bound = 1.0 / np.sqrt(64)
    assert proj.weight.abs().max().item() <= bound
    assert proj.bias.abs().max().item() == 0.0
