"""Model-input construction from audio/text/speaker feature matrices.

Four variants: a single projected modality (audio or text, each concatenated
with the speaker rows), a single linear layer over the full concatenation, or
single-head cross-attention where projected audio rows query projected text
rows.  All variants produce an (N, proj_dim) block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .features import FeatureMatrix

FUSION_MODES = ("audio_only", "text_only", "concat", "cross_attention")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "text_only"
    proj_dim: int = 64  # defaults to the generator model width

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}; expected one of {FUSION_MODES}")
        if self.proj_dim < 1:
            raise ValueError("proj_dim must be >= 1")


def make_projection(in_dim: int, out_dim: int) -> nn.Linear:
    """Linear layer with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero bias."""
    proj = nn.Linear(in_dim, out_dim)
    bound = 1.0 / math.sqrt(in_dim)
    with torch.no_grad():
        proj.weight.uniform_(-bound, bound)
        proj.bias.zero_()
    return proj


def _to_tensor(m: FeatureMatrix) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(m.values))


def _check_rows(*matrices: FeatureMatrix):
    rows = {m.n_frames for m in matrices}
    if len(rows) > 1:
        raise ValueError(f"feature matrices must share the frame count, got {sorted(rows)}")


def cross_attend(queries: torch.Tensor, keys_values: torch.Tensor) -> torch.Tensor:
    """Single-head scaled dot-product attention over the frame dimension.

    ``softmax(Q Kᵀ / sqrt(d)) K`` with keys doubling as values; every output
    row is a convex combination of ``keys_values`` rows.
    """
    if queries.shape != keys_values.shape:
        raise ValueError(f"query/key shapes differ: {tuple(queries.shape)} vs {tuple(keys_values.shape)}")
    if queries.shape[0] == 0:
        raise ValueError("cross-attention needs at least one frame")
    d = queries.shape[1]
    logits = queries @ keys_values.T / math.sqrt(d)
    return torch.softmax(logits, dim=1) @ keys_values


class FusionModule(nn.Module):
    """Trainable fusion front-end, applied identically to both speakers."""

    def __init__(self, config: FusionConfig, audio_dim: int, text_dim: int, speaker_dim: int):
        super().__init__()
        self.config = config
        self.audio_dim = audio_dim
        self.text_dim = text_dim
        self.speaker_dim = speaker_dim
        d = config.proj_dim
        if config.mode == "audio_only":
            self.proj_audio = make_projection(audio_dim + speaker_dim, d)
        elif config.mode == "text_only":
            self.proj_text = make_projection(text_dim + speaker_dim, d)
        elif config.mode == "concat":
            self.proj_all = make_projection(audio_dim + text_dim + speaker_dim, d)
        else:  # cross_attention
            self.proj_audio = make_projection(audio_dim + speaker_dim, d)
            self.proj_text = make_projection(text_dim + speaker_dim, d)

    def forward(self, audio: torch.Tensor, text: torch.Tensor, speaker: torch.Tensor) -> torch.Tensor:
        mode = self.config.mode
        if mode == "audio_only":
            return self.proj_audio(torch.cat([audio, speaker], dim=1))
        if mode == "text_only":
            return self.proj_text(torch.cat([text, speaker], dim=1))
        if mode == "concat":
            return self.proj_all(torch.cat([audio, text, speaker], dim=1))
        xa = self.proj_audio(torch.cat([audio, speaker], dim=1))
        xt = self.proj_text(torch.cat([text, speaker], dim=1))
        return cross_attend(xa, xt)


def project_single(modality_matrix: FeatureMatrix, speaker: FeatureMatrix, proj: nn.Linear) -> FeatureMatrix:
    """Row-wise linear map of (modality_row, speaker_row) concatenations."""
    if modality_matrix.modality not in ("audio", "text"):
        raise ValueError(f"project_single expects audio or text, got {modality_matrix.modality!r}")
    _check_rows(modality_matrix, speaker)
    x = torch.cat([_to_tensor(modality_matrix), _to_tensor(speaker)], dim=1)
    if x.shape[1] != proj.in_features:
        raise ValueError(f"projection expects {proj.in_features} inputs, got {x.shape[1]}")
    with torch.no_grad():
        out = proj(x)
    return FeatureMatrix(values=out.numpy(), modality="fused")


def fuse_concat(audio: FeatureMatrix, text: FeatureMatrix, speaker: FeatureMatrix, proj: nn.Linear) -> FeatureMatrix:
    """One linear layer over the (D_a + D_t + D_s)-wide concatenation."""
    _check_rows(audio, text, speaker)
    x = torch.cat([_to_tensor(audio), _to_tensor(text), _to_tensor(speaker)], dim=1)
    if x.shape[1] != proj.in_features:
        raise ValueError(f"projection expects {proj.in_features} inputs, got {x.shape[1]}")
    with torch.no_grad():
        out = proj(x)
    return FeatureMatrix(values=out.numpy(), modality="fused")


def fuse_cross_attention(
    audio: FeatureMatrix,
    text: FeatureMatrix,
    speaker: FeatureMatrix,
    proj_audio: nn.Linear,
    proj_text: nn.Linear,
) -> FeatureMatrix:
    """Projected audio rows attend over projected text rows (keys = values)."""
    _check_rows(audio, text, speaker)
    if proj_audio.out_features != proj_text.out_features:
        raise ValueError("audio and text projections must share the output width")
    with torch.no_grad():
        xa = proj_audio(torch.cat([_to_tensor(audio), _to_tensor(speaker)], dim=1))
        xt = proj_text(torch.cat([_to_tensor(text), _to_tensor(speaker)], dim=1))
        out = cross_attend(xa, xt)
    return FeatureMatrix(values=out.numpy(), modality="fused")
