"""Cross-attentive Transformer-XL gesture generator: segment-recurrent
self-attention over the main agent's fused features with cross-attention to
the interlocutor's, a linear head to standardized pose vectors, the composite
geometric loss, and the training loop.

Segments of ``segment_len`` frames are processed left to right; each layer
caches up to ``memory_len`` frames of its input hidden states, which the next
segment attends over (gradients are truncated at segment boundaries).
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .bvh import Skeleton, Joint
from .features import SPEAKER_DIM, UNKNOWN_SPEAKER, SpeakerTable
from .fusion import FusionConfig, FusionModule
from .pose import MotionSequence, Standardizer, smooth_motion, standardize, pose_dim as skeleton_pose_dim

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the offending segment and term breakdown."""

    def __init__(self, session_id: str, segment: int, breakdown: dict[str, float]):
        self.session_id = session_id
        self.segment = segment
        self.breakdown = breakdown
        super().__init__(f"non-finite loss in session {session_id!r}, segment {segment}: {breakdown}")


@dataclass
class GeneratorConfig:
    segment_len: int = 300  # 10 s at 30 fps
    d_model: int = 64
    n_layers: int = 6  # 4 + the 2 extra self-attention layers
    n_heads: int = 4
    memory_len: int | None = None  # defaults to segment_len
    pose_dim: int = 51
    seed: int = 0
    d_ff: int | None = None  # defaults to 2 * d_model
    dropout: float = 0.0

    def __post_init__(self):
        if self.memory_len is None:
            self.memory_len = self.segment_len
        if self.d_ff is None:
            self.d_ff = 2 * self.d_model
        if self.segment_len < 1:
            raise ValueError("segment_len must be >= 1")
        if self.memory_len < 0:
            raise ValueError("memory_len must be >= 0")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} must divide evenly over {self.n_heads} heads")


@dataclass
class LossWeights:
    rotation: float = 1.0
    position: float = 1.0
    velocity: float = 1.0
    acceleration: float = 1.0
    kinetic: float = 1.0

    def __post_init__(self):
        values = [self.rotation, self.position, self.velocity, self.acceleration, self.kinetic]
        if any(w < 0 for w in values):
            raise ValueError("loss weights must be nonnegative")
        if not any(w > 0 for w in values):
            raise ValueError("at least one loss weight must be positive")


@dataclass
class OptimizerSettings:
    lr: float = 1e-4
    weight_decay: float = 1e-2
    betas: tuple[float, float] = (0.9, 0.999)


@dataclass(frozen=True)
class SegmentMemory:
    """Per-layer cached hidden states; replaced wholesale after each segment."""

    states: tuple[torch.Tensor, ...]

    @classmethod
    def empty(cls, n_layers: int, d_model: int, dtype=torch.float32) -> "SegmentMemory":
        return cls(states=tuple(torch.zeros(0, d_model, dtype=dtype) for _ in range(n_layers)))

    def zeroed(self) -> "SegmentMemory":
        return SegmentMemory(states=tuple(torch.zeros_like(s) for s in self.states))


# ---------------------------------------------------------------------------
# differentiable geometry (torch twins of the numpy reference in pose.py)
# ---------------------------------------------------------------------------

def gram_schmidt_t(six: torch.Tensor) -> torch.Tensor:
    """Differentiable 6D -> rotation matrices; degenerate norms are clamped."""
    a, b = six[..., :3], six[..., 3:]
    a = a / a.norm(dim=-1, keepdim=True).clamp_min(1e-8)
    b = b - (a * b).sum(-1, keepdim=True) * a
    b = b / b.norm(dim=-1, keepdim=True).clamp_min(1e-8)
    c = torch.cross(a, b, dim=-1)
    return torch.stack([a, b, c], dim=-1)


def kinematic_arrays(skeleton: Skeleton) -> tuple[list[int], np.ndarray]:
    """Parents (-1 for root) and offsets of the rotated joints, pose-slot indexed."""
    rotated = skeleton.rotated_joint_indices()
    slot = {joint_idx: j for j, joint_idx in enumerate(rotated)}
    parents, offsets = [], []
    for joint_idx in rotated:
        joint = skeleton.joints[joint_idx]
        parents.append(-1 if joint.parent is None else slot[joint.parent])
        offsets.append(joint.offset)
    return parents, np.asarray(offsets, dtype=np.float64)


def fk_positions_t(poses: torch.Tensor, parents: list[int], offsets: torch.Tensor) -> torch.Tensor:
    """Differentiable forward kinematics: (N, 3+6J) de-standardized poses -> (N, J, 3)."""
    n = poses.shape[0]
    j_count = len(parents)
    rot = gram_schmidt_t(poses[:, 3:].reshape(n, j_count, 6))
    positions: list[torch.Tensor] = []
    globals_: list[torch.Tensor] = []
    for j, parent in enumerate(parents):
        if parent < 0:
            positions.append(poses[:, :3])
            globals_.append(rot[:, j])
        else:
            positions.append(positions[parent] + torch.einsum("nab,b->na", globals_[parent], offsets[j]))
            globals_.append(globals_[parent] @ rot[:, j])
    return torch.stack(positions, dim=1)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class _RelativeSelfAttention(nn.Module):
    """Multi-head self-attention over [memory ‖ segment] with learned relative
    position embeddings and the standard content/position bias pair."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.d_head = cfg.d_model // cfg.n_heads
        self.max_dist = cfg.memory_len + cfg.segment_len
        self.norm = nn.LayerNorm(cfg.d_model)
        self.wq = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.wk = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.wv = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.wo = nn.Linear(cfg.d_model, cfg.d_model)
        self.rel_pos = nn.Parameter(torch.randn(self.max_dist, self.n_heads, self.d_head) * 0.02)
        self.content_bias = nn.Parameter(torch.zeros(self.n_heads, self.d_head))
        self.position_bias = nn.Parameter(torch.zeros(self.n_heads, self.d_head))

    def forward(self, h: torch.Tensor, mem: torch.Tensor) -> torch.Tensor:
        w = h.shape[0]
        m = mem.shape[0]
        z = self.norm(h)
        ctx = torch.cat([self.norm(mem), z], dim=0) if m else z
        k_len = ctx.shape[0]

        q = self.wq(z).view(w, self.n_heads, self.d_head)
        k = self.wk(ctx).view(k_len, self.n_heads, self.d_head)
        v = self.wv(ctx).view(k_len, self.n_heads, self.d_head)

        # distance from each query (global position m+i) back to each key
        dist = (m + torch.arange(w)).unsqueeze(1) - torch.arange(k_len).unsqueeze(0)
        causal = dist >= 0
        rel = self.rel_pos[dist.clamp(0, self.max_dist - 1)]  # (w, k, heads, d_head)

        content = torch.einsum("whd,khd->wkh", q + self.content_bias, k)
        position = torch.einsum("whd,wkhd->wkh", q + self.position_bias, rel)
        scores = (content + position) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~causal.unsqueeze(-1), float("-inf"))
        attn = torch.softmax(scores, dim=1)
        out = torch.einsum("wkh,khd->whd", attn, v).reshape(w, -1)
        return self.wo(out)


class _CrossAttention(nn.Module):
    """Main-agent hidden states query the interlocutor's segment features."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.d_head = cfg.d_model // cfg.n_heads
        self.norm_q = nn.LayerNorm(cfg.d_model)
        self.norm_kv = nn.LayerNorm(cfg.d_model)
        self.wq = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.wk = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.wv = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.wo = nn.Linear(cfg.d_model, cfg.d_model)

    def forward(self, h: torch.Tensor, inter: torch.Tensor) -> torch.Tensor:
        w = h.shape[0]
        q = self.wq(self.norm_q(h)).view(w, self.n_heads, self.d_head)
        kv = self.norm_kv(inter)
        k = self.wk(kv).view(-1, self.n_heads, self.d_head)
        v = self.wv(kv).view(-1, self.n_heads, self.d_head)
        scores = torch.einsum("whd,khd->wkh", q, k) / math.sqrt(self.d_head)
        attn = torch.softmax(scores, dim=1)
        out = torch.einsum("wkh,khd->whd", attn, v).reshape(w, -1)
        return self.wo(out)


class _Layer(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.self_attn = _RelativeSelfAttention(cfg)
        self.cross_attn = _CrossAttention(cfg)
        self.norm_ff = nn.LayerNorm(cfg.d_model)
        self.ff = nn.Sequential(nn.Linear(cfg.d_model, cfg.d_ff), nn.GELU(), nn.Linear(cfg.d_ff, cfg.d_model))
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, h: torch.Tensor, mem: torch.Tensor, inter: torch.Tensor) -> torch.Tensor:
        h = h + self.dropout(self.self_attn(h, mem))
        h = h + self.dropout(self.cross_attn(h, inter))
        h = h + self.dropout(self.ff(self.norm_ff(h)))
        return h


class CrossAttentiveTransformerXL(nn.Module):
    """Maps fused (segment_len, d_model) feature segments for both speakers to
    standardized main-agent pose vectors, carrying per-layer memory between
    consecutive segments of a clip."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.layers = nn.ModuleList(_Layer(config) for _ in range(config.n_layers))
        self.final_norm = nn.LayerNorm(config.d_model)
        self.head = nn.Linear(config.d_model, config.pose_dim)
        self.invocations = 0  # instrumentation only

    def empty_memory(self) -> SegmentMemory:
        dtype = self.head.weight.dtype
        return SegmentMemory.empty(self.config.n_layers, self.config.d_model, dtype=dtype)

    def forward_segment(
        self, x_main: torch.Tensor, x_inter: torch.Tensor, memory: SegmentMemory | None = None
    ) -> tuple[torch.Tensor, SegmentMemory]:
        cfg = self.config
        expected = (cfg.segment_len, cfg.d_model)
        if tuple(x_main.shape) != expected or tuple(x_inter.shape) != expected:
            raise ValueError(f"segment inputs must have shape {expected}, got {tuple(x_main.shape)} / {tuple(x_inter.shape)}")
        if memory is None:
            memory = self.empty_memory()
        self.invocations += 1

        h = x_main
        new_states: list[torch.Tensor] = []
        for layer, mem in zip(self.layers, memory.states):
            if cfg.memory_len > 0:
                new_states.append(torch.cat([mem, h], dim=0)[-cfg.memory_len:].detach())
            else:
                new_states.append(mem)
            h = layer(h, mem, x_inter)
        poses = self.head(self.final_norm(h))
        return poses, SegmentMemory(states=tuple(new_states))

    def forward(self, x_main, x_inter, memory=None):
        return self.forward_segment(x_main, x_inter, memory)


def segment_bounds(n_frames: int, segment_len: int) -> list[tuple[int, int]]:
    """Non-overlapping [lo, hi) windows covering n_frames: exactly ceil(N/W) of them."""
    if n_frames < 1:
        raise ValueError("need at least one frame")
    return [(lo, min(lo + segment_len, n_frames)) for lo in range(0, n_frames, segment_len)]


def _pad_segment(x: torch.Tensor, segment_len: int) -> torch.Tensor:
    if x.shape[0] == segment_len:
        return x
    pad = torch.zeros(segment_len - x.shape[0], x.shape[1], dtype=x.dtype)
    return torch.cat([x, pad], dim=0)


def generate(
    model: CrossAttentiveTransformerXL,
    features_main: np.ndarray | torch.Tensor,
    features_inter: np.ndarray | torch.Tensor,
    standardizer: Standardizer,
    skeleton: Skeleton,
    smooth: bool = True,
    carry_memory: bool = True,
) -> MotionSequence:
    """Run the sliding-window generator over a whole clip.

    Makes exactly ceil(N / segment_len) forward calls with carried memory,
    truncates the zero-padded tail, de-standardizes, and post-smooths.
    """
    x_main = torch.as_tensor(features_main, dtype=torch.float32)
    x_inter = torch.as_tensor(features_inter, dtype=torch.float32)
    if x_main.shape != x_inter.shape:
        raise ValueError("main and interlocutor feature blocks must share a shape")
    n = x_main.shape[0]
    if n == 0:
        raise ValueError("cannot generate from zero frames")

    cfg = model.config
    outputs = []
    memory = None
    with torch.no_grad():
        for lo, hi in segment_bounds(n, cfg.segment_len):
            seg_main = _pad_segment(x_main[lo:hi], cfg.segment_len)
            seg_inter = _pad_segment(x_inter[lo:hi], cfg.segment_len)
            poses, memory = model.forward_segment(seg_main, seg_inter, memory)
            if not carry_memory:
                memory = None
            outputs.append(poses[: hi - lo])
    stacked = torch.cat(outputs, dim=0).numpy().astype(np.float64)

    seq = MotionSequence(poses=stacked, skeleton=skeleton, standardized=True)
    seq = standardize(seq, standardizer, direction="inverse")
    if smooth and n >= 9:
        seq = smooth_motion(seq)
    return seq


# ---------------------------------------------------------------------------
# composite loss
# ---------------------------------------------------------------------------

def composite_loss_tensors(
    pred_std: torch.Tensor,
    target_std: torch.Tensor,
    weights: LossWeights,
    parents: list[int],
    offsets: torch.Tensor,
    mean: torch.Tensor,
    std: torch.Tensor,
    fps: float = 30.0,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Differentiable core of the composite loss on standardized pose tensors.

    L1 on standardized 6D rotation blocks; L1 on de-standardized forward
    kinematics positions and on their first/second finite differences; L1 on
    per-joint squared velocity magnitudes.  Sequences shorter than 3 frames
    get zero finite-difference terms (with a warning).
    """
    if pred_std.shape != target_std.shape:
        raise ValueError(f"pred/target shapes differ: {tuple(pred_std.shape)} vs {tuple(target_std.shape)}")
    n = pred_std.shape[0]
    zero = pred_std.new_zeros(())

    terms: dict[str, torch.Tensor] = {}
    terms["rotation"] = (pred_std[:, 3:] - target_std[:, 3:]).abs().mean()

    pred = pred_std * std + mean
    target = target_std * std + mean
    pred_pos = fk_positions_t(pred, parents, offsets)
    target_pos = fk_positions_t(target, parents, offsets)
    terms["position"] = (pred_pos - target_pos).abs().mean()

    if n >= 3:
        pv = (pred_pos[1:] - pred_pos[:-1]) * fps
        tv = (target_pos[1:] - target_pos[:-1]) * fps
        terms["velocity"] = (pv - tv).abs().mean()
        terms["acceleration"] = ((pv[1:] - pv[:-1]) - (tv[1:] - tv[:-1])).abs().mean() * fps
        terms["kinetic"] = ((pv ** 2).sum(-1) - (tv ** 2).sum(-1)).abs().mean()
    else:
        warnings.warn(f"sequence of {n} frames is too short for finite differences; velocity terms set to 0", RuntimeWarning)
        terms["velocity"] = zero
        terms["acceleration"] = zero
        terms["kinetic"] = zero

    total = (
        weights.rotation * terms["rotation"]
        + weights.position * terms["position"]
        + weights.velocity * terms["velocity"]
        + weights.acceleration * terms["acceleration"]
        + weights.kinetic * terms["kinetic"]
    )
    return total, terms


def composite_loss(
    pred: MotionSequence, target: MotionSequence, weights: LossWeights, standardizer: Standardizer
) -> tuple[float, dict[str, float]]:
    """Composite geometric loss between standardized motion sequences."""
    if not (pred.standardized and target.standardized):
        raise ValueError("composite_loss expects standardized sequences")
    if pred.n_frames != target.n_frames:
        raise ValueError(f"sequences differ in length: {pred.n_frames} vs {target.n_frames}")
    parents, offsets = kinematic_arrays(pred.skeleton)
    total, terms = composite_loss_tensors(
        torch.from_numpy(pred.poses),
        torch.from_numpy(target.poses),
        weights,
        parents,
        torch.from_numpy(offsets),
        torch.from_numpy(standardizer.mean),
        torch.from_numpy(standardizer.std),
        fps=pred.fps,
    )
    return float(total), {k: float(v) for k, v in terms.items()}


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainingClip:
    """One dyadic clip's raw features and standardized target poses."""

    session_id: str
    audio_main: np.ndarray
    text_main: np.ndarray
    speaker_main: str
    audio_inter: np.ndarray
    text_inter: np.ndarray
    speaker_inter: str
    poses_std: np.ndarray  # (N, pose_dim)

    @property
    def n_frames(self) -> int:
        return self.poses_std.shape[0]


class GestureModel(nn.Module):
    """Full trainable bundle: speaker table + fusion front-end + generator."""

    def __init__(
        self,
        generator_config: GeneratorConfig,
        fusion_config: FusionConfig,
        audio_dim: int,
        text_dim: int,
        speaker_ids: list[str],
    ):
        super().__init__()
        if fusion_config.proj_dim != generator_config.d_model:
            raise ValueError("fusion proj_dim must equal the generator d_model (fused features feed the generator directly)")
        torch.manual_seed(generator_config.seed)
        self.speakers = SpeakerTable(speaker_ids)
        self.fusion = FusionModule(fusion_config, audio_dim, text_dim, SPEAKER_DIM)
        self.generator = CrossAttentiveTransformerXL(generator_config)

    def fuse_rows(self, audio: np.ndarray, text: np.ndarray, speaker_id: str, lo: int, hi: int) -> torch.Tensor:
        """Fuse one [lo, hi) feature slice; speaker rows read the live table."""
        dtype = self.generator.head.weight.dtype
        a = torch.as_tensor(audio[lo:hi], dtype=dtype)
        t = torch.as_tensor(text[lo:hi], dtype=dtype)
        s = self.speakers.rows(speaker_id, hi - lo).to(dtype)
        return self.fusion(a, t, s)

    def fuse_sequence(self, audio: np.ndarray, text: np.ndarray, speaker_id: str) -> torch.Tensor:
        """Fuse a whole clip segment-by-segment (cross-attention stays within segments)."""
        w = self.generator.config.segment_len
        chunks = [self.fuse_rows(audio, text, speaker_id, lo, hi) for lo, hi in segment_bounds(len(audio), w)]
        return torch.cat(chunks, dim=0)

    def fuse_clip(self, clip: TrainingClip) -> tuple[torch.Tensor, torch.Tensor]:
        main = self.fuse_sequence(clip.audio_main, clip.text_main, clip.speaker_main)
        inter = self.fuse_sequence(clip.audio_inter, clip.text_inter, clip.speaker_inter)
        return main, inter


@dataclass
class TrainResult:
    model: GestureModel
    epoch_losses: list[float]
    standardizer: Standardizer
    skeleton: Skeleton


def train(
    clips: list[TrainingClip],
    generator_config: GeneratorConfig,
    fusion_config: FusionConfig,
    weights: LossWeights,
    epochs: int,
    optimizer: OptimizerSettings,
    standardizer: Standardizer,
    skeleton: Skeleton,
) -> TrainResult:
    """Optimize the full bundle with AdamW, segment by segment within each clip.

    Memory is carried across a clip's segments (detached, so backpropagation
    is truncated at segment boundaries); one optimizer step per segment.
    """
    if not clips:
        raise ValueError("training needs at least one clip")
    if generator_config.pose_dim != skeleton_pose_dim(skeleton):
        raise ValueError(f"pose_dim {generator_config.pose_dim} does not match skeleton ({skeleton_pose_dim(skeleton)})")

    audio_dim = clips[0].audio_main.shape[1]
    text_dim = clips[0].text_main.shape[1]
    speaker_ids = sorted({c.speaker_main for c in clips} | {c.speaker_inter for c in clips})
    model = GestureModel(generator_config, fusion_config, audio_dim, text_dim, speaker_ids)
    opt = torch.optim.AdamW(model.parameters(), lr=optimizer.lr, weight_decay=optimizer.weight_decay, betas=optimizer.betas)

    parents, offsets_np = kinematic_arrays(skeleton)
    offsets = torch.from_numpy(offsets_np).float()
    mean = torch.from_numpy(standardizer.mean).float()
    std = torch.from_numpy(standardizer.std).float()
    w = generator_config.segment_len

    ordered = sorted(clips, key=lambda c: c.session_id)
    epoch_losses: list[float] = []
    for epoch in range(epochs):
        segment_losses: list[float] = []
        for clip in ordered:
            memory = None
            target = torch.from_numpy(clip.poses_std).float()
            for seg_idx, (lo, hi) in enumerate(segment_bounds(clip.n_frames, w)):
                x_main = _pad_segment(model.fuse_rows(clip.audio_main, clip.text_main, clip.speaker_main, lo, hi), w)
                x_inter = _pad_segment(model.fuse_rows(clip.audio_inter, clip.text_inter, clip.speaker_inter, lo, hi), w)
                poses, memory = model.generator.forward_segment(x_main, x_inter, memory)
                loss, terms = composite_loss_tensors(poses[: hi - lo], target[lo:hi], weights, parents, offsets, mean, std)
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(clip.session_id, seg_idx, {k: float(v) for k, v in terms.items()})
                opt.zero_grad()
                loss.backward()
                opt.step()
                segment_losses.append(loss.detach().item())
        epoch_losses.append(float(np.mean(segment_losses)))
        if epoch == 0 or (epoch + 1) % max(1, epochs // 10) == 0:
            log.info("epoch %d/%d: loss %.6f", epoch + 1, epochs, epoch_losses[-1])
    return TrainResult(model=model, epoch_losses=epoch_losses, standardizer=standardizer, skeleton=skeleton)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    model: GestureModel
    generator_config: GeneratorConfig
    fusion_config: FusionConfig
    loss_weights: LossWeights
    optimizer: OptimizerSettings
    standardizer: Standardizer
    skeleton: Skeleton
    epoch: int
    seed: int
    provider: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        return {
            "format": 1,
            "epoch": self.epoch,
            "seed": self.seed,
            "generator": asdict(self.generator_config),
            "fusion": asdict(self.fusion_config),
            "loss_weights": asdict(self.loss_weights),
            "optimizer": asdict(self.optimizer),
            "provider": self.provider,
            "audio_dim": self.model.fusion.audio_dim,
            "text_dim": self.model.fusion.text_dim,
            "speaker_ids": sorted(self.model.speakers.id_to_index),
        }


def _skeleton_to_doc(skeleton: Skeleton) -> dict:
    return {
        "joints": [
            {"name": j.name, "parent": j.parent, "offset": j.offset.tolist(), "channels": list(j.channels)}
            for j in skeleton.joints
        ]
    }


def _skeleton_from_doc(doc: dict) -> Skeleton:
    joints = tuple(
        Joint(name=j["name"], parent=j["parent"], offset=np.array(j["offset"], dtype=np.float64), channels=tuple(j["channels"]))
        for j in doc["joints"]
    )
    return Skeleton(joints=joints)


def save_checkpoint(ckpt: Checkpoint, path: str | Path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "manifest.json").write_text(json.dumps(ckpt.manifest(), sort_keys=True, indent=2))
    (path / "standardizer.json").write_text(ckpt.standardizer.to_json())
    (path / "skeleton.json").write_text(json.dumps(_skeleton_to_doc(ckpt.skeleton), sort_keys=True))
    ckpt.model.speakers.save(path / "speaker_table.json")
    torch.save(ckpt.model.state_dict(), path / "weights.pt")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    gen_cfg = GeneratorConfig(**manifest["generator"])
    fus_cfg = FusionConfig(**manifest["fusion"])
    weights = LossWeights(**manifest["loss_weights"])
    opt = OptimizerSettings(lr=manifest["optimizer"]["lr"], weight_decay=manifest["optimizer"]["weight_decay"], betas=tuple(manifest["optimizer"]["betas"]))
    standardizer = Standardizer.load(path / "standardizer.json")
    skeleton = _skeleton_from_doc(json.loads((path / "skeleton.json").read_text()))
    speaker_ids = [sid for sid in manifest["speaker_ids"] if sid != UNKNOWN_SPEAKER]
    model = GestureModel(gen_cfg, fus_cfg, manifest["audio_dim"], manifest["text_dim"], speaker_ids)
    model.load_state_dict(torch.load(path / "weights.pt", weights_only=True))
    return Checkpoint(
        model=model,
        generator_config=gen_cfg,
        fusion_config=fus_cfg,
        loss_weights=weights,
        optimizer=opt,
        standardizer=standardizer,
        skeleton=skeleton,
        epoch=manifest["epoch"],
        seed=manifest["seed"],
        provider=manifest["provider"],
    )
