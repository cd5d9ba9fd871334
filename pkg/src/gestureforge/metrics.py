"""Objective evaluation: Fréchet gesture distance over autoencoder latents,
Fréchet kinetic distance over joint-speed distributions, and beat alignment
between audio onsets and motion-velocity minima."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .features import Waveform, frame_window
from .pose import MotionSequence, forward_kinematics, savgol_smooth

log = logging.getLogger(__name__)

BEAT_SIGMA_S = 0.1
ONSET_THRESHOLD_STDS = 1.0
FGD_WINDOW = 30  # 1 s of frames
FGD_LATENT = 32


@dataclass(frozen=True)
class GaussianStats:
    """Mean and covariance fitted to a feature population."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        cov = np.asarray(self.cov, dtype=np.float64)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)
        if self.count < 2:
            raise ValueError("need at least 2 samples for covariance statistics")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov))):
            raise ValueError("non-finite Gaussian statistics")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def fit(cls, samples: np.ndarray) -> "GaussianStats":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 2:
            raise ValueError(f"need a (M>=2, D) sample matrix, got shape {samples.shape}")
        return cls(mean=samples.mean(axis=0), cov=np.cov(samples, rowvar=False).reshape(samples.shape[1], samples.shape[1]), count=samples.shape[0])


def _sqrtm_psd(sym: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((sym + sym.T) / 2.0)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_gaussian(p: GaussianStats, q: GaussianStats) -> float:
    """Closed-form Fréchet distance between two Gaussians.

    ``|mu_p - mu_q|^2 + Tr(S_p + S_q - 2 (S_p S_q)^{1/2})`` with the matrix
    square root taken by eigendecomposition of the symmetrized product,
    clamping negative eigenvalues at zero.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    diff = p.mean - q.mean
    sp = _sqrtm_psd(p.cov)
    inner = sp @ q.cov @ sp
    eigs = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    trace_sqrt = float(np.sqrt(np.clip(eigs, 0.0, None)).sum())
    value = float(diff @ diff) + float(np.trace(p.cov) + np.trace(q.cov)) - 2.0 * trace_sqrt
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# Fréchet gesture distance (autoencoder latents)
# ---------------------------------------------------------------------------

def pose_windows(sequences: list[MotionSequence], window: int = FGD_WINDOW, stride: int = 1) -> np.ndarray:
    """All length-`window` pose windows of all sequences, flattened to rows."""
    rows = []
    for seq in sequences:
        poses = seq.poses.astype(np.float32)
        for lo in range(0, seq.n_frames - window + 1, stride):
            rows.append(poses[lo:lo + window].reshape(-1))
    if not rows:
        raise ValueError(f"no windows of {window} frames available")
    return np.stack(rows)


class PoseAutoencoder(nn.Module):
    """Window autoencoder providing the latent space for the gesture distance.

    Trained once on reference (training-split) standardized motion with an L1
    reconstruction objective and a fixed seed, then frozen; its manifest makes
    scores comparable across runs.
    """

    def __init__(self, input_dim: int, latent_dim: int = FGD_LATENT, hidden_dim: int = 128, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.encoder = nn.Sequential(nn.Linear(input_dim, hidden_dim), nn.GELU(), nn.Linear(hidden_dim, latent_dim))
        self.decoder = nn.Sequential(nn.Linear(latent_dim, hidden_dim), nn.GELU(), nn.Linear(hidden_dim, input_dim))
        self.manifest = {
            "input_dim": input_dim,
            "latent_dim": latent_dim,
            "hidden_dim": hidden_dim,
            "seed": seed,
            "objective": "l1-reconstruction",
            "fitted": False,
        }

    def fit(self, windows: np.ndarray, epochs: int = 30, batch_size: int = 256, lr: float = 1e-3):
        data = torch.from_numpy(np.asarray(windows, dtype=np.float32))
        opt = torch.optim.Adam(self.parameters(), lr=lr)
        gen = torch.Generator().manual_seed(int(self.manifest["seed"]))
        self.train()
        for epoch in range(epochs):
            order = torch.randperm(data.shape[0], generator=gen)
            epoch_loss = 0.0
            for lo in range(0, data.shape[0], batch_size):
                batch = data[order[lo:lo + batch_size]]
                recon = self.decoder(self.encoder(batch))
                loss = (recon - batch).abs().mean()
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_loss += float(loss) * batch.shape[0]
            if epoch == 0 or epoch == epochs - 1:
                log.debug("autoencoder epoch %d: l1=%.5f", epoch + 1, epoch_loss / data.shape[0])
        self.eval()
        self.requires_grad_(False)
        self.manifest.update({"fitted": True, "epochs": epochs, "batch_size": batch_size, "lr": lr, "n_windows": int(data.shape[0])})

    def encode(self, windows: np.ndarray) -> np.ndarray:
        if not self.manifest["fitted"]:
            raise RuntimeError("autoencoder must be fitted before encoding")
        with torch.no_grad():
            z = self.encoder(torch.from_numpy(np.asarray(windows, dtype=np.float32)))
        return z.numpy().astype(np.float64)

    def manifest_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.manifest, sort_keys=True).encode()).hexdigest()[:16]


def fit_autoencoder(reference: list[MotionSequence], window: int = FGD_WINDOW, stride: int = 3, seed: int = 0, epochs: int = 30) -> PoseAutoencoder:
    """Fit the FGD autoencoder on reference (training-split) standardized motion."""
    windows = pose_windows(reference, window=window, stride=stride)
    ae = PoseAutoencoder(input_dim=windows.shape[1], seed=seed)
    ae.fit(windows, epochs=epochs)
    ae.manifest.update({"window": window, "train_stride": stride})
    return ae


def compute_fgd(generated: list[MotionSequence], reference: list[MotionSequence], ae: PoseAutoencoder, window: int = FGD_WINDOW) -> float:
    """Fréchet distance between autoencoder-latent Gaussians of the two sets."""
    for seq in (*generated, *reference):
        if not seq.standardized:
            raise ValueError("compute_fgd expects standardized sequences")
    gen_latents = ae.encode(pose_windows(generated, window=window))
    ref_latents = ae.encode(pose_windows(reference, window=window))
    return frechet_gaussian(GaussianStats.fit(gen_latents), GaussianStats.fit(ref_latents))


# ---------------------------------------------------------------------------
# Fréchet kinetic distance (no autoencoder)
# ---------------------------------------------------------------------------

def joint_speeds(seq: MotionSequence) -> np.ndarray:
    """(N-1, J) per-joint speeds from forward kinematics, in units/s."""
    if seq.n_frames < 2:
        raise ValueError("need at least 2 frames for velocities")
    positions = forward_kinematics(seq)
    return np.linalg.norm(np.diff(positions, axis=0), axis=2) * seq.fps


def compute_fdk(generated: list[MotionSequence], reference: list[MotionSequence]) -> float:
    """Fréchet distance between per-joint speed distributions of the two sets."""
    gen_rows = np.concatenate([joint_speeds(s) for s in generated], axis=0)
    ref_rows = np.concatenate([joint_speeds(s) for s in reference], axis=0)
    return frechet_gaussian(GaussianStats.fit(gen_rows), GaussianStats.fit(ref_rows))


# ---------------------------------------------------------------------------
# beat alignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BeatSequence:
    times: np.ndarray  # strictly increasing, seconds
    source: str  # audio | motion

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "times", times)
        if len(times) and (np.any(np.diff(times) <= 0) or times[0] < 0):
            raise ValueError("beat times must be nonnegative and strictly increasing")

    def __len__(self) -> int:
        return len(self.times)


def _pick_peaks(envelope: np.ndarray, threshold: float) -> list[int]:
    peaks = []
    for i in range(1, len(envelope) - 1):
        if envelope[i] > threshold and envelope[i] >= envelope[i - 1] and envelope[i] > envelope[i + 1]:
            peaks.append(i)
    return peaks


def audio_beats(wave: Waveform, fps: float = 30.0, threshold_stds: float = ONSET_THRESHOLD_STDS) -> BeatSequence:
    """Onsets from the rectified log-RMS novelty at a one-frame (~33 ms) hop."""
    n_frames = int(round(wave.duration * fps))
    if n_frames < 3:
        return BeatSequence(times=np.empty(0), source="audio")
    rms = np.empty(n_frames)
    for f in range(n_frames):
        w = frame_window(wave, f, fps=fps).astype(np.float64)
        rms[f] = np.sqrt(np.mean(w ** 2))
    env = np.log(rms + 1e-8)
    novelty = np.maximum(np.diff(env, prepend=env[0]), 0.0)
    threshold = novelty.mean() + threshold_stds * novelty.std()
    peaks = _pick_peaks(novelty, threshold)
    return BeatSequence(times=np.array(peaks, dtype=np.float64) / fps, source="audio")


def _tracked_joint_slots(seq: MotionSequence) -> list[int]:
    """Pose-vector slots of the wrist joints, else of all end-effectors."""
    rotated = seq.skeleton.rotated_joint_indices()
    names = [seq.skeleton.joints[i].name.lower() for i in rotated]
    wrists = [slot for slot, name in enumerate(names) if "wrist" in name]
    if wrists:
        return wrists
    effectors = []
    for slot, joint_idx in enumerate(rotated):
        children = seq.skeleton.children_of(joint_idx)
        if all(seq.skeleton.joints[c].is_end_site for c in children):
            effectors.append(slot)
    return effectors


def _local_minima(values: np.ndarray, tol: float) -> list[int]:
    """Indices of local minima deeper than ``tol``; a flat run below both of
    its neighbours counts once, at its center."""
    minima = []
    n = len(values)
    i = 1
    while i < n - 1:
        if values[i] < values[i - 1] - tol:
            j = i
            while j + 1 < n and abs(values[j + 1] - values[i]) <= tol:
                j += 1
            if j < n - 1 and values[j + 1] > values[i] + tol:
                minima.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return minima


def motion_beats(seq: MotionSequence, smooth_window: int = 5) -> BeatSequence:
    """Local minima of the smoothed tracked-joint speed curve."""
    if seq.n_frames < 3:
        return BeatSequence(times=np.empty(0), source="motion")
    speeds = joint_speeds(seq)[:, _tracked_joint_slots(seq)].mean(axis=1)
    if len(speeds) >= smooth_window:
        speeds = savgol_smooth(speeds, smooth_window, 2)
    # depth floor keeps float noise on flat speed curves from minting beats
    tol = max(1e-12, 1e-6 * float(speeds.max() - speeds.min()))
    minima = _local_minima(speeds, tol)
    times = (np.array(minima, dtype=np.float64) + 0.5) / seq.fps
    return BeatSequence(times=times, source="motion")


def extract_beats(signal: Waveform | MotionSequence, kind: str) -> BeatSequence:
    """Dispatch to audio-onset or motion-velocity-minimum beat extraction."""
    if kind == "audio":
        if not isinstance(signal, Waveform):
            raise TypeError("kind='audio' needs a Waveform")
        return audio_beats(signal)
    if kind == "motion":
        if not isinstance(signal, MotionSequence):
            raise TypeError("kind='motion' needs a MotionSequence")
        if signal.standardized:
            raise ValueError("motion beats need a de-standardized sequence")
        return motion_beats(signal)
    raise ValueError(f"unknown beat kind {kind!r}")


def beat_align(motion: BeatSequence, audio: BeatSequence, sigma: float = BEAT_SIGMA_S) -> float:
    """One-sided chamfer-kernel synchrony in [0, 1].

    Mean over motion beats of ``exp(-min_a (t_m - t_a)^2 / (2 sigma^2))``;
    1.0 for identical beat lists, 0.0 when there are no audio beats.
    """
    if len(motion) == 0:
        raise ValueError("beat alignment is undefined without motion beats")
    if len(audio) == 0:
        return 0.0
    diffs = motion.times[:, None] - audio.times[None, :]
    nearest_sq = np.min(diffs ** 2, axis=1)
    return float(np.mean(np.exp(-nearest_sq / (2.0 * sigma ** 2))))
