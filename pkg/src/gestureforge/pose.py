"""Pose representation: continuous 6D rotations, forward kinematics,
standardization, and Savitzky-Golay post-smoothing.

A pose vector is ``[root_x, root_y, root_z, r_{1,1..6}, ..., r_{J,1..6}]``
where each joint rotation is the first two columns of its rotation matrix in
column-major order.  End Sites contribute no entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bvh import RawMotion, Skeleton, Joint, POSITION_CHANNELS

TARGET_FPS = 30.0
STD_FLOOR = 1e-8
_GIMBAL_EPS = 1e-7

_AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}
_EVEN_PERMS = {(0, 1, 2), (1, 2, 0), (2, 0, 1)}


class DegenerateRotationError(ValueError):
    """6D coordinates whose column pair is numerically parallel or zero."""


class StandardizeDirectionError(ValueError):
    """Standardize called in a direction inconsistent with the sequence flag."""


class SmoothingWindowError(ValueError):
    """Sequence shorter than the smoothing window; caller should skip smoothing."""


# ---------------------------------------------------------------------------
# rotation codecs
# ---------------------------------------------------------------------------

def rotation6d(matrix: np.ndarray) -> np.ndarray:
    """First two columns of rotation matrices ``(..., 3, 3)``, column-major ``(..., 6)``."""
    m = np.asarray(matrix, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def gram_schmidt(six: np.ndarray) -> np.ndarray:
    """Recover rotation matrices ``(..., 3, 3)`` from 6D coordinates ``(..., 6)``.

    Normalizes the first column, removes its projection from the second and
    normalizes, then completes with the cross product.  Raises
    :class:`DegenerateRotationError` when the two columns are numerically
    parallel or vanish.
    """
    v = np.asarray(six, dtype=np.float64)
    a, b = v[..., :3], v[..., 3:]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na < 1e-8):
        raise DegenerateRotationError("first 6D column has near-zero norm")
    a = a / na
    b = b - np.sum(a * b, axis=-1, keepdims=True) * a
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    if np.any(nb < 1e-8):
        raise DegenerateRotationError("6D column pair is numerically parallel")
    b = b / nb
    c = np.cross(a, b)
    return np.stack([a, b, c], axis=-1)


def _single_axis_matrix(axis: int, angle: np.ndarray) -> np.ndarray:
    """Rotation matrices ``(..., 3, 3)`` about a coordinate axis, angles in radians."""
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    if axis == 0:
        rows = [one, zero, zero, zero, c, -s, zero, s, c]
    elif axis == 1:
        rows = [c, zero, s, zero, one, zero, -s, zero, c]
    else:
        rows = [c, -s, zero, s, c, zero, zero, zero, one]
    return np.stack(rows, axis=-1).reshape(angle.shape + (3, 3))


def _order_indices(order: str) -> tuple[int, int, int]:
    if len(order) != 3 or len(set(order)) != 3:
        raise ValueError(f"rotation order must use three distinct axes, got {order!r}")
    return tuple(_AXIS_INDEX[a] for a in order)  # type: ignore[return-value]


def euler_to_matrix(angles: np.ndarray, order: str) -> np.ndarray:
    """Compose intrinsic rotations in ``order`` (e.g. ``"ZXY"``), radians ``(..., 3)``."""
    angles = np.asarray(angles, dtype=np.float64)
    i, j, k = _order_indices(order)
    return _single_axis_matrix(i, angles[..., 0]) @ _single_axis_matrix(j, angles[..., 1]) @ _single_axis_matrix(k, angles[..., 2])


def matrix_to_euler(matrix: np.ndarray, order: str) -> np.ndarray:
    """Invert :func:`euler_to_matrix` for the same intrinsic order, radians ``(..., 3)``.

    Near gimbal lock (|cos(mid)| < 1e-7) the third angle is fixed to 0 and the
    first absorbs the remaining rotation, so the matrix always round-trips.
    """
    m = np.asarray(matrix, dtype=np.float64)
    i, j, k = _order_indices(order)
    sign = 1.0 if (i, j, k) in _EVEN_PERMS else -1.0

    sin_mid = np.clip(sign * m[..., i, k], -1.0, 1.0)
    mid = np.arcsin(sin_mid)
    locked = np.abs(np.cos(mid)) < _GIMBAL_EPS

    first = np.arctan2(-sign * m[..., j, k], m[..., k, k])
    third = np.arctan2(-sign * m[..., i, j], m[..., i, i])

    lock_sign = np.where(sin_mid >= 0, 1.0, -1.0)
    first_locked = np.arctan2(lock_sign * m[..., j, i], m[..., j, j])

    first = np.where(locked, first_locked, first)
    third = np.where(locked, 0.0, third)
    return np.stack([first, mid, third], axis=-1)


# ---------------------------------------------------------------------------
# motion sequences
# ---------------------------------------------------------------------------

@dataclass
class MotionSequence:
    """N frames of pose vectors for one skeleton."""

    poses: np.ndarray  # (N, 3 + 6J) float64
    skeleton: Skeleton
    fps: float = TARGET_FPS
    standardized: bool = False

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64)
        if self.poses.ndim != 2:
            raise ValueError("poses must be a (N, 3+6J) matrix")
        expected = 3 + 6 * len(self.skeleton.rotated_joint_indices())
        if self.poses.shape[1] != expected:
            raise ValueError(f"pose width {self.poses.shape[1]} does not match skeleton ({expected})")

    @property
    def n_frames(self) -> int:
        return self.poses.shape[0]

    @property
    def n_joints(self) -> int:
        return (self.poses.shape[1] - 3) // 6

    def root_positions(self) -> np.ndarray:
        return self.poses[:, :3]

    def joint_rotations_6d(self) -> np.ndarray:
        """(N, J, 6) view of the rotation blocks."""
        n = self.n_frames
        return self.poses[:, 3:].reshape(n, self.n_joints, 6)


def pose_dim(skeleton: Skeleton) -> int:
    return 3 + 6 * len(skeleton.rotated_joint_indices())


def _rotation_order(joint: Joint) -> str:
    return "".join(c[0] for c in joint.channels if c.endswith("rotation"))


def encode_pose(raw: RawMotion) -> MotionSequence:
    """Convert raw BVH channel rows (degrees) to pose vectors.

    Root translation is copied verbatim; every rotated joint's Euler triplet
    is composed in its channel order and re-expressed as 6D coordinates.
    Non-root position channels are dropped.
    """
    skeleton = raw.skeleton
    n = raw.n_frames
    rotated = skeleton.rotated_joint_indices()
    out = np.zeros((n, 3 + 6 * len(rotated)), dtype=np.float64)

    col = 0
    for idx, joint in enumerate(skeleton.joints):
        values = raw.frames[:, col:col + len(joint.channels)]
        col += len(joint.channels)
        if joint.is_end_site:
            continue
        rot_cols, pos_cols = [], {}
        for c_i, label in enumerate(joint.channels):
            if label.endswith("rotation"):
                rot_cols.append(c_i)
            else:
                pos_cols[label] = c_i
        if joint.parent is None:
            for axis_i, label in enumerate(POSITION_CHANNELS):
                if label in pos_cols:
                    out[:, axis_i] = values[:, pos_cols[label]]
        if rot_cols:
            order = _rotation_order(joint)
            angles = np.deg2rad(values[:, rot_cols])
            mats = euler_to_matrix(angles, order)
            j = rotated.index(idx)
            out[:, 3 + 6 * j:9 + 6 * j] = rotation6d(mats)
    return MotionSequence(poses=out, skeleton=skeleton, fps=raw.fps, standardized=False)


def _emission_skeleton(skeleton: Skeleton) -> Skeleton:
    """Skeleton with position channels restricted to the root (file-emission form)."""
    joints = []
    for joint in skeleton.joints:
        if joint.parent is None or joint.is_end_site:
            joints.append(joint)
        else:
            rot = tuple(c for c in joint.channels if c.endswith("rotation"))
            joints.append(Joint(name=joint.name, parent=joint.parent, offset=joint.offset, channels=rot))
    return Skeleton(joints=tuple(joints))


def decode_pose(seq: MotionSequence) -> RawMotion:
    """Invert :func:`encode_pose`: 6D blocks back to Euler degrees per channel order."""
    if seq.standardized:
        raise StandardizeDirectionError("decode_pose expects a de-standardized sequence")
    skeleton = _emission_skeleton(seq.skeleton)
    rotated = skeleton.rotated_joint_indices()
    n = seq.n_frames
    frames = np.zeros((n, skeleton.channel_count), dtype=np.float64)
    six = seq.joint_rotations_6d()

    col = 0
    for idx, joint in enumerate(skeleton.joints):
        width = len(joint.channels)
        if joint.is_end_site:
            continue
        if idx in rotated:
            j = rotated.index(idx)
            order = _rotation_order(joint)
            angles = np.rad2deg(matrix_to_euler(gram_schmidt(six[:, j]), order))
        rot_i = 0
        for c_i, label in enumerate(joint.channels):
            if label.endswith("rotation"):
                frames[:, col + c_i] = angles[:, rot_i]
                rot_i += 1
            else:
                frames[:, col + c_i] = seq.poses[:, POSITION_CHANNELS.index(label)] if joint.parent is None else 0.0
        col += width
    return RawMotion(skeleton=skeleton, frame_time=1.0 / seq.fps, frames=frames)


def forward_kinematics(seq: MotionSequence) -> np.ndarray:
    """World positions ``(N, J, 3)`` of the rotated joints.

    Root position comes straight from the pose vector; every other joint sits
    at ``parent_position + parent_global_rotation @ offset``.
    """
    if seq.standardized:
        raise StandardizeDirectionError("forward kinematics needs de-standardized poses")
    skeleton = seq.skeleton
    rotated = skeleton.rotated_joint_indices()
    pose_slot = {joint_idx: j for j, joint_idx in enumerate(rotated)}
    n = seq.n_frames
    local = gram_schmidt(seq.joint_rotations_6d())  # (N, J, 3, 3)

    positions = np.zeros((n, len(rotated), 3), dtype=np.float64)
    globals_ = np.zeros((n, len(rotated), 3, 3), dtype=np.float64)
    for joint_idx in rotated:
        j = pose_slot[joint_idx]
        joint = skeleton.joints[joint_idx]
        if joint.parent is None:
            positions[:, j] = seq.root_positions()
            globals_[:, j] = local[:, j]
        else:
            p = pose_slot[joint.parent]
            positions[:, j] = positions[:, p] + np.einsum("nab,b->na", globals_[:, p], joint.offset)
            globals_[:, j] = globals_[:, p] @ local[:, j]
    return positions


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    """Per-dimension mean/std fitted on training-split motion only."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR))

    @property
    def dims(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "std": self.std.tolist(), "dims": self.dims}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Standardizer":
        doc = json.loads(text)
        s = cls(mean=np.array(doc["mean"]), std=np.array(doc["std"]))
        if s.dims != doc["dims"]:
            raise ValueError(f"standardizer dims field {doc['dims']} does not match vectors of length {s.dims}")
        return s

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "Standardizer":
        return cls.from_json(Path(path).read_text())


def fit_standardizer(sequences: list[MotionSequence]) -> Standardizer:
    if not sequences:
        raise ValueError("cannot fit a standardizer on zero sequences")
    if any(s.standardized for s in sequences):
        raise StandardizeDirectionError("fit on de-standardized sequences only")
    data = np.concatenate([s.poses for s in sequences], axis=0)
    return Standardizer(mean=data.mean(axis=0), std=data.std(axis=0))


def standardize(seq: MotionSequence, s: Standardizer, direction: str = "forward") -> MotionSequence:
    """Elementwise ``(x - mean) / std`` (forward) or ``x * std + mean`` (inverse)."""
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if direction == "forward":
        if seq.standardized:
            raise StandardizeDirectionError("sequence is already standardized")
        poses = (seq.poses - s.mean) / s.std
        flag = True
    else:
        if not seq.standardized:
            raise StandardizeDirectionError("sequence is not standardized")
        poses = seq.poses * s.std + s.mean
        flag = False
    return MotionSequence(poses=poses, skeleton=seq.skeleton, fps=seq.fps, standardized=flag)


# ---------------------------------------------------------------------------
# Savitzky-Golay smoothing
# ---------------------------------------------------------------------------

def savgol_coefficients(window: int, order: int, pos: int | None = None) -> np.ndarray:
    """Least-squares polynomial filter taps for one window.

    ``pos`` is the in-window evaluation index (defaults to the center).  The
    returned taps ``c`` reproduce any degree-``order`` polynomial exactly:
    ``sum(c * poly(window samples)) == poly(pos)``.
    """
    if window % 2 != 1 or window < 1:
        raise ValueError(f"window must be odd and positive, got {window}")
    if order >= window:
        raise ValueError(f"order {order} must be smaller than window {window}")
    if pos is None:
        pos = window // 2
    offsets = np.arange(window, dtype=np.float64) - window // 2
    basis = np.vander(offsets, order + 1, increasing=True)  # (window, order+1)
    # taps = e_pos-row of the least-squares projection basis (BᵀB)⁻¹Bᵀ
    proj = np.linalg.solve(basis.T @ basis, basis.T)
    eval_at = np.vander(np.array([offsets[pos]]), order + 1, increasing=True)
    return (eval_at @ proj)[0]


def savgol_smooth(values: np.ndarray, window: int, order: int, edge_mode: str = "polyfit") -> np.ndarray:
    """Column-wise Savitzky-Golay filtering of a ``(N, D)`` array.

    ``edge_mode='polyfit'`` evaluates the boundary-window least-squares fits
    off-center, so polynomials up to ``order`` are reproduced exactly over the
    whole signal.  ``edge_mode='mirror'`` reflects interior samples around the
    endpoints instead.
    """
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[:, None]
    n = values.shape[0]
    if n < window:
        raise SmoothingWindowError(f"need at least {window} frames to smooth, got {n}; skip smoothing for short clips")
    half = window // 2
    center = savgol_coefficients(window, order)

    def _convolve(signal: np.ndarray) -> np.ndarray:
        windows = np.lib.stride_tricks.sliding_window_view(signal, window, axis=0)
        return np.einsum("ndw,w->nd", windows, center)

    if edge_mode == "mirror":
        out = _convolve(np.pad(values, ((half, half), (0, 0)), mode="reflect"))
    elif edge_mode == "polyfit":
        out = np.empty_like(values)
        out[half:n - half] = _convolve(values)
        for p in range(half):
            out[p] = savgol_coefficients(window, order, pos=p) @ values[:window]
            out[n - 1 - p] = savgol_coefficients(window, order, pos=window - 1 - p) @ values[n - window:]
    else:
        raise ValueError(f"unknown edge_mode {edge_mode!r}")
    return out[:, 0] if squeeze else out


def smooth_motion(seq: MotionSequence, window: int = 9, order: int = 2, edge_mode: str = "polyfit") -> MotionSequence:
    """Post-smooth a motion sequence per pose dimension (window 9, order 2)."""
    smoothed = savgol_smooth(seq.poses, window, order, edge_mode=edge_mode)
    return MotionSequence(poses=smoothed, skeleton=seq.skeleton, fps=seq.fps, standardized=seq.standardized)
