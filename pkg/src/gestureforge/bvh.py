"""Biovision Hierarchy (BVH) parsing and serialization.

The parser keeps joints in document order (topological: every parent precedes
its children), retains End Sites as zero-channel joints, and leaves rotation
values in degrees exactly as stored in the file.  Conversion to radians and to
rotation matrices happens in :mod:`gestureforge.pose`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
VALID_CHANNELS = POSITION_CHANNELS + ROTATION_CHANNELS


class BvhParseError(ValueError):
    """Malformed BVH document; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BvhInvariantError(ValueError):
    """Skeleton or motion violates a structural invariant."""


@dataclass(frozen=True, eq=False)
class Joint:
    name: str
    parent: int | None
    offset: np.ndarray  # 3-vector, same length unit as the source file
    channels: tuple[str, ...]  # empty for End Sites

    @property
    def is_end_site(self) -> bool:
        return len(self.channels) == 0

    def __eq__(self, other):
        if not isinstance(other, Joint):
            return NotImplemented
        return (
            self.name == other.name
            and self.parent == other.parent
            and self.channels == other.channels
            and np.array_equal(self.offset, other.offset)
        )


@dataclass(frozen=True)
class Skeleton:
    """Joint hierarchy in document order (parents before children)."""

    joints: tuple[Joint, ...]

    def __post_init__(self):
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if roots != [0]:
            raise BvhInvariantError(f"expected exactly one root joint at index 0, got roots at {roots}")
        for i, j in enumerate(self.joints):
            if j.parent is not None and not (0 <= j.parent < i):
                raise BvhInvariantError(f"joint {j.name!r} at index {i} has parent index {j.parent}, breaking topological order")
            if not j.is_end_site and len(j.channels) not in (3, 6):
                raise BvhInvariantError(f"joint {j.name!r} has {len(j.channels)} channels; expected 3 or 6")

    @property
    def channel_count(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    def rotated_joint_indices(self) -> list[int]:
        """Indices of joints carrying rotation channels (End Sites excluded)."""
        return [i for i, j in enumerate(self.joints) if any(c in ROTATION_CHANNELS for c in j.channels)]

    def children_of(self, index: int) -> list[int]:
        return [i for i, j in enumerate(self.joints) if j.parent == index]

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(name)


@dataclass
class RawMotion:
    """Per-frame channel values exactly as stored in a BVH file (degrees)."""

    skeleton: Skeleton
    frame_time: float
    frames: np.ndarray  # (N, C) float64

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            self.frames = self.frames.reshape(len(self.frames), -1) if self.frames.size else self.frames.reshape(0, self.skeleton.channel_count)
        if self.frames.shape[1] != self.skeleton.channel_count:
            raise BvhInvariantError(
                f"frame width {self.frames.shape[1]} does not match skeleton channel count {self.skeleton.channel_count}"
            )
        if not self.frame_time > 0:
            raise BvhInvariantError(f"frame_time must be positive, got {self.frame_time}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def fps(self) -> float:
        return 1.0 / self.frame_time


@dataclass
class _Cursor:
    lines: list[str]
    pos: int = 0

    def next_tokens(self) -> tuple[list[str], int]:
        """Tokens of the next non-empty line and its 1-based number."""
        while self.pos < len(self.lines):
            line_no = self.pos + 1
            tokens = self.lines[self.pos].split()
            self.pos += 1
            if tokens:
                return tokens, line_no
        raise BvhParseError("unexpected end of document", len(self.lines))

    @property
    def exhausted(self) -> bool:
        return all(not ln.strip() for ln in self.lines[self.pos:])


def _parse_floats(tokens: list[str], line: int, what: str) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise BvhParseError(f"non-numeric {what}: {exc}", line) from None


def _parse_joint_body(cur: _Cursor, joints: list[Joint], parent: int | None, name: str, end_names: dict[int, int]):
    tokens, line = cur.next_tokens()
    if tokens != ["{"]:
        raise BvhParseError(f"expected '{{' after joint {name!r}", line)

    tokens, line = cur.next_tokens()
    if tokens[0] != "OFFSET" or len(tokens) != 4:
        raise BvhParseError(f"expected 'OFFSET x y z' in joint {name!r}", line)
    offset = np.array(_parse_floats(tokens[1:], line, "offset"), dtype=np.float64)

    index = len(joints)
    if name == "__end__":
        parent_name = joints[parent].name if parent is not None else "root"
        seq = end_names.get(parent, 0)
        end_names[parent] = seq + 1
        suffix = "" if seq == 0 else f"_{seq}"
        joints.append(Joint(name=f"{parent_name}_end{suffix}", parent=parent, offset=offset, channels=()))
        tokens, line = cur.next_tokens()
        if tokens != ["}"]:
            raise BvhParseError("expected '}' closing End Site", line)
        return

    tokens, line = cur.next_tokens()
    if tokens[0] != "CHANNELS":
        raise BvhParseError(f"expected 'CHANNELS' in joint {name!r}", line)
    try:
        n_chan = int(tokens[1])
    except (IndexError, ValueError):
        raise BvhParseError("CHANNELS needs an integer count", line) from None
    channels = tuple(tokens[2:])
    if len(channels) != n_chan:
        raise BvhParseError(f"CHANNELS declares {n_chan} labels but lists {len(channels)}", line)
    for c in channels:
        if c not in VALID_CHANNELS:
            raise BvhParseError(f"unknown channel label {c!r}", line)
    joints.append(Joint(name=name, parent=parent, offset=offset, channels=channels))

    while True:
        tokens, line = cur.next_tokens()
        if tokens == ["}"]:
            return
        if tokens[0] == "JOINT" and len(tokens) >= 2:
            _parse_joint_body(cur, joints, index, " ".join(tokens[1:]), end_names)
        elif tokens[:2] == ["End", "Site"]:
            _parse_joint_body(cur, joints, index, "__end__", end_names)
        else:
            raise BvhParseError(f"unexpected token {tokens[0]!r} inside joint {name!r} (unbalanced braces?)", line)


def parse_bvh(text: str) -> RawMotion:
    """Parse a BVH document into a :class:`RawMotion`.

    Raises :class:`BvhParseError` (with a line number) for malformed
    hierarchies, channel/frame width mismatches, and non-numeric motion rows.
    """
    cur = _Cursor(text.splitlines())

    tokens, line = cur.next_tokens()
    if tokens != ["HIERARCHY"]:
        raise BvhParseError("document must start with 'HIERARCHY'", line)
    tokens, line = cur.next_tokens()
    if tokens[0] != "ROOT" or len(tokens) < 2:
        raise BvhParseError("expected 'ROOT <name>'", line)

    joints: list[Joint] = []
    _parse_joint_body(cur, joints, None, " ".join(tokens[1:]), end_names={})
    skeleton = Skeleton(joints=tuple(joints))

    tokens, line = cur.next_tokens()
    if tokens != ["MOTION"]:
        raise BvhParseError("expected 'MOTION' section after hierarchy (unbalanced braces?)", line)
    tokens, line = cur.next_tokens()
    if tokens[0] != "Frames:" or len(tokens) != 2:
        raise BvhParseError("expected 'Frames: <count>'", line)
    try:
        n_frames = int(tokens[1])
    except ValueError:
        raise BvhParseError(f"non-integer frame count {tokens[1]!r}", line) from None
    tokens, line = cur.next_tokens()
    if tokens[:2] != ["Frame", "Time:"] or len(tokens) != 3:
        raise BvhParseError("expected 'Frame Time: <seconds>'", line)
    frame_time = _parse_floats(tokens[2:], line, "frame time")[0]

    width = skeleton.channel_count
    rows = np.empty((n_frames, width), dtype=np.float64)
    for r in range(n_frames):
        tokens, line = cur.next_tokens()
        if len(tokens) != width:
            raise BvhParseError(f"motion row has {len(tokens)} values, expected {width}", line)
        rows[r] = _parse_floats(tokens, line, "motion value")
    if not cur.exhausted:
        tokens, line = cur.next_tokens()
        raise BvhParseError(f"trailing content after {n_frames} declared frames", line)

    return RawMotion(skeleton=skeleton, frame_time=frame_time, frames=rows)


def _format_row(values: np.ndarray) -> str:
    return " ".join(f"{v:.6f}" for v in values)


def _write_joint(out: list[str], skeleton: Skeleton, index: int, depth: int):
    joint = skeleton.joints[index]
    pad = "\t" * depth
    if joint.is_end_site:
        out.append(f"{pad}End Site")
        out.append(pad + "{")
        out.append(f"{pad}\tOFFSET {_format_row(joint.offset)}")
        out.append(pad + "}")
        return
    keyword = "ROOT" if joint.parent is None else "JOINT"
    out.append(f"{pad}{keyword} {joint.name}")
    out.append(pad + "{")
    out.append(f"{pad}\tOFFSET {_format_row(joint.offset)}")
    out.append(f"{pad}\tCHANNELS {len(joint.channels)} {' '.join(joint.channels)}")
    for child in skeleton.children_of(index):
        _write_joint(out, skeleton, child, depth + 1)
    out.append(pad + "}")


def _dfs_order(skeleton: Skeleton) -> list[int]:
    order: list[int] = []

    def visit(index: int):
        order.append(index)
        for child in skeleton.children_of(index):
            visit(child)

    visit(0)
    return order


def _reorder_depth_first(motion: RawMotion) -> RawMotion:
    """Permute joints (and frame columns) into the nesting order a BVH document
    implies; a no-op for motions that came from parse_bvh."""
    order = _dfs_order(motion.skeleton)
    if order == list(range(len(motion.skeleton.joints))):
        return motion
    starts = np.cumsum([0] + [len(j.channels) for j in motion.skeleton.joints])
    new_index = {old: new for new, old in enumerate(order)}
    joints = []
    for old in order:
        j = motion.skeleton.joints[old]
        parent = None if j.parent is None else new_index[j.parent]
        joints.append(Joint(name=j.name, parent=parent, offset=j.offset, channels=j.channels))
    joints = tuple(joints)
    columns = [c for old in order for c in range(starts[old], starts[old + 1])]
    return RawMotion(skeleton=Skeleton(joints=joints), frame_time=motion.frame_time, frames=motion.frames[:, columns])


def serialize_bvh(motion: RawMotion) -> str:
    """Emit a BVH document (channels at 6 fixed decimals, so round-trip error
    stays below 1e-4; frame time at 7 decimals)."""
    motion = _reorder_depth_first(motion)
    out: list[str] = ["HIERARCHY"]
    _write_joint(out, motion.skeleton, 0, 0)
    out.append("MOTION")
    out.append(f"Frames: {motion.n_frames}")
    out.append(f"Frame Time: {motion.frame_time:.7f}")
    for row in motion.frames:
        out.append(_format_row(row))
    return "\n".join(out) + "\n"
