"""Dyadic session ingestion and synthetic desk-scale dataset generation.

On-disk layout (one directory per split, per session, per speaker role):

    <root>/<split>/<session>/{main-agent,interlocutor}/
        audio.wav  transcript.tsv  motion.bvh  speaker.txt

The synthetic generator writes sessions whose main-agent motion is a pure
function of the word stream: designated trigger words produce a smooth arm
raise peaking in wrist speed exactly at the word center (returning during the
following gap), on top of a gentle global sway; the audio is amplitude
modulated noise with an energy burst per word, loudest on triggers.  That
gives training signal a model can provably pick up and lets tests assert
feature-to-gesture structure by construction.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bvh import Joint, RawMotion, Skeleton, parse_bvh, serialize_bvh
from .features import TranscriptWord, Waveform, load_wav, read_transcript_tsv, save_wav, write_transcript_tsv

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
ROLES = ("main-agent", "interlocutor")
FPS = 30.0
MAX_DURATION_MISMATCH_S = 1.0

DEFAULT_VOCABULARY = ("boom", "wave", "point", "calm", "talk", "quiet", "yes", "maybe", "###")


class SessionLoadError(RuntimeError):
    """A session asset is missing, malformed, or inconsistent."""


@dataclass
class SpeakerAssets:
    audio_path: Path
    transcript_path: Path
    motion_path: Path | None
    speaker_id: str
    wave: Waveform
    words: list[TranscriptWord]
    motion: RawMotion | None


@dataclass
class DyadicSession:
    session_id: str
    split: str
    main_agent: SpeakerAssets
    interlocutor: SpeakerAssets
    n_frames: int


def assign_split(session_id: str) -> str:
    """Stable split assignment from the session id alone.

    Ids with a trailing integer k map by k % 5 (3 -> val, 4 -> test, else
    train); other ids hash to the same 3/1/1 proportions.
    """
    match = re.search(r"(\d+)$", session_id)
    if match:
        k = int(match.group(1)) % 5
    else:
        k = hashlib.sha256(session_id.encode()).digest()[0] % 5
    return {3: "val", 4: "test"}.get(k, "train")


def list_sessions(root: str | Path, split: str | None = None) -> list[tuple[str, str]]:
    """Sorted (split, session_id) pairs found under the dataset root."""
    root = Path(root)
    found = []
    for s in SPLITS if split is None else (split,):
        split_dir = root / s
        if not split_dir.is_dir():
            continue
        for session_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            found.append((s, session_dir.name))
    return found


def _load_role(session_dir: Path, role: str, motion_required: bool) -> SpeakerAssets:
    role_dir = session_dir / role
    audio_path = role_dir / "audio.wav"
    transcript_path = role_dir / "transcript.tsv"
    motion_path = role_dir / "motion.bvh"
    speaker_path = role_dir / "speaker.txt"
    for path, required in ((audio_path, True), (transcript_path, True), (motion_path, motion_required), (speaker_path, True)):
        if required and not path.is_file():
            raise SessionLoadError(f"missing asset: {path}")

    motion = None
    if motion_path.is_file():
        motion = parse_bvh(motion_path.read_text())
        if abs(motion.frame_time - 1.0 / FPS) > 1e-6:
            raise SessionLoadError(f"{motion_path}: frame time {motion.frame_time:.6f} is not 30 fps")
    return SpeakerAssets(
        audio_path=audio_path,
        transcript_path=transcript_path,
        motion_path=motion_path if motion is not None else None,
        speaker_id=speaker_path.read_text().strip(),
        wave=load_wav(audio_path),
        words=read_transcript_tsv(transcript_path),
        motion=motion,
    )


def load_session(root: str | Path, session_id: str) -> DyadicSession:
    """Load and reconcile one dyadic session; N comes from the main-agent motion."""
    root = Path(root)
    matches = [s for s, sid in list_sessions(root) if sid == session_id]
    if not matches:
        raise SessionLoadError(f"session {session_id!r} not found under {root}")
    split = matches[0]
    session_dir = root / split / session_id

    main = _load_role(session_dir, "main-agent", motion_required=True)
    inter = _load_role(session_dir, "interlocutor", motion_required=False)
    assert main.motion is not None

    n_frames = main.motion.n_frames
    motion_duration = n_frames / FPS
    for assets in (main, inter):
        mismatch = assets.wave.duration - motion_duration
        if abs(mismatch) > MAX_DURATION_MISMATCH_S:
            raise SessionLoadError(
                f"{assets.audio_path}: audio is {assets.wave.duration:.2f}s but motion is {motion_duration:.2f}s (>{MAX_DURATION_MISMATCH_S:.0f}s apart)"
            )
        if mismatch > 0:
            log.debug("%s: dropping %.2fs audio tail", assets.audio_path, mismatch)
    return DyadicSession(session_id=session_id, split=split, main_agent=main, interlocutor=inter, n_frames=n_frames)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    n_sessions: int = 4
    duration_s: float = 10.0
    n_speakers: int = 3
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    seed: int = 0
    trigger_words: tuple[str, ...] = ("boom",)
    sample_rate: int = 24000

    WORD_DURATION_S: float = 0.4
    TURN_CYCLE_S: float = 1.6
    TRIGGER_PROB: float = 0.35
    FLICK_DEGREES: float = 60.0
    RETURN_DURATION_S: float = 0.3


def default_skeleton() -> Skeleton:
    """Small wrist-bearing test skeleton (8 rotated joints, pose width 51)."""
    j = [
        Joint("Hips", None, np.array([0.0, 0.0, 0.0]), ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation")),
        Joint("Spine", 0, np.array([0.0, 10.0, 0.0]), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("Neck", 1, np.array([0.0, 10.0, 0.0]), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("Head", 2, np.array([0.0, 5.0, 0.0]), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("Head_end", 3, np.array([0.0, 3.0, 0.0]), ()),
        Joint("LeftArm", 1, np.array([-5.0, 8.0, 0.0]), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("LeftWrist", 5, np.array([-10.0, 0.0, 0.0]), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("LeftWrist_end", 6, np.array([-3.0, 0.0, 0.0]), ()),
        Joint("RightArm", 1, np.array([5.0, 8.0, 0.0]), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("RightWrist", 8, np.array([10.0, 0.0, 0.0]), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("RightWrist_end", 9, np.array([3.0, 0.0, 0.0]), ()),
    ]
    return Skeleton(joints=tuple(j))


def _smoothstep(u: np.ndarray) -> np.ndarray:
    """C1 monotone 0 -> 1 transition over u in [-1, 1], steepest at u = 0."""
    return np.where(u <= -1.0, 0.0, np.where(u >= 1.0, 1.0, (1.0 + np.sin(np.pi * u / 2.0)) / 2.0))


def _word_plan(spec: SyntheticSpec, rng: np.random.Generator, role: str) -> list[TranscriptWord]:
    """Turn-taking word slots: main speaks early in each cycle, interlocutor late."""
    offset = 0.2 if role == "main-agent" else 0.2 + spec.TURN_CYCLE_S / 2.0
    words: list[TranscriptWord] = []
    plain = [w for w in spec.vocabulary if w not in spec.trigger_words]
    t = offset
    while t + spec.WORD_DURATION_S < spec.duration_s:
        if rng.random() < spec.TRIGGER_PROB:
            text = spec.trigger_words[rng.integers(len(spec.trigger_words))]
        else:
            text = plain[rng.integers(len(plain))]
        words.append(TranscriptWord(text=text, start=round(t, 3), end=round(t + spec.WORD_DURATION_S, 3)))
        t += spec.TURN_CYCLE_S
    return words


def trigger_flick_angle(times: np.ndarray, word: TranscriptWord, spec: SyntheticSpec) -> np.ndarray:
    """Arm angle (degrees) of one trigger episode: smoothstep rise across the
    word (steepest, hence peak wrist speed, at the word center) and a return
    during the following gap."""
    center = (word.start + word.end) / 2.0
    half = (word.end - word.start) / 2.0
    rise = _smoothstep((times - center) / half)
    fall_center = word.end + spec.RETURN_DURATION_S / 2.0
    fall = _smoothstep((times - fall_center) / (spec.RETURN_DURATION_S / 2.0))
    return spec.FLICK_DEGREES * (rise - fall)


def _synthesize_motion(spec: SyntheticSpec, words: list[TranscriptWord], n_frames: int) -> RawMotion:
    skeleton = default_skeleton()
    times = np.arange(n_frames) / FPS
    frames = np.zeros((n_frames, skeleton.channel_count), dtype=np.float64)

    col_of: dict[tuple[str, str], int] = {}
    col = 0
    for joint in skeleton.joints:
        for label in joint.channels:
            col_of[(joint.name, label)] = col
            col += 1

    frames[:, col_of[("Hips", "Yposition")]] = 95.0
    sway = 3.0 * np.sin(2.0 * np.pi * 0.25 * times)
    frames[:, col_of[("Spine", "Zrotation")]] = sway

    arm = np.zeros(n_frames)
    for word in words:
        if word.text in spec.trigger_words:
            arm += trigger_flick_angle(times, word, spec)
    frames[:, col_of[("RightArm", "Zrotation")]] = arm
    return RawMotion(skeleton=skeleton, frame_time=1.0 / FPS, frames=frames)


def _synthesize_audio(spec: SyntheticSpec, words: list[TranscriptWord], rng: np.random.Generator) -> Waveform:
    n_samples = int(round(spec.duration_s * spec.sample_rate))
    t = np.arange(n_samples) / spec.sample_rate
    envelope = np.full(n_samples, 0.02)
    for word in words:
        mask = (t >= word.start) & (t < word.end)
        envelope[mask] = 0.7 if word.text in spec.trigger_words else 0.3
    samples = rng.standard_normal(n_samples) * envelope
    return Waveform(samples=np.clip(samples, -1.0, 1.0).astype(np.float32), sample_rate=spec.sample_rate)


def make_synthetic(spec: SyntheticSpec, out: str | Path) -> list[str]:
    """Write a deterministic synthetic dyadic dataset; returns the session ids."""
    out = Path(out)
    session_ids = []
    for i in range(spec.n_sessions):
        session_id = f"session_{i:03d}"
        session_ids.append(session_id)
        split = assign_split(session_id)
        n_frames = int(round(spec.duration_s * FPS))
        for role_idx, role in enumerate(ROLES):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((spec.seed, i, role_idx))))
            speaker = f"spk{(2 * i + role_idx) % spec.n_speakers}"
            words = _word_plan(spec, rng, role)
            role_dir = out / split / session_id / role
            role_dir.mkdir(parents=True, exist_ok=True)
            (role_dir / "speaker.txt").write_text(speaker + "\n")
            write_transcript_tsv(words, role_dir / "transcript.tsv")
            save_wav(_synthesize_audio(spec, words, rng), role_dir / "audio.wav")
            (role_dir / "motion.bvh").write_text(serialize_bvh(_synthesize_motion(spec, words, n_frames)))
    return session_ids


def trigger_centers(words: list[TranscriptWord], trigger_words: tuple[str, ...]) -> list[float]:
    """Center times (seconds) of the trigger-word occurrences in a transcript."""
    return [(w.start + w.end) / 2.0 for w in words if w.text in trigger_words]
