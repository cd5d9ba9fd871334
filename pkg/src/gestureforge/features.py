"""Frame-aligned multimodal feature construction.

Audio, text, and speaker-style features are all aligned to the 30 fps motion
timeline: one row per motion frame.  Embedding models are consumed through
provider interfaces; the shipped providers are deterministic mocks (seeded
hash vectors for text, signal statistics for audio) so the whole pipeline runs
without any pretrained weights.  Real encoders plug in behind the same
interfaces.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
import torch
from scipy.io import wavfile

from .pose import TARGET_FPS

log = logging.getLogger(__name__)

MODALITIES = ("audio", "text", "speaker", "fused")
SPEAKER_DIM = 8
UNKNOWN_SPEAKER = "<unk>"

# toy sub-word suffixes for the mock tokenizer; longest match wins
_SUFFIXES = ("ing", "tion", "ness", "ed", "ly", "er", "es")


class ProviderContractError(RuntimeError):
    """An embedding provider returned output violating its shape contract."""


class ArchiveCorruptionError(RuntimeError):
    """Feature archive sidecar and blob contents disagree."""


@dataclass(frozen=True)
class TranscriptWord:
    text: str
    start: float  # seconds
    end: float

    def __post_init__(self):
        if not (0.0 <= self.start < self.end):
            raise ValueError(f"word {self.text!r} has invalid interval [{self.start}, {self.end})")


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray  # mono float32 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float32).reshape(-1))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FeatureMatrix:
    """(N, D) frame-aligned feature block with a modality tag."""

    values: np.ndarray  # float32
    modality: str
    fps: float = TARGET_FPS

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("feature values must be a (N, D) matrix")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.modality} features contain non-finite values")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@runtime_checkable
class TextEmbeddingProvider(Protocol):
    dim: int

    def embed(self, words: list[str]) -> np.ndarray:
        """Per-word embeddings (len(words), dim); deterministic, frozen."""
        ...


@runtime_checkable
class AudioEmbeddingProvider(Protocol):
    dim: int

    def embed(self, wave: Waveform, n_frames: int) -> np.ndarray:
        """One embedding per ~33 ms frame window, shape (n_frames, dim)."""
        ...


def _hash_unit_vector(token: str, dim: int, salt: str) -> np.ndarray:
    digest = hashlib.sha256(f"{salt}\x00{token}".encode()).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def split_subwords(word: str) -> list[str]:
    """Toy sub-word split: peel one known suffix, e.g. 'thinking' -> ['think', 'ing']."""
    for suffix in sorted(_SUFFIXES, key=len, reverse=True):
        stem = word[: len(word) - len(suffix)]
        if word.endswith(suffix) and len(stem) >= 3:
            return [stem, suffix]
    return [word]


class MockTextProvider:
    """Deterministic stand-in for a frozen language model.

    Each word is sub-word tokenized and mapped to the seeded unit vector of
    its *last* sub-token, mirroring how causal LM embeddings are pooled.
    """

    def __init__(self, dim: int = 32, salt: str = "text-v1"):
        self.dim = dim
        self.salt = salt

    def embed(self, words: list[str]) -> np.ndarray:
        out = np.zeros((len(words), self.dim), dtype=np.float32)
        for i, word in enumerate(words):
            last = split_subwords(word)[-1]
            out[i] = _hash_unit_vector(last, self.dim, self.salt)
        return out


def frame_window(wave: Waveform, frame: int, fps: float = TARGET_FPS) -> np.ndarray:
    """Samples of the ~33 ms window centered on a frame; out-of-range is zero-padded."""
    width = max(1, round(wave.sample_rate / fps))
    center = round((frame + 0.5) / fps * wave.sample_rate)
    lo = center - width // 2
    hi = lo + width
    window = np.zeros(width, dtype=np.float32)
    src_lo, src_hi = max(lo, 0), min(hi, len(wave.samples))
    if src_hi > src_lo:
        window[src_lo - lo:src_hi - lo] = wave.samples[src_lo:src_hi]
    return window


class MockAudioProvider:
    """Deterministic stand-in for a frozen speech encoder.

    Per-window scalar statistics (RMS, zero-crossing rate, peak) are expanded
    into `dim` dimensions through a fixed seeded projection, so silence maps
    to exactly zero rows.
    """

    def __init__(self, dim: int = 16, seed: int = 101):
        self.dim = dim
        rng = np.random.Generator(np.random.PCG64(seed))
        self._basis = rng.standard_normal((3, dim)).astype(np.float32)

    def embed(self, wave: Waveform, n_frames: int) -> np.ndarray:
        stats = np.zeros((n_frames, 3), dtype=np.float32)
        for f in range(n_frames):
            w = frame_window(wave, f)
            rms = float(np.sqrt(np.mean(w.astype(np.float64) ** 2)))
            zcr = float(np.mean(np.abs(np.diff(np.signbit(w).astype(np.float32))))) if rms > 0 else 0.0
            stats[f] = (rms, zcr, float(np.max(np.abs(w))))
        return stats @ self._basis


def align_words_to_frames(words: list[TranscriptWord], embeddings: np.ndarray, n_frames: int) -> FeatureMatrix:
    """Spread per-word embeddings over the frames whose centers they cover.

    Frame f (center ``(f + 0.5) / 30`` s) carries the embedding of the word
    whose ``[start, end)`` interval contains that center, duplicated for every
    covered frame; frames with no word get the zero vector.  Word intervals
    past the clip end are clipped with a warning.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if len(words) != len(embeddings):
        raise ValueError(f"{len(words)} words but {len(embeddings)} embeddings")
    embeddings = np.asarray(embeddings, dtype=np.float32)
    dim = embeddings.shape[1] if embeddings.ndim == 2 else 0
    out = np.zeros((n_frames, dim), dtype=np.float32)

    clip_end = n_frames / TARGET_FPS
    centers = (np.arange(n_frames) + 0.5) / TARGET_FPS
    for word, vec in zip(words, embeddings):
        if word.start >= clip_end:
            log.warning("word %r at %.3fs starts beyond clip end %.3fs; dropped", word.text, word.start, clip_end)
            continue
        if word.end > clip_end:
            log.warning("word %r runs past clip end %.3fs; clipped", word.text, clip_end)
        mask = (centers >= word.start) & (centers < word.end)
        out[mask] = vec
    return FeatureMatrix(values=out, modality="text")


def extract_text_features(provider: TextEmbeddingProvider, words: list[TranscriptWord], n_frames: int) -> FeatureMatrix:
    embeddings = provider.embed([w.text for w in words]) if words else np.zeros((0, provider.dim), dtype=np.float32)
    return align_words_to_frames(words, embeddings, n_frames)


def extract_audio_features(provider: AudioEmbeddingProvider, wave: Waveform, n_frames: int) -> FeatureMatrix:
    rows = np.asarray(provider.embed(wave, n_frames), dtype=np.float32)
    if rows.shape != (n_frames, provider.dim):
        raise ProviderContractError(f"audio provider returned shape {rows.shape}, contract requires ({n_frames}, {provider.dim})")
    return FeatureMatrix(values=rows, modality="audio")


# ---------------------------------------------------------------------------
# speaker style
# ---------------------------------------------------------------------------

class SpeakerTable(torch.nn.Module):
    """Trainable speaker-style embeddings; row 0 is reserved for unknown ids."""

    def __init__(self, speaker_ids: list[str], dim: int = SPEAKER_DIM):
        super().__init__()
        self.dim = dim
        self.id_to_index = {UNKNOWN_SPEAKER: 0}
        for sid in sorted(set(speaker_ids)):
            self.id_to_index.setdefault(sid, len(self.id_to_index))
        self.embedding = torch.nn.Embedding(len(self.id_to_index), dim)

    def index_of(self, speaker_id: str) -> int:
        return self.id_to_index.get(speaker_id, 0)

    def rows(self, speaker_id: str, n_frames: int) -> torch.Tensor:
        """(n_frames, dim) view into the live trainable matrix (autograd-aware)."""
        idx = torch.full((n_frames,), self.index_of(speaker_id), dtype=torch.long)
        return self.embedding(idx)

    def save(self, path: str | Path):
        doc = {
            "dim": self.dim,
            "id_to_index": self.id_to_index,
            "embedding": self.embedding.weight.detach().numpy().tolist(),
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "SpeakerTable":
        doc = json.loads(Path(path).read_text())
        table = cls.__new__(cls)
        torch.nn.Module.__init__(table)
        table.dim = doc["dim"]
        table.id_to_index = doc["id_to_index"]
        table.embedding = torch.nn.Embedding(len(table.id_to_index), table.dim)
        with torch.no_grad():
            table.embedding.weight.copy_(torch.tensor(doc["embedding"], dtype=torch.float32))
        return table


def speaker_rows(table: SpeakerTable, speaker_id: str, n_frames: int) -> FeatureMatrix:
    """The speaker's current style vector repeated once per frame.

    Re-reads the live table on every call, so rows reflect training updates;
    unseen labels fall back to the reserved unknown row.
    """
    rows = table.rows(speaker_id, n_frames).detach().numpy()
    return FeatureMatrix(values=rows, modality="speaker")


# ---------------------------------------------------------------------------
# archive + file ingestion
# ---------------------------------------------------------------------------

_SIDECAR = "features.json"


def save_archive(features: dict[str, FeatureMatrix], path: str | Path):
    """Persist named matrices as little-endian float32 blobs plus a JSON sidecar."""
    rows = {m.n_frames for m in features.values()}
    if len(rows) > 1:
        raise ValueError(f"all archived matrices must share the frame count, got {sorted(rows)}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    sidecar = {}
    for name, matrix in features.items():
        if "/" in name or name.startswith("."):
            raise ValueError(f"invalid archive entry name {name!r}")
        sidecar[name] = {"rows": matrix.n_frames, "cols": matrix.dim, "modality": matrix.modality}
        (path / f"{name}.f32").write_bytes(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())
    (path / _SIDECAR).write_text(json.dumps(sidecar, sort_keys=True, indent=2))


def load_archive(path: str | Path) -> dict[str, FeatureMatrix]:
    path = Path(path)
    sidecar = json.loads((path / _SIDECAR).read_text())
    out: dict[str, FeatureMatrix] = {}
    for name, meta in sidecar.items():
        blob = (path / f"{name}.f32").read_bytes()
        expected = meta["rows"] * meta["cols"] * 4
        if len(blob) != expected:
            raise ArchiveCorruptionError(f"entry {name!r}: blob is {len(blob)} bytes, sidecar expects {expected}")
        values = np.frombuffer(blob, dtype="<f4").reshape(meta["rows"], meta["cols"])
        out[name] = FeatureMatrix(values=values.copy(), modality=meta["modality"])
    return out


def read_transcript_tsv(path: str | Path) -> list[TranscriptWord]:
    """Tab-separated transcript rows: start-seconds, end-seconds, word."""
    words = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{line_no}: expected 3 tab-separated columns, got {len(parts)}")
        start, end, text = parts
        words.append(TranscriptWord(text=text.strip(), start=float(start), end=float(end)))
    words.sort(key=lambda w: w.start)
    for prev, cur in zip(words, words[1:]):
        if cur.start < prev.end:
            raise ValueError(f"{path}: words {prev.text!r} and {cur.text!r} overlap")
    return words


def write_transcript_tsv(words: list[TranscriptWord], path: str | Path):
    lines = [f"{w.start:.3f}\t{w.end:.3f}\t{w.text}" for w in words]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_wav(path: str | Path) -> Waveform:
    """Read a mono PCM WAV file into float32 samples in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim > 1:
        data = data.mean(axis=1)
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float32) / float(np.iinfo(data.dtype).max)
    return Waveform(samples=data.astype(np.float32), sample_rate=int(rate))


def save_wav(wave: Waveform, path: str | Path):
    clipped = np.clip(wave.samples, -1.0, 1.0)
    wavfile.write(path, wave.sample_rate, (clipped * 32767.0).astype(np.int16))
