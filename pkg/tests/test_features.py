import logging

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from gestureforge.features import (
    ArchiveCorruptionError,
    FeatureMatrix,
    MockAudioProvider,
    MockTextProvider,
    ProviderContractError,
    SpeakerTable,
    TranscriptWord,
    Waveform,
    align_words_to_frames,
    extract_audio_features,
    extract_text_features,
    load_archive,
    load_wav,
    read_transcript_tsv,
    save_archive,
    save_wav,
    speaker_rows,
    split_subwords,
    write_transcript_tsv,
)


def silence(seconds: float = 1.0, sr: int = 24000) -> Waveform:
    return Waveform(samples=np.zeros(int(seconds * sr), dtype=np.float32), sample_rate=sr)


# ---------------------------------------------------------------------------
# text alignment
# ---------------------------------------------------------------------------

def test_word_covers_frames_by_center_rule():
    # [0.0, 0.1) covers frame centers 1/60, 3/60, 5/60 -> frames 0..2 of 6
    words = [TranscriptWord("hi", 0.0, 0.1)]
    emb = np.ones((1, 4), dtype=np.float32)
    out = align_words_to_frames(words, emb, n_frames=6)
    np.testing.assert_array_equal(out.values[:3], np.ones((3, 4)))
    np.testing.assert_array_equal(out.values[3:], np.zeros((3, 4)))


def test_empty_transcript_all_zero():
    provider = MockTextProvider(dim=7)
    out = extract_text_features(provider, [], n_frames=5)
    assert out.values.shape == (5, 7)
    assert np.all(out.values == 0.0)


def test_bpe_last_token_rule():
    provider = MockTextProvider(dim=12)
    assert split_subwords("thinking") == ["think", "ing"]
    thinking = provider.embed(["thinking"])[0]
    ing_alone = provider.embed(["ing"])[0]  # whole-word 'ing' is its own token
    np.testing.assert_array_equal(thinking, ing_alone)
    # two -ing words share the retained last-token embedding
    np.testing.assert_array_equal(provider.embed(["talking"])[0], thinking)


def test_alignment_idempotent():
    provider = MockTextProvider(dim=6)
    words = [TranscriptWord("boom", 0.1, 0.4), TranscriptWord("yes", 0.5, 0.8)]
    a = extract_text_features(provider, words, 30).values
    b = extract_text_features(provider, words, 30).values
    np.testing.assert_array_equal(a, b)


def test_rows_are_word_embedding_or_zero():
    provider = MockTextProvider(dim=6)
    words = [TranscriptWord("boom", 0.1, 0.4), TranscriptWord("yes", 0.5, 0.8)]
    out = extract_text_features(provider, words, 30).values
    vocab = provider.embed(["boom", "yes"])
    for row in out:
        is_zero = np.all(row == 0.0)
        matches = any(np.array_equal(row, v) for v in vocab)
        assert is_zero or matches


def test_laughter_token_consistent_nonzero():
    provider = MockTextProvider(dim=16)
    one = provider.embed(["###"])[0]
    two = provider.embed(["###"])[0]
    np.testing.assert_array_equal(one, two)
    assert np.linalg.norm(one) > 0.5


def test_word_past_clip_end_clipped_with_warning(caplog):
    provider = MockTextProvider(dim=4)
    words = [TranscriptWord("late", 0.05, 5.0)]
    with caplog.at_level(logging.WARNING):
        out = extract_text_features(provider, words, n_frames=3)
    assert "clipped" in caplog.text
    # frame 0's center (1/60 s) precedes the word; the covered frames are kept
    assert np.all(out.values[1:] != 0.0)

    with caplog.at_level(logging.WARNING):
        dropped = align_words_to_frames([TranscriptWord("gone", 9.0, 9.5)], provider.embed(["gone"]), n_frames=3)
    assert "dropped" in caplog.text
    assert np.all(dropped.values == 0.0)


def test_overlapping_words_rejected(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("0.0\t0.5\thello\n0.4\t0.9\tworld\n")
    with pytest.raises(ValueError, match="overlap"):
        read_transcript_tsv(path)


def test_transcript_tsv_round_trip(tmp_path):
    words = [TranscriptWord("a", 0.1, 0.3), TranscriptWord("###", 0.5, 0.9)]
    write_transcript_tsv(words, tmp_path / "t.tsv")
    assert read_transcript_tsv(tmp_path / "t.tsv") == words


# ---------------------------------------------------------------------------
# audio features
# ---------------------------------------------------------------------------

def test_silence_maps_to_zero_rows():
    provider = MockAudioProvider(dim=5)
    out = extract_audio_features(provider, silence(), n_frames=30)
    assert out.values.shape == (30, 5)
    assert np.all(out.values == 0.0)


def test_one_second_clip_gives_exactly_30_rows():
    rng = np.random.default_rng(0)
    wave = Waveform(samples=rng.normal(0, 0.2, 24000).astype(np.float32), sample_rate=24000)
    out = extract_audio_features(MockAudioProvider(dim=3), wave, n_frames=30)
    assert out.values.shape == (30, 3)
    assert np.any(out.values != 0.0)


def test_wide_provider_shape_contract():
    rng = np.random.default_rng(1)
    wave = Waveform(samples=rng.normal(0, 0.2, 8000).astype(np.float32), sample_rate=24000)
    out = extract_audio_features(MockAudioProvider(dim=768), wave, n_frames=10)
    assert out.values.shape == (10, 768)


def test_provider_row_count_mismatch_raises():
    class Broken:
        dim = 4

        def embed(self, wave, n_frames):
            return np.zeros((n_frames + 1, 4), dtype=np.float32)

    with pytest.raises(ProviderContractError):
        extract_audio_features(Broken(), silence(), n_frames=10)


def test_audio_provider_deterministic():
    rng = np.random.default_rng(2)
    wave = Waveform(samples=rng.normal(0, 0.3, 16000).astype(np.float32), sample_rate=16000)
    a = MockAudioProvider(dim=6).embed(wave, 20)
    b = MockAudioProvider(dim=6).embed(wave, 20)
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# speaker table
# ---------------------------------------------------------------------------

def test_known_speaker_rows_repeat():
    table = SpeakerTable(["alice", "bob"])
    out = speaker_rows(table, "alice", 4)
    assert out.values.shape == (4, 8)
    assert np.all(out.values == out.values[0])


def test_unknown_speaker_uses_reserved_row():
    table = SpeakerTable(["alice"])
    out = speaker_rows(table, "stranger", 3)
    unk = table.embedding.weight[0].detach().numpy()
    np.testing.assert_array_equal(out.values[0], unk)


def test_equal_ids_equal_rows():
    table = SpeakerTable(["a", "b"])
    np.testing.assert_array_equal(speaker_rows(table, "b", 5).values, speaker_rows(table, "b", 5).values)


def test_rows_read_through_live_table():
    table = SpeakerTable(["a"])
    before = speaker_rows(table, "a", 2).values.copy()
    with torch.no_grad():
        table.embedding.weight += 1.0
    after = speaker_rows(table, "a", 2).values
    np.testing.assert_allclose(after, before + 1.0, atol=1e-6)


def test_speaker_table_json_round_trip(tmp_path):
    table = SpeakerTable(["x", "y"])
    table.save(tmp_path / "spk.json")
    loaded = SpeakerTable.load(tmp_path / "spk.json")
    assert loaded.id_to_index == table.id_to_index
    np.testing.assert_allclose(loaded.embedding.weight.detach(), table.embedding.weight.detach(), atol=1e-7)


# ---------------------------------------------------------------------------
# archive + wav io
# ---------------------------------------------------------------------------

def test_archive_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    m = FeatureMatrix(values=rng.normal(size=(7, 5)).astype(np.float32), modality="audio")
    save_archive({"main_audio": m}, tmp_path / "arc")
    loaded = load_archive(tmp_path / "arc")
    assert np.array_equal(loaded["main_audio"].values, m.values)
    assert loaded["main_audio"].modality == "audio"


def test_empty_archive_valid(tmp_path):
    save_archive({}, tmp_path / "arc")
    assert load_archive(tmp_path / "arc") == {}


def test_truncated_blob_names_entry(tmp_path):
    m = FeatureMatrix(values=np.ones((4, 4), dtype=np.float32), modality="text")
    save_archive({"main_text": m}, tmp_path / "arc")
    blob = tmp_path / "arc" / "main_text.f32"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(ArchiveCorruptionError, match="main_text"):
        load_archive(tmp_path / "arc")


def test_mismatched_row_counts_rejected(tmp_path):
    a = FeatureMatrix(values=np.zeros((3, 2), dtype=np.float32), modality="audio")
    b = FeatureMatrix(values=np.zeros((4, 2), dtype=np.float32), modality="text")
    with pytest.raises(ValueError, match="frame count"):
        save_archive({"a": a, "b": b}, tmp_path / "arc")


@given(st.integers(0, 2**32 - 1))
def test_property_wav_round_trip_close(seed):
    import tempfile

    rng = np.random.default_rng(seed)
    wave = Waveform(samples=rng.uniform(-0.9, 0.9, 2000).astype(np.float32), sample_rate=16000)
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/x.wav"
        save_wav(wave, path)
        loaded = load_wav(path)
    assert loaded.sample_rate == 16000
    assert np.abs(loaded.samples - wave.samples).max() < 1e-3


def test_non_finite_features_rejected():
    with pytest.raises(ValueError, match="finite"):
        FeatureMatrix(values=np.array([[np.nan, 1.0]], dtype=np.float32), modality="audio")
