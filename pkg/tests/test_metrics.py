import numpy as np
import pytest
from hypothesis import given, strategies as st

from gestureforge.bvh import parse_bvh
from gestureforge.features import Waveform
from gestureforge.metrics import (
    BeatSequence,
    GaussianStats,
    PoseAutoencoder,
    audio_beats,
    beat_align,
    compute_fdk,
    compute_fgd,
    extract_beats,
    fit_autoencoder,
    frechet_gaussian,
    joint_speeds,
    motion_beats,
    pose_windows,
)
from gestureforge.pose import MotionSequence, encode_pose, fit_standardizer, standardize
from conftest import chain_document


def gaussian_1d(mu, sigma):
    return GaussianStats(mean=np.array([mu]), cov=np.array([[sigma ** 2]]), count=100)


def random_stats(seed, dim=4):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim))
    return GaussianStats(mean=rng.normal(size=dim), cov=a @ a.T + 0.1 * np.eye(dim), count=50)


# ---------------------------------------------------------------------------
# Fréchet distance between Gaussians
# ---------------------------------------------------------------------------

def test_identical_gaussians_zero():
    p = random_stats(0)
    assert frechet_gaussian(p, p) < 1e-8


def test_1d_mean_shift():
    assert frechet_gaussian(gaussian_1d(0, 1), gaussian_1d(1, 1)) == pytest.approx(1.0, abs=1e-6)


def test_1d_scale_shift():
    assert frechet_gaussian(gaussian_1d(0, 1), gaussian_1d(0, 3)) == pytest.approx(4.0, abs=1e-6)


@given(st.integers(0, 2**32 - 1))
def test_property_symmetric_nonnegative(seed):
    p, q = random_stats(seed), random_stats(seed + 1)
    d_pq, d_qp = frechet_gaussian(p, q), frechet_gaussian(q, p)
    assert d_pq >= 0.0
    assert abs(d_pq - d_qp) < 1e-6 * max(1.0, d_pq)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError, match="dimension"):
        frechet_gaussian(random_stats(1, dim=3), random_stats(2, dim=4))


def test_non_finite_covariance_rejected():
    with pytest.raises(ValueError, match="finite"):
        GaussianStats(mean=np.zeros(2), cov=np.array([[np.inf, 0], [0, 1.0]]), count=10)


def test_count_invariant():
    with pytest.raises(ValueError, match="2 samples"):
        GaussianStats(mean=np.zeros(2), cov=np.eye(2), count=1)


def test_fit_matches_numpy_moments():
    rng = np.random.default_rng(5)
    data = rng.normal(size=(200, 3))
    stats = GaussianStats.fit(data)
    np.testing.assert_allclose(stats.mean, data.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(stats.cov, np.cov(data, rowvar=False), atol=1e-12)


# ---------------------------------------------------------------------------
# motion fixtures
# ---------------------------------------------------------------------------

def swaying_sequences(seed, count=3, n=120, amplitude=20.0):
    """Standardizable sequences with per-clip phase/rate variation."""
    from gestureforge.bvh import RawMotion

    rng = np.random.default_rng(seed)
    skeleton = parse_bvh(chain_document()).skeleton
    seqs = []
    for _ in range(count):
        t = np.arange(n) / 30.0
        frames = np.zeros((n, skeleton.channel_count))
        phase, rate = rng.uniform(0, 2 * np.pi), rng.uniform(0.5, 1.5)
        frames[:, 3] = amplitude * np.sin(2 * np.pi * rate * t + phase)  # root Z
        frames[:, 6] = amplitude * np.cos(2 * np.pi * rate * t + phase)  # spine Z
        seqs.append(encode_pose(RawMotion(skeleton=skeleton, frame_time=1 / 30, frames=frames)))
    return seqs


def test_joint_speeds_shape_and_static_zero():
    seqs = swaying_sequences(0, count=1)
    speeds = joint_speeds(seqs[0])
    assert speeds.shape == (119, 3)
    static = MotionSequence(poses=np.tile(seqs[0].poses[:1], (10, 1)), skeleton=seqs[0].skeleton)
    assert np.all(joint_speeds(static) == 0.0)


# ---------------------------------------------------------------------------
# FGD
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def fgd_setup():
    ref = swaying_sequences(1, count=4)
    std = fit_standardizer(ref)
    ref_std = [standardize(s, std) for s in ref]
    ae = fit_autoencoder(ref_std, seed=0, epochs=10)
    return ref_std, ae


def test_fgd_identical_sets_zero(fgd_setup):
    ref_std, ae = fgd_setup
    assert compute_fgd(ref_std, ref_std, ae) < 1e-6


def test_fgd_monotone_in_noise(fgd_setup):
    ref_std, ae = fgd_setup
    rng = np.random.default_rng(2)
    scores = []
    for sigma in (0.01, 0.05, 0.1):
        noisy = [
            MotionSequence(poses=s.poses + rng.normal(0, sigma, s.poses.shape), skeleton=s.skeleton, standardized=True)
            for s in ref_std
        ]
        scores.append(compute_fgd(noisy, ref_std, ae))
    assert scores[0] < scores[1] < scores[2]


def test_fgd_requires_standardized(fgd_setup):
    ref_std, ae = fgd_setup
    raw = swaying_sequences(1, count=2)
    with pytest.raises(ValueError, match="standardized"):
        compute_fgd(raw, ref_std, ae)


def test_autoencoder_deterministic_encode(fgd_setup):
    ref_std, ae = fgd_setup
    windows = pose_windows(ref_std[:1])
    np.testing.assert_array_equal(ae.encode(windows), ae.encode(windows))
    assert ae.manifest["fitted"] is True
    assert len(ae.manifest_hash()) == 16


def test_autoencoder_encode_requires_fit():
    ae = PoseAutoencoder(input_dim=30, seed=0)
    with pytest.raises(RuntimeError, match="fitted"):
        ae.encode(np.zeros((2, 30), dtype=np.float32))


def test_pose_windows_too_short():
    seqs = swaying_sequences(3, count=1, n=10)
    with pytest.raises(ValueError, match="windows"):
        pose_windows(seqs, window=30)


# ---------------------------------------------------------------------------
# FD_k
# ---------------------------------------------------------------------------

def test_fdk_identical_sets_zero():
    seqs = swaying_sequences(4, count=3)
    assert compute_fdk(seqs, seqs) < 1e-9


def test_fdk_static_sets_zero_despite_pose_difference():
    base = swaying_sequences(5, count=1)[0]
    static_a = MotionSequence(poses=np.tile(base.poses[:1], (40, 1)), skeleton=base.skeleton)
    static_b = MotionSequence(poses=np.tile(base.poses[-1:], (40, 1)), skeleton=base.skeleton)
    assert compute_fdk([static_a], [static_b]) < 1e-12


def test_fdk_detects_time_scaling():
    seqs = swaying_sequences(6, count=3)
    fast = [MotionSequence(poses=s.poses[::2], skeleton=s.skeleton) for s in seqs]
    assert compute_fdk(fast, seqs) > 0.1


def test_fdk_monotone_in_noise():
    ref = swaying_sequences(7, count=3)
    std = fit_standardizer(ref)
    rng = np.random.default_rng(8)
    scores = []
    for sigma in (0.01, 0.05, 0.1):
        noisy = []
        for s in ref:
            std_seq = standardize(s, std)
            jittered = MotionSequence(poses=std_seq.poses + rng.normal(0, sigma, s.poses.shape), skeleton=s.skeleton, standardized=True)
            noisy.append(standardize(jittered, std, direction="inverse"))
        scores.append(compute_fdk(noisy, ref))
    assert scores[0] < scores[1] < scores[2]


# ---------------------------------------------------------------------------
# beats
# ---------------------------------------------------------------------------

def metronome(burst_times, duration=3.0, sr=24000, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(int(duration * sr)) / sr
    env = np.full(len(t), 0.01)
    for b in burst_times:
        env[(t >= b) & (t < b + 0.15)] = 0.8
    return Waveform(samples=(rng.standard_normal(len(t)) * env).astype(np.float32), sample_rate=sr)


def test_metronome_onsets_within_one_frame():
    beats = audio_beats(metronome([1.0, 2.0]))
    assert len(beats) == 2
    assert abs(beats.times[0] - 1.0) <= 1 / 30 + 1e-9
    assert abs(beats.times[1] - 2.0) <= 1 / 30 + 1e-9


def test_constant_velocity_motion_has_no_beats():
    skeleton = parse_bvh(chain_document()).skeleton
    n = 60
    poses = np.tile(np.concatenate([[0, 0, 0], np.tile([1, 0, 0, 0, 1, 0], 3)]), (n, 1)).astype(float)
    poses[:, 0] = np.linspace(0, 10, n)  # constant-velocity root drift
    seq = MotionSequence(poses=poses, skeleton=skeleton)
    assert len(motion_beats(seq)) == 0


def test_oscillating_wrist_one_beat_per_reversal():
    from gestureforge.dataset import default_skeleton
    from gestureforge.bvh import RawMotion
    from gestureforge.pose import encode_pose as enc

    skeleton = default_skeleton()
    n = 150  # 5 s
    t = np.arange(n) / 30.0
    frames = np.zeros((n, skeleton.channel_count))
    col = 6 + 3 * 2  # RightArm is the 9th rotated joint? locate by name instead
    col = 0
    cols = {}
    for joint in skeleton.joints:
        for label in joint.channels:
            cols[(joint.name, label)] = col
            col += 1
    frames[:, cols[("RightArm", "Zrotation")]] = 45.0 * np.sin(np.pi * t)  # reversal each second
    seq = enc(RawMotion(skeleton=skeleton, frame_time=1 / 30, frames=frames))
    beats = motion_beats(seq)
    reversals = [0.5, 1.5, 2.5, 3.5, 4.5]
    assert len(beats) == len(reversals)
    assert np.abs(beats.times - np.array(reversals)).max() < 0.1


def test_extract_beats_dispatch_and_errors():
    wave = metronome([1.0])
    assert extract_beats(wave, "audio").source == "audio"
    with pytest.raises(TypeError):
        extract_beats(wave, "motion")
    with pytest.raises(ValueError, match="unknown beat kind"):
        extract_beats(wave, "tempo")


def test_too_short_signals_give_empty_beats():
    assert len(audio_beats(Waveform(samples=np.zeros(10), sample_rate=24000))) == 0


# ---------------------------------------------------------------------------
# beat alignment
# ---------------------------------------------------------------------------

def beats(times, source="motion"):
    return BeatSequence(times=np.asarray(times, dtype=float), source=source)


def test_identical_beat_lists_score_one():
    b = beats([0.5, 1.5, 2.5])
    assert beat_align(b, beats([0.5, 1.5, 2.5], "audio")) == 1.0


def test_offset_by_sigma_scores_exp_half():
    sigma = 0.1
    motion = beats(np.array([1.0, 2.0, 3.0]) + sigma)
    audio = beats([1.0, 2.0, 3.0], "audio")
    assert beat_align(motion, audio, sigma=sigma) == pytest.approx(np.exp(-0.5), abs=1e-6)


def test_monotone_decrease_with_offset():
    sigma = 0.1
    audio = beats([1.0, 2.0, 3.0], "audio")
    scores = [beat_align(beats(audio.times + k * sigma), audio, sigma=sigma) for k in range(4)]
    assert all(a > b for a, b in zip(scores, scores[1:]))


def test_common_time_shift_invariance():
    sigma = 0.1
    motion = beats([0.95, 2.1, 2.9])
    audio = beats([1.0, 2.0, 3.0], "audio")
    base = beat_align(motion, audio, sigma=sigma)
    shifted = beat_align(beats(motion.times + 10.0), beats(audio.times + 10.0, "audio"), sigma=sigma)
    assert shifted == pytest.approx(base, abs=1e-12)


def test_empty_audio_scores_zero_and_empty_motion_errors():
    assert beat_align(beats([1.0]), beats([], "audio")) == 0.0
    with pytest.raises(ValueError, match="undefined"):
        beat_align(beats([]), beats([1.0], "audio"))


def test_beat_sequence_must_increase():
    with pytest.raises(ValueError, match="increasing"):
        BeatSequence(times=np.array([1.0, 1.0]), source="audio")
