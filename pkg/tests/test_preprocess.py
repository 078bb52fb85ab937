import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divrec.audio_io import AudioClip
from divrec.errors import ClipTooShort
from divrec.preprocess import (
    NoiseReductionConfig,
    SegmentationPolicy,
    reduce_noise,
    segment,
)

from conftest import sine_clip

SR = 16000


def _clip(seconds: float) -> AudioClip:
    rng = np.random.default_rng(7)
    return AudioClip(rng.uniform(-0.5, 0.5, int(seconds * SR)), SR, "clip")


def test_25s_yields_two_chunks_tail_discarded():
    chunks = segment(_clip(25.0))
    assert len(chunks) == 2
    assert all(c.num_samples == 10 * SR for c in chunks)


def test_18s_yields_10s_plus_8s():
    chunks = segment(_clip(18.0))
    assert [c.num_samples for c in chunks] == [10 * SR, 8 * SR]


def test_7s_yields_nothing():
    assert segment(_clip(7.0)) == []


def test_segment_ids_are_suffixed():
    chunks = segment(_clip(20.0))
    assert [c.source_id for c in chunks] == ["clip_seg000", "clip_seg001"]


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=35 * SR))
def test_segments_are_prefix_partition(n_samples):
    clip = AudioClip(np.arange(n_samples, dtype=np.float64) / (40 * SR), SR, "p")
    chunks = segment(clip)
    lengths = [c.num_samples for c in chunks]
    assert all(8 * SR <= n <= 10 * SR for n in lengths)
    covered = sum(lengths)
    assert covered <= n_samples
    assert n_samples - covered < 10 * SR  # shortfall is a sub-chunk tail
    if chunks:
        rebuilt = np.concatenate([c.samples for c in chunks])
        np.testing.assert_array_equal(rebuilt, clip.samples[:covered])
    # any discarded tail is below the keep threshold
    if n_samples % (10 * SR) and covered < n_samples:
        assert n_samples - covered < 8 * SR


def test_policy_validation():
    with pytest.raises(ValueError):
        SegmentationPolicy(chunk_seconds=5.0, min_tail_seconds=8.0)


def test_noise_reduction_zero_in_zero_out():
    out = reduce_noise(AudioClip(np.zeros(4 * SR), SR, "z"))
    assert out.num_samples == 4 * SR
    np.testing.assert_array_equal(out.samples, 0.0)


def test_noise_reduction_preserves_length():
    for seconds in (0.05, 1.0, 2.37):
        clip = _clip(seconds)
        assert reduce_noise(clip).num_samples == clip.num_samples


def test_noise_reduction_deterministic():
    clip = _clip(1.5)
    a = reduce_noise(clip)
    b = reduce_noise(clip)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_noise_reduction_rejects_short_clip():
    with pytest.raises(ClipTooShort):
        reduce_noise(AudioClip(np.zeros(511), SR, "s"))


def test_snr_improves_on_gated_sine_plus_noise():
    # known decomposition: a gated 440 Hz sine (silent leader gives the noise
    # profiler genuinely signal-free frames, as pauses do in speech) + white noise
    rng = np.random.default_rng(17)
    n = 4 * SR
    t = np.arange(n) / SR
    gate = np.ones(n)
    gate[: int(0.5 * SR)] = 0.0
    gate[2 * SR : 2 * SR + int(0.4 * SR)] = 0.0
    clean = 0.5 * np.sin(2 * np.pi * 440 * t) * gate
    noise = rng.normal(0.0, 0.05, n)

    noisy = AudioClip(np.clip(clean + noise, -1, 1), SR, "n")
    out = reduce_noise(noisy)

    def snr(signal):
        residual = signal - clean
        return 10 * np.log10(np.sum(clean**2) / np.sum(residual**2))

    assert snr(out.samples) > snr(noisy.samples)


def test_pure_sine_deviation_bounded_by_spectral_floor():
    config = NoiseReductionConfig()
    amplitude = 0.5
    clip = sine_clip(freq=440.0, amplitude=amplitude, seconds=2.0)
    out = reduce_noise(clip, config)
    # per-bin magnitudes end between beta*|X| and |X|, so the output cannot
    # stray from the input by more than the fully-attenuated amplitude
    bound = (1.0 - config.spectral_floor) * amplitude
    assert np.max(np.abs(out.samples - clip.samples)) <= bound * 1.05


def test_output_clamped_to_unit_range():
    rng = np.random.default_rng(3)
    clip = AudioClip(np.clip(rng.normal(0, 0.5, SR), -1, 1), SR, "c")
    out = reduce_noise(clip)
    assert np.max(np.abs(out.samples)) <= 1.0
