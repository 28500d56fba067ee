import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nuwave import tensor as T
from nuwave.dsp import (AudioSignal, CorpusSpec, SilentSignalError, downsample, extract_patch,
                        high_band_fraction, istft, linear_upsample, lowpass_filter, patch_length,
                        stft, synth_corpus, trim_silence)

EDGE = 1024


def interior(x, edge=EDGE):
    return x[edge:-edge]


def tone(freq, sr, n, amp=1.0, phase=0.3):
    return AudioSignal(amp * np.sin(2 * np.pi * freq * np.arange(n) / sr + phase), sr)


def snr_db(est, ref):
    return 10 * np.log10(np.sum(ref ** 2) / np.sum((est - ref) ** 2))


# ---------------------------------------------------------------- stft

def test_stft_round_trip_white_noise():
    y = AudioSignal(np.random.default_rng(0).normal(size=16000), 16000)
    back = istft(stft(y, 1024, 256))
    assert len(back) == len(y) and back.sample_rate == 16000
    assert np.abs(interior(back.samples - y.samples)).max() < 1e-6


def test_stft_shape():
    frames = stft(AudioSignal(np.ones(5000), 8000), 1024, 256)
    assert frames.bins == 513
    assert frames.coeffs.shape[0] == 1 + 5000 // 256


def test_stft_bin_concentration():
    sr, win = 8192, 1024
    k0 = 100                       # exact bin: 800 Hz
    y = tone(k0 * sr / win, sr, 8192)
    mag2 = np.abs(stft(y, win, 256).coeffs) ** 2
    full = mag2[4:-4]              # frames that lie entirely inside the signal
    peak = full[:, k0]
    far = np.abs(np.arange(mag2.shape[1]) - k0) >= 3
    assert (full[:, far].max(axis=1) < 0.01 * peak).all()


def test_stft_zero_signal():
    assert not stft(AudioSignal(np.zeros(3000), 1000)).coeffs.any()


@pytest.mark.parametrize("window,hop", [(1000, 250), (1024, 2048), (1024, 300)])
def test_stft_bad_arguments(window, hop):
    with pytest.raises(ValueError):
        stft(AudioSignal(np.ones(4096), 1000), window, hop)


def test_stft_round_trip_error_is_numerical_noise_everywhere():
    y = AudioSignal(np.random.default_rng(1).normal(size=7777), 8000)
    back = istft(stft(y))
    assert np.abs(back.samples - y.samples).max() < 1e-9


# ---------------------------------------------------------------- low-pass

def test_lowpass_keeps_dc():
    y = AudioSignal(np.full(8192, 0.37), 48000)
    out = lowpass_filter(y, 12000)
    assert np.abs(interior(out.samples) - 0.37).max() < 1e-6


def test_lowpass_passband_sinusoid():
    y = tone(5000, 48000, 48000)
    out = lowpass_filter(y, 12000)
    assert snr_db(interior(out.samples), interior(y.samples)) > 40


def test_lowpass_stopband_sinusoid():
    y = tone(20000, 48000, 48000)
    out = lowpass_filter(y, 12000)
    assert np.sum(interior(out.samples) ** 2) < 1e-4 * np.sum(interior(y.samples) ** 2)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**16))
def test_lowpass_is_idempotent(seed):
    # partials kept >= 64 bins from the cutoff; a second pass's edge effects reach one
    # window further in, hence the two-window margin
    r = np.random.default_rng(seed)
    sr, n, cutoff = 16000, 20000, 3000
    t = np.arange(n) / sr
    freqs = np.concatenate([r.uniform(50, cutoff - 1000, 10), r.uniform(cutoff + 1500, 7900, 10)])
    x = sum(np.sin(2 * np.pi * f * t + r.uniform(0, 2 * np.pi)) for f in freqs)
    once = lowpass_filter(AudioSignal(x, sr), cutoff)
    twice = lowpass_filter(once, cutoff)
    assert np.abs(interior(twice.samples - once.samples, 2 * EDGE)).max() < 1e-6


@pytest.mark.parametrize("cutoff", [0, -5, 24000, 30000])
def test_lowpass_cutoff_range(cutoff):
    with pytest.raises(ValueError):
        lowpass_filter(AudioSignal(np.ones(2048), 48000), cutoff)


# ---------------------------------------------------------------- downsample

def test_downsample_lengths_and_rate():
    y = AudioSignal(np.random.default_rng(0).normal(size=32768), 48000)
    d = downsample(y, 2)
    assert len(d) == 16384 and d.sample_rate == 24000


def test_downsample_passband_matches_ideal_resampling():
    n = 48000
    d = downsample(tone(5000, 48000, n), 2)
    ideal = tone(5000, 24000, n // 2).samples
    assert snr_db(interior(d.samples, 512), interior(ideal, 512)) > 35


def test_downsample_removes_alias():
    y = tone(20000, 48000, 48000)
    d = downsample(y, 2)
    # without filtering this would alias to 4 kHz at full amplitude
    assert np.sum(interior(d.samples, 512) ** 2) < 1e-3 * np.sum(interior(y.samples[::2], 512) ** 2)


def test_downsample_requires_divisible_length():
    with pytest.raises(ValueError):
        downsample(AudioSignal(np.ones(1001), 48000), 2)


def test_down_then_linear_up_preserves_low_band():
    y = tone(500, 48000, 48000)
    back = linear_upsample(downsample(y, 2), 2)
    assert back.sample_rate == 48000 and len(back) == len(y)
    assert snr_db(interior(back.samples), interior(y.samples)) > 30


# ---------------------------------------------------------------- trimming

def test_trim_noop_without_quiet_edges():
    y = tone(300, 8000, 8000)
    out = trim_silence(y)
    np.testing.assert_array_equal(out.samples, y.samples)


def test_trim_removes_quiet_edges():
    sr = 8000
    lead, body, tail = 3000, 8000, 2500
    x = np.concatenate([0.01 * np.sin(np.arange(lead) * 0.5),
                        np.sin(np.arange(body) * 0.3 + 0.2),
                        0.01 * np.sin(np.arange(tail) * 0.7)])
    out = trim_silence(AudioSignal(x, sr))
    start = next(i for i in range(len(x)) if np.array_equal(x[i:i + len(out)], out.samples))
    assert lead - 256 < start <= lead
    end = start + len(out)
    assert lead + body <= end < lead + body + 256
    assert np.abs(out.samples[:start + 1]).max() > 0.5 or start == lead


def test_trim_silent_signal_raises():
    with pytest.raises(SilentSignalError):
        trim_silence(AudioSignal(np.zeros(5000), 8000))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 4000), st.integers(1000, 6000), st.integers(0, 4000))
def test_trim_never_cuts_loud_samples(lead, body, tail):
    x = np.concatenate([np.full(lead, 0.001), np.ones(body) * 0.8, np.full(tail, -0.001)])
    out = trim_silence(AudioSignal(x, 8000))
    assert np.sum(np.abs(out.samples) > 0.5) == body


# ---------------------------------------------------------------- patches

def test_patch_lengths():
    assert patch_length(2) == 32768
    assert patch_length(3) == 32766


@pytest.mark.parametrize("r", [2, 3])
def test_extract_patch_is_contiguous_slice(r):
    y = AudioSignal(np.arange(40000, dtype=float), 48000)
    p = extract_patch(y, r, T.Rng(8))
    start = T.Rng(8).integers(0, 40000 - patch_length(r) + 1)
    assert len(p) == patch_length(r) and len(p) % r == 0
    np.testing.assert_array_equal(p.samples, y.samples[start:start + len(p)])


def test_extract_patch_too_short():
    with pytest.raises(ValueError):
        extract_patch(AudioSignal(np.ones(100), 48000), 2, T.Rng(0))


# ---------------------------------------------------------------- linear upsampling

def test_linear_upsample_constant():
    out = linear_upsample(AudioSignal(np.full(7, 0.25), 100), 3)
    assert len(out) == 21 and out.sample_rate == 300
    np.testing.assert_array_equal(out.samples, 0.25)


def test_linear_upsample_ramp():
    out = linear_upsample(AudioSignal(np.array([0.0, 1.0, 2.0]), 10), 2)
    np.testing.assert_array_equal(out.samples, [0, 0.5, 1, 1.5, 2, 2])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=50), st.integers(2, 4))
def test_linear_upsample_keeps_knots(values, r):
    out = linear_upsample(AudioSignal(np.array(values), 10), r)
    np.testing.assert_array_equal(out.samples[::r], values)


# ---------------------------------------------------------------- synthetic corpus

def test_synth_corpus_deterministic():
    spec = CorpusSpec(n_utterances=3)
    a = synth_corpus(spec, T.Rng(7))
    b = synth_corpus(spec, T.Rng(7))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.samples, y.samples)


def test_synth_corpus_contract():
    spec = CorpusSpec(n_utterances=10)
    for y in synth_corpus(spec, T.Rng(1)):
        assert y.sample_rate == 4000 and len(y) == 8000
        assert np.abs(y.samples).max() <= 0.95 + 1e-12
        assert high_band_fraction(y.samples, 4000, 1000) > 0.05


def test_synth_corpus_rejects_bad_spec():
    with pytest.raises(ValueError):
        synth_corpus(CorpusSpec(band=(0, 5000)), T.Rng(0))


def test_audio_signal_validation():
    with pytest.raises(ValueError):
        AudioSignal(np.array([0.0, np.inf]), 100)
    with pytest.raises(ValueError):
        AudioSignal(np.zeros(3), 0)
