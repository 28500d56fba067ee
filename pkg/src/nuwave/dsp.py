"""Signal pipeline: STFT/iSTFT, zero-fill low-pass, subsampling, trimming, patching."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import interp_indices

FILTER_WINDOW = 1024
FILTER_HOP = 256
PATCH_BASE = 32768


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.float64).reshape(-1)
        if not np.isfinite(arr).all():
            raise ValueError("audio samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def _require_nonempty(y):
    if len(y) == 0:
        raise ValueError("empty signal")


def hann(n):
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftFrameSet:
    coeffs: np.ndarray   # [frames, window // 2 + 1], complex
    window: int
    hop: int
    length: int
    sample_rate: int
    window_type: str = "hann"

    @property
    def bins(self):
        return self.coeffs.shape[1]

    def bin_frequencies(self):
        return np.arange(self.bins) * self.sample_rate / self.window


def _check_stft_args(window, hop):
    if window <= 0 or window & (window - 1):
        raise ValueError(f"window size must be a power of two, got {window}")
    if hop <= 0 or hop > window:
        raise ValueError(f"hop must lie in 1..window, got {hop}")
    if window % hop:
        raise ValueError(f"hop {hop} must divide window {window}")


def _frame_signal(x, window, hop):
    # reflect-pad half a window so every sample sits under full overlap
    half = window // 2
    mode = "reflect" if x.size > half else "constant"
    padded = np.pad(x, half, mode=mode)
    n_frames = 1 + (padded.size - window) // hop
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft(y, window=FILTER_WINDOW, hop=FILTER_HOP):
    _check_stft_args(window, hop)
    _require_nonempty(y)
    frames = _frame_signal(y.samples, window, hop) * hann(window)
    return StftFrameSet(np.fft.rfft(frames, axis=1), window, hop, len(y), y.sample_rate)


def istft(frames):
    """Weighted overlap-add inverse, normalized by the summed squared window."""
    window, hop = frames.window, frames.hop
    w = hann(window)
    chunks = np.fft.irfft(frames.coeffs, n=window, axis=1) * w
    n_frames = chunks.shape[0]
    total = window + hop * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    w2 = w * w
    for i in range(n_frames):
        s = i * hop
        out[s:s + window] += chunks[i]
        norm[s:s + window] += w2
    half = window // 2
    out = out[half:half + frames.length]
    norm = norm[half:half + frames.length]
    out = np.divide(out, norm, out=np.zeros_like(out), where=norm > 1e-10)
    return AudioSignal(out, frames.sample_rate)


def lowpass_filter(y, cutoff_hz, window=FILTER_WINDOW, hop=FILTER_HOP):
    """Zero every STFT bin whose centre frequency is >= ``cutoff_hz``."""
    if not 0 < cutoff_hz < y.sample_rate / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {y.sample_rate / 2})")
    spec = stft(y, window, hop)
    keep = spec.bin_frequencies() < cutoff_hz
    coeffs = spec.coeffs * keep[None, :]
    return istft(StftFrameSet(coeffs, window, hop, spec.length, spec.sample_rate))


def downsample(y, r):
    """Low-pass at the target Nyquist, then keep samples 0, r, 2r, ..."""
    _require_nonempty(y)
    if r < 1 or len(y) % r:
        raise ValueError(f"signal length {len(y)} is not divisible by r={r}")
    if y.sample_rate % r:
        raise ValueError(f"sample rate {y.sample_rate} is not divisible by r={r}")
    filtered = lowpass_filter(y, y.sample_rate / (2 * r))
    return AudioSignal(filtered.samples[::r], y.sample_rate // r)


def linear_upsample(y_d, r):
    """Linear interpolation to r× length; samples past the end replicate the last one."""
    _require_nonempty(y_d)
    lo, hi, frac = interp_indices(len(y_d), r)
    x = y_d.samples
    return AudioSignal(x[lo] * (1.0 - frac) + x[hi] * frac, y_d.sample_rate * r)


class SilentSignalError(ValueError):
    pass


def trim_silence(y, threshold_db=15.0, window=FILTER_WINDOW, hop=FILTER_HOP):
    """Drop leading/trailing regions more than ``threshold_db`` below the peak.

    Loudness is the peak amplitude of each ``window``-sample frame (hop ``hop``);
    the cut is then refined to hop-sized blocks inside the first/last loud frame.
    """
    _require_nonempty(y)
    x = y.samples
    amp = np.abs(x)
    peak = amp.max()
    if peak == 0.0:
        raise SilentSignalError("signal is entirely silent")
    thresh = peak * 10.0 ** (-threshold_db / 20.0)
    starts = np.arange(0, max(x.size - window, 0) + 1, hop)
    if starts[-1] + window < x.size:
        starts = np.append(starts, starts[-1] + hop)
    loud = np.array([amp[s:s + window].max() >= thresh for s in starts])
    first, last = starts[loud.argmax()], starts[len(loud) - 1 - loud[::-1].argmax()]
    begin = first
    while begin + hop <= x.size and amp[begin:begin + hop].max() < thresh:
        begin += hop
    end = min(last + window, x.size)
    while end - hop >= begin and amp[end - hop:end].max() < thresh:
        end -= hop
    return AudioSignal(x[begin:end], y.sample_rate)


def patch_length(r, base=PATCH_BASE):
    return base - base % r


def extract_patch(y, r, rng, base=PATCH_BASE):
    """Random contiguous slice of ``base - base mod r`` samples."""
    n = patch_length(r, base)
    if len(y) < n:
        raise ValueError(f"signal of {len(y)} samples is shorter than the {n}-sample patch")
    start = rng.integers(0, len(y) - n + 1)
    return AudioSignal(y.samples[start:start + n], y.sample_rate)


@dataclass
class CorpusSpec:
    """Synthetic stand-in corpus: harmonic tones plus filtered noise."""

    sample_rate: int = 4000
    duration: float = 2.0
    n_utterances: int = 8
    components: tuple = (2, 5)      # extra inharmonic partials per signal
    f0_range: tuple = (80.0, 300.0)
    band: tuple = (40.0, 1950.0)    # partials are kept inside this band
    noise_gain: float = 0.05
    min_high_fraction: float = 0.05
    edge_silence: float = 0.1       # seconds of low-level lead-in / tail

    def validate(self):
        nyq = self.sample_rate / 2
        lo, hi = self.band
        if self.sample_rate <= 0 or self.duration <= 0 or self.n_utterances < 0:
            raise ValueError("sample_rate and duration must be positive, n_utterances >= 0")
        if not 0 <= lo < hi <= nyq:
            raise ValueError(f"band {self.band} must lie inside [0, {nyq}]")
        if not 0 < self.f0_range[0] <= self.f0_range[1] < hi:
            raise ValueError(f"invalid f0 range {self.f0_range}")
        if self.components[0] < 0 or self.components[0] > self.components[1]:
            raise ValueError(f"invalid component range {self.components}")
        if not 0 <= 2 * self.edge_silence < self.duration:
            raise ValueError("edge silence must leave room for the signal")
        return self


def high_band_fraction(x, sample_rate, cutoff_hz):
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, 1.0 / sample_rate)
    return float(power[freqs >= cutoff_hz].sum() / power.sum())


def _one_signal(spec, rng):
    sr = spec.sample_rate
    n = int(round(spec.duration * sr))
    t = np.arange(n) / sr
    lo, hi = spec.band
    f0 = rng.uniform(*spec.f0_range)
    tilt = rng.uniform(0.3, 0.8)
    harmonics = np.arange(1, int(hi // f0) + 1)
    harmonics = harmonics[harmonics * f0 >= lo]
    x = np.zeros(n)
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(2.0, 6.0) * t)
    phase_track = 2 * np.pi * f0 * np.cumsum(vibrato) / sr
    for k in harmonics:
        x += k ** -tilt * np.sin(k * phase_track + rng.uniform(0, 2 * np.pi))
    n_extra = rng.integers(spec.components[0], spec.components[1] + 1)
    for _ in range(n_extra):
        f = rng.uniform(lo, hi)
        x += rng.uniform(0.1, 0.5) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    # noise with a random first-order spectral tilt
    white = rng.normal(n)
    a = rng.uniform(-0.6, 0.6)
    noise = white.copy()
    noise[1:] += a * white[:-1]
    x += spec.noise_gain * np.sqrt(np.mean(x ** 2)) * noise
    # syllable-like amplitude envelope
    env = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi))
    x *= env
    edge = int(spec.edge_silence * sr)
    if edge:
        x[:edge] *= 0.01
        x[n - edge:] *= 0.01
    return x


def synth_corpus(spec, rng):
    """Deterministic list of synthetic signals with peak amplitude 0.95."""
    spec.validate()
    out = []
    cutoff = spec.sample_rate / 4
    while len(out) < spec.n_utterances:
        x = _one_signal(spec, rng)
        if high_band_fraction(x, spec.sample_rate, cutoff) <= spec.min_high_fraction:
            continue
        x *= 0.95 / np.abs(x).max()
        out.append(AudioSignal(x, spec.sample_rate))
    return out
