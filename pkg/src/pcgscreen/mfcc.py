"""Per-frame MFCCs and their per-beat aggregation into 52 features.

Frames are 24 ms long with an 18 ms overlap, Hamming windowed and
zero-padded to a 64-point DFT.  Twenty triangular mel filters span
0-400 Hz; band powers are taken in dB and passed through an unscaled
DCT-II, keeping the first 13 coefficients.  A beat's feature vector
concatenates the mean coefficients of the frames centred in its S1,
systole, S2 and diastole intervals.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

log = logging.getLogger(__name__)

N_COEFFS = 13
N_SEGMENTS = 4
N_FEATURES = N_COEFFS * N_SEGMENTS
POWER_FLOOR = 1e-12
SEGMENT_PREFIXES = ("s1", "sys", "s2", "dia")


@dataclass(frozen=True)
class FrameSpec:
    frame_ms: float = 24.0
    overlap_ms: float = 18.0
    dft_size: int = 64

    @property
    def hop_ms(self):
        return self.frame_ms - self.overlap_ms

    def frame_length(self, fs):
        return int(round(self.frame_ms * fs / 1000))

    def hop_length(self, fs):
        return int(round(self.hop_ms * fs / 1000))


@dataclass
class MelFilterBank:
    bin_edges: np.ndarray
    weights: np.ndarray  # shape (M, N/2 + 1)
    f_min: float
    f_max: float
    degenerate: list = field(default_factory=list)

    @property
    def filter_count(self):
        return self.weights.shape[0]


@dataclass
class FrameMfccs:
    """MFCCs of every frame of a signal; ``centers`` are sample indices."""

    coefficients: np.ndarray  # shape (n_frames, 13)
    centers: np.ndarray


@dataclass
class BeatFeatures:
    values: np.ndarray
    beat_index: int
    fallback_segments: tuple = ()


def hz_to_mel(f):
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    m = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(m) if m.ndim == 0 else m


def mel_to_hz(m):
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("mel value must be non-negative")
    f = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(f) if f.ndim == 0 else f


def frequency_to_bin(f, n_fft, fs):
    return math.ceil(f * n_fft / fs)


def build_filterbank(f_min=0.0, f_max=400.0, n_filters=20, n_fft=64, fs=1000.0):
    if f_max > fs / 2:
        raise ConfigurationError(f"f_max {f_max} Hz exceeds Nyquist {fs / 2} Hz")
    if n_filters < 1:
        raise ConfigurationError("need at least one filter")
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise ConfigurationError(f"DFT size must be a power of two, got {n_fft}")
    if not 0 <= f_min < f_max:
        raise ConfigurationError("need 0 <= f_min < f_max")

    mels = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2)
    hz = mel_to_hz(mels)
    edges = np.array([frequency_to_bin(f, n_fft, fs) for f in hz], dtype=int)

    n_bins = n_fft // 2 + 1
    weights = np.zeros((n_filters, n_bins))
    degenerate = []
    k = np.arange(n_bins)
    for m in range(n_filters):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        if lo == mid or mid == hi:
            degenerate.append(m)
        if lo == hi:
            weights[m, mid] = 1.0
            continue
        if mid > lo:
            rising = (k >= lo) & (k < mid)
            weights[m, rising] = (k[rising] - lo) / (mid - lo)
        if hi > mid:
            falling = (k >= mid) & (k <= hi)
            weights[m, falling] = (hi - k[falling]) / (hi - mid)
        else:
            weights[m, mid] = 1.0
    if degenerate:
        log.warning("mel filters %s have coinciding bin edges", degenerate)
    return MelFilterBank(edges, weights, f_min, f_max, degenerate)


def hamming(length):
    n = np.arange(length)
    if length == 1:
        return np.ones(1)
    return 0.54 - 0.46 * np.cos(2 * np.pi * n / (length - 1))


def frame_signal(samples, fs, spec=FrameSpec()):
    """Split into Hamming-windowed frames zero-padded to the DFT size.

    Returns ``(frames, starts)``; a trailing partial frame is dropped.
    """
    samples = np.asarray(samples, dtype=float)
    length = spec.frame_length(fs)
    hop = spec.hop_length(fs)
    if spec.dft_size < length:
        raise ConfigurationError("DFT size smaller than frame length")
    if len(samples) < length:
        raise ValueError(f"signal of {len(samples)} samples is shorter than one frame ({length})")
    n_frames = (len(samples) - length) // hop + 1
    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(length)[None, :]
    frames = np.zeros((n_frames, spec.dft_size))
    frames[:, :length] = samples[idx] * hamming(length)
    return frames, starts


def frame_power_spectrum(frames):
    """|X[k]|^2 / N for k = 0..N/2; accepts one frame or a stack of them."""
    frames = np.asarray(frames, dtype=float)
    n = frames.shape[-1]
    spectrum = np.fft.rfft(frames, axis=-1)
    return (spectrum.real ** 2 + spectrum.imag ** 2) / n


def band_powers(power, bank):
    energy = np.asarray(power) @ bank.weights.T
    return 10.0 * np.log10(np.maximum(energy, POWER_FLOOR))


def dct_ii(P):
    P = np.asarray(P, dtype=float)
    M = P.shape[-1]
    m = np.arange(M)
    basis = np.cos(np.pi / M * (m[None, :] + 0.5) * m[:, None])  # [k', m]
    return P @ basis.T


_DEFAULT_BANK = None


def default_filterbank():
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = build_filterbank()
    return _DEFAULT_BANK


def signal_mfccs(samples, fs, spec=FrameSpec(), bank=None):
    """13 MFCCs for every full frame of ``samples``."""
    if bank is None:
        bank = default_filterbank()
    frames, starts = frame_signal(samples, fs, spec)
    coeffs = dct_ii(band_powers(frame_power_spectrum(frames), bank))[:, :N_COEFFS]
    centers = starts + spec.frame_length(fs) // 2
    return FrameMfccs(coeffs, centers)


def beat_features(samples, fs, states, beat, beat_index=0, mfccs=None):
    """Concatenated mean MFCCs of a beat's four intervals.

    A frame belongs to an interval when its centre sample lies inside it.
    An interval that contains no frame centre borrows the frame centred
    nearest to its midpoint; the affected segments are reported in
    ``fallback_segments``.
    """
    if mfccs is None:
        mfccs = signal_mfccs(samples, fs)
    n = len(samples) if samples is not None else len(states)
    intervals = beat.intervals()
    if states is not None and intervals[-1][1] > len(states):
        raise ValueError("beat extends past the state sequence")
    parts = []
    fallbacks = []
    for seg, (start, end) in enumerate(intervals):
        if end <= start:
            raise ValueError(f"beat {beat_index}: segment {SEGMENT_PREFIXES[seg]} is empty")
        if end > n:
            raise ValueError("beat extends past the signal")
        inside = (mfccs.centers >= start) & (mfccs.centers < end)
        if inside.any():
            parts.append(mfccs.coefficients[inside].mean(axis=0))
        else:
            midpoint = 0.5 * (start + end - 1)
            nearest = int(np.argmin(np.abs(mfccs.centers - midpoint)))
            parts.append(mfccs.coefficients[nearest])
            fallbacks.append(SEGMENT_PREFIXES[seg])
    return BeatFeatures(np.concatenate(parts), beat_index, tuple(fallbacks))


def feature_names():
    return [f"{p}_c{i}" for p in SEGMENT_PREFIXES for i in range(N_COEFFS)]
