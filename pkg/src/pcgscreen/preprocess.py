"""Resampling and band-pass filtering of raw recordings.

All filters are linear-phase FIR designs (windowed sinc, Hamming window)
applied with group-delay compensation, so sample ``i`` of the output lines
up with sample ``i`` of the input.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UnsupportedRateError

TARGET_RATE = 1000
SOURCE_RATE = 2000


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    low_cut_hz: float
    high_cut_hz: float
    tap_count: int

    def validate(self, sample_rate):
        if self.kind not in ("lowpass", "bandpass"):
            raise ConfigurationError(f"unknown filter kind {self.kind!r}")
        if self.tap_count < 1 or self.tap_count % 2 == 0:
            raise ConfigurationError(f"tap_count must be odd and positive, got {self.tap_count}")
        nyquist = sample_rate / 2
        if not 0 < self.high_cut_hz < nyquist:
            raise ConfigurationError(
                f"high cut {self.high_cut_hz} Hz outside (0, {nyquist}) Hz"
            )
        if self.kind == "bandpass" and not 0 < self.low_cut_hz < self.high_cut_hz:
            raise ConfigurationError(
                f"band edges must satisfy 0 < {self.low_cut_hz} < {self.high_cut_hz}"
            )


BANDPASS_25_400 = FilterSpec("bandpass", 25.0, 400.0, 201)
ANTI_ALIAS = FilterSpec("lowpass", 0.0, 450.0, 101)


def _lowpass_kernel(cutoff_hz, sample_rate, tap_count):
    mid = (tap_count - 1) // 2
    n = np.arange(tap_count) - mid
    fc = cutoff_hz / sample_rate
    return 2 * fc * np.sinc(2 * fc * n)


def design_fir(spec, sample_rate):
    """Return the symmetric impulse response for ``spec`` at ``sample_rate``.

    Low-pass kernels are scaled to unit DC gain; band-pass kernels to unit
    gain at the arithmetic centre of the pass band.
    """
    spec.validate(sample_rate)
    window = np.hamming(spec.tap_count)
    if spec.kind == "lowpass":
        h = _lowpass_kernel(spec.high_cut_hz, sample_rate, spec.tap_count) * window
        return h / h.sum()

    h = (
        _lowpass_kernel(spec.high_cut_hz, sample_rate, spec.tap_count)
        - _lowpass_kernel(spec.low_cut_hz, sample_rate, spec.tap_count)
    ) * window
    f0 = 0.5 * (spec.low_cut_hz + spec.high_cut_hz) / sample_rate
    n = np.arange(spec.tap_count) - (spec.tap_count - 1) // 2
    gain = np.abs(np.sum(h * np.exp(-2j * np.pi * f0 * n)))
    return h / gain


def apply_fir(samples, taps):
    """Zero-phase application of an odd-length symmetric FIR.

    Equivalent to causal filtering of the zero-extended input followed by a
    left shift of ``(len(taps) - 1) / 2`` samples.
    """
    samples = np.asarray(samples, dtype=float)
    if len(samples) == 0:
        return samples.copy()
    full = np.convolve(samples, taps)
    delay = (len(taps) - 1) // 2
    return full[delay:delay + len(samples)]


def bandpass(samples, sample_rate, spec=BANDPASS_25_400):
    return apply_fir(samples, design_fir(spec, sample_rate))


def resample_half(samples, sample_rate, spec=ANTI_ALIAS):
    """Anti-alias and decimate a 2000 Hz recording to 1000 Hz.

    Recordings already at 1000 Hz are returned unchanged.
    """
    if sample_rate == TARGET_RATE:
        return np.asarray(samples, dtype=float), TARGET_RATE
    if sample_rate != SOURCE_RATE:
        raise UnsupportedRateError(
            f"only {SOURCE_RATE} Hz and {TARGET_RATE} Hz input is supported, got {sample_rate} Hz"
        )
    filtered = apply_fir(samples, design_fir(spec, sample_rate))
    return filtered[::2], TARGET_RATE


def processed_length(n_samples, sample_rate):
    """Number of samples a recording of ``n_samples`` has after resampling."""
    return -(-n_samples // 2) if sample_rate == SOURCE_RATE else n_samples


def preprocess(samples, sample_rate, band=BANDPASS_25_400, anti_alias=ANTI_ALIAS):
    """Resample to 1000 Hz, then band-pass filter."""
    x, fs = resample_half(samples, sample_rate, anti_alias)
    return bandpass(x, fs, band), fs
