"""Four-state heart sound segmentation.

States are 1 = S1, 2 = systole, 3 = S2, 4 = diastole and always follow the
cycle 1 -> 2 -> 3 -> 4 -> 1.  The internal segmenter is a hidden semi-Markov
decoder: a homomorphic envelope drives Gaussian emission scores, and
truncated Gaussian dwell-time priors derived from an autocorrelation heart
rate estimate constrain the state durations.  Decoding runs on the envelope
averaged down to ``decode_rate`` and labels are expanded back to the signal
rate.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import SegmentationError
from .preprocess import FilterSpec, apply_fir, design_fir

S1, SYSTOLE, S2, DIASTOLE = 1, 2, 3, 4
STATES = (S1, SYSTOLE, S2, DIASTOLE)

FALLBACK_BPM = 75.0
FALLBACK_SYSTOLE_FRACTION = 0.35


@dataclass(frozen=True)
class StateSequence:
    labels: np.ndarray
    source: str = "internal"

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        object.__setattr__(self, "labels", labels)
        idx = validate_labels(labels)
        if idx is not None:
            raise SegmentationError(f"state order violated at index {idx}")

    def __len__(self):
        return len(self.labels)


def validate_labels(labels):
    """Return the first offending index, or None if ``labels`` is valid.

    Raises ValueError for labels outside 1..4.
    """
    labels = np.asarray(labels)
    bad = np.flatnonzero((labels < 1) | (labels > 4))
    if len(bad):
        raise ValueError(f"label {labels[bad[0]]} at index {bad[0]} is not in 1..4")
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    expected = labels[change - 1] % 4 + 1
    wrong = change[labels[change] != expected]
    return int(wrong[0]) if len(wrong) else None


@dataclass
class Envelope:
    values: np.ndarray
    sample_rate: float
    flat: bool = False


@dataclass(frozen=True)
class HeartRateEstimate:
    beats_per_minute: float
    systole_fraction: float
    low_confidence: bool = False

    @property
    def period(self):
        return 60.0 / self.beats_per_minute

    @property
    def systolic_interval(self):
        return self.period * self.systole_fraction


@dataclass(frozen=True)
class SegmenterConfig:
    decode_rate: float = 100.0
    envelope_cutoff_hz: float = 8.0
    envelope_taps: int = 251
    s1_ms: tuple = (122.0, 30.0)
    s2_ms: tuple = (92.0, 25.0)
    systole_min_std_ms: float = 25.0
    diastole_min_std_ms: float = 50.0
    relative_std: float = 0.1
    sound_mean: float = 0.6
    quiet_mean: float = 0.1
    emission_std: float = 0.25
    epsilon: float = 1e-6

    def as_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


def compute_envelope(samples, sample_rate, config=SegmenterConfig()):
    """Homomorphic envelope normalised to [0, 1]."""
    x = np.abs(np.asarray(samples, dtype=float))
    if len(x) == 0:
        raise ValueError("empty signal")
    peak = x.max()
    if peak == 0:
        return Envelope(np.zeros(len(x)), sample_rate, flat=True)
    taps = design_fir(
        FilterSpec("lowpass", 0.0, config.envelope_cutoff_hz, config.envelope_taps), sample_rate
    )
    logx = np.log(x + config.epsilon * peak)
    pad = min(len(taps) // 2, len(x) - 1)
    padded = np.pad(logx, pad, mode="reflect") if pad else logx
    smooth = np.exp(apply_fir(padded, taps)[pad:pad + len(x)])
    lo, hi = smooth.min(), smooth.max()
    if hi - lo <= 0:
        return Envelope(np.zeros(len(x)), sample_rate, flat=True)
    return Envelope((smooth - lo) / (hi - lo), sample_rate)


def _autocorrelation(values):
    x = values - values.mean()
    n = len(x)
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, size)
    acf = np.fft.irfft(spec.real ** 2 + spec.imag ** 2, size)[:n]
    if acf[0] <= 0:
        return None
    return acf / acf[0]


def _local_maxima(acf, lo, hi):
    lo = max(lo, 1)
    hi = min(hi, len(acf) - 2)
    if hi < lo:
        return np.array([], dtype=int)
    i = np.arange(lo, hi + 1)
    peaks = (acf[i] > acf[i - 1]) & (acf[i] >= acf[i + 1])
    return i[peaks]


def estimate_heart_rate(env, min_lag_s=0.3, max_lag_s=2.0, min_systole_s=0.2, prominence=0.2):
    """Heart rate and systolic fraction from the envelope autocorrelation."""
    fs = env.sample_rate
    if len(env.values) < 2 * fs:
        raise SegmentationError("heart rate estimation needs at least 2 s of signal")
    fallback = HeartRateEstimate(FALLBACK_BPM, FALLBACK_SYSTOLE_FRACTION, low_confidence=True)
    if env.flat:
        return fallback
    acf = _autocorrelation(np.asarray(env.values, dtype=float))
    if acf is None:
        return fallback
    peaks = _local_maxima(acf, int(round(min_lag_s * fs)), int(round(max_lag_s * fs)))
    if len(peaks) == 0:
        return fallback
    beat_lag = int(peaks[np.argmax(acf[peaks])])
    if acf[beat_lag] <= 0:
        return fallback
    bpm = 60.0 * fs / beat_lag

    sys_peaks = _local_maxima(acf, int(round(min_systole_s * fs)), beat_lag // 2)
    sys_peaks = sys_peaks[acf[sys_peaks] >= prominence * acf[beat_lag]]
    if len(sys_peaks):
        fraction = sys_peaks[0] / beat_lag
        low = False
    else:
        fraction = FALLBACK_SYSTOLE_FRACTION
        low = True
    fraction = float(np.clip(fraction, 0.2, 0.6))
    bpm = float(np.clip(bpm, 30.0, 200.0))
    return HeartRateEstimate(bpm, fraction, low_confidence=low)


@dataclass(frozen=True)
class DurationPrior:
    mean: float  # frames
    std: float
    low: int
    high: int

    @classmethod
    def truncated(cls, mean, std):
        low = max(1, math.ceil(mean - 3 * std))
        high = max(low, math.floor(mean + 3 * std))
        return cls(mean, std, low, high)

    def log_pmf(self, d):
        d = np.asarray(d, dtype=float)
        support = np.arange(self.low, self.high + 1)
        z = -0.5 * ((support - self.mean) / self.std) ** 2
        norm = np.log(np.exp(z - z.max()).sum()) + z.max()
        out = -0.5 * ((d - self.mean) / self.std) ** 2 - norm
        return np.where((d >= self.low) & (d <= self.high), out, -np.inf)


def duration_priors(hr, rate, config=SegmenterConfig()):
    """Per-state dwell-time priors in frames at ``rate``."""
    ms = rate / 1000.0
    s1_mean, s1_std = config.s1_ms
    s2_mean, s2_std = config.s2_ms
    sys_mean = max(hr.systolic_interval * 1000 - s1_mean, 50.0)
    dia_mean = max((hr.period - hr.systolic_interval) * 1000 - s2_mean, 80.0)
    sys_std = max(config.systole_min_std_ms, config.relative_std * sys_mean)
    dia_std = max(config.diastole_min_std_ms, config.relative_std * dia_mean)
    return {
        S1: DurationPrior.truncated(s1_mean * ms, s1_std * ms),
        SYSTOLE: DurationPrior.truncated(sys_mean * ms, sys_std * ms),
        S2: DurationPrior.truncated(s2_mean * ms, s2_std * ms),
        DIASTOLE: DurationPrior.truncated(dia_mean * ms, dia_std * ms),
    }


def emission_scores(env_values, config=SegmenterConfig()):
    """Gaussian log-likelihood of each envelope value under each state; shape (T, 4)."""
    means = np.array([config.sound_mean, config.quiet_mean, config.sound_mean, config.quiet_mean])
    s = config.emission_std
    z = (np.asarray(env_values)[:, None] - means[None, :]) / s
    return -0.5 * z ** 2 - np.log(s * math.sqrt(2 * math.pi))


def viterbi_durations(emissions, priors):
    """Most likely cyclic state path under explicit dwell-time priors.

    The first and last segments may be partial: they take any length up to
    the state's maximum dwell and carry no duration penalty.
    Returns labels in 1..4 of length T.
    """
    T = emissions.shape[0]
    n_states = 4
    d_max = max(p.high for p in priors.values())
    d = np.arange(1, d_max + 1)
    log_dur = np.vstack([priors[s].log_pmf(d) for s in STATES])  # (4, d_max)
    partial_ok = np.vstack([d <= priors[s].high for s in STATES])
    cum = np.vstack([np.zeros((1, n_states)), np.cumsum(emissions, axis=0)])  # (T+1, 4)
    prev = np.array([3, 0, 1, 2])

    # delta[t, j]: best score of a path over frames [0, t) whose last segment is state j ending at t
    delta = np.full((T + 1, n_states), -np.inf)
    best_d = np.zeros((T + 1, n_states), dtype=np.int32)
    final_score = np.full(n_states, -np.inf)
    final_d = np.zeros(n_states, dtype=np.int32)
    rows = np.arange(n_states)[:, None]

    for t in range(1, T + 1):
        dd = d[d <= t]
        starts = t - dd  # (D,)
        seg = cum[t][:, None] - cum[starts].T  # (4, D)
        before = delta[starts][:, prev].T  # (4, D): score of predecessor ending at start
        ok = partial_ok[:, :len(dd)]
        at_origin = starts == 0
        score = before + log_dur[:, :len(dd)]
        if at_origin.any():
            score[:, at_origin] = np.where(ok[:, at_origin], 0.0, -np.inf)
        score = score + seg
        k = np.argmax(score, axis=1)
        delta[t] = score[rows[:, 0], k]
        best_d[t] = dd[k]
        if t == T:
            # the closing segment may be cut short by the end of the recording
            tail = np.where(ok, before, -np.inf)
            if at_origin.any():
                tail[:, at_origin] = np.where(ok[:, at_origin], 0.0, -np.inf)
            tail = tail + seg
            kt = np.argmax(tail, axis=1)
            final_score = tail[rows[:, 0], kt]
            final_d = dd[kt]

    if not np.isfinite(final_score).any():
        raise SegmentationError("no admissible state path")
    state = int(np.argmax(final_score))
    labels = np.empty(T, dtype=np.int8)
    t = T
    length = int(final_d[state])
    while True:
        labels[t - length:t] = state + 1
        t -= length
        if t == 0:
            break
        state = int(prev[state])
        length = int(best_d[t, state])
    return labels


def _block_mean(values, factor):
    n = len(values)
    n_blocks = -(-n // factor)
    padded = np.full(n_blocks * factor, np.nan)
    padded[:n] = values
    return np.nanmean(padded.reshape(n_blocks, factor), axis=1)


def segment(samples, sample_rate, config=SegmenterConfig(), heart_rate=None):
    """Label every sample of a preprocessed recording with its cardiac state."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 2 * sample_rate:
        raise SegmentationError(
            f"recording of {len(samples) / sample_rate:.2f} s is shorter than the 2 s minimum"
        )
    env = compute_envelope(samples, sample_rate, config)
    hr = heart_rate or estimate_heart_rate(env)
    if len(samples) < hr.period * sample_rate:
        raise SegmentationError("recording is shorter than one mean beat")
    factor = int(round(sample_rate / config.decode_rate))
    if factor < 1:
        raise SegmentationError("decode rate exceeds sample rate")
    coarse = _block_mean(env.values, factor)
    priors = duration_priors(hr, sample_rate / factor, config)
    labels = viterbi_durations(emission_scores(coarse, config), priors)
    return StateSequence(np.repeat(labels, factor)[:len(samples)], "internal")


def load_external_segmentation(path, expected_length):
    """Read a whitespace-separated label file and validate it."""
    with open(path) as fh:
        tokens = fh.read().split()
    try:
        labels = np.array([int(tok) for tok in tokens], dtype=np.int64)
    except ValueError as exc:
        raise SegmentationError(f"{path}: non-integer label ({exc})") from None
    if len(labels) != expected_length:
        raise SegmentationError(
            f"{path}: {len(labels)} labels for a signal of {expected_length} samples"
        )
    try:
        idx = validate_labels(labels)
    except ValueError as exc:
        raise SegmentationError(f"{path}: {exc}") from None
    if idx is not None:
        raise SegmentationError(
            f"{path}: state order violated at index {idx} ({labels[idx - 1]} -> {labels[idx]})"
        )
    return StateSequence(labels, "external")


def save_segmentation(path, states):
    labels = states.labels if isinstance(states, StateSequence) else np.asarray(states)
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(v)) for v in labels))
        fh.write("\n")
