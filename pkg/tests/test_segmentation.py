import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_state_sequence
from pcgscreen.errors import SegmentationError
from pcgscreen.pipeline import run_lengths
from pcgscreen.preprocess import preprocess
from pcgscreen.segmentation import (
    DurationPrior, Envelope, HeartRateEstimate, SegmenterConfig, StateSequence, compute_envelope,
    duration_priors, estimate_heart_rate, load_external_segmentation, save_segmentation, segment,
    validate_labels,
)
from pcgscreen.synth import generate_record

FS = 1000


def burst_train(period_s, duration_s=10.0, burst_s=0.08, seed=0):
    rng = np.random.default_rng(seed)
    n = int(duration_s * FS)
    x = 0.01 * rng.standard_normal(n)
    for start in np.arange(0.1, duration_s - burst_s, period_s):
        a = int(start * FS)
        x[a:a + int(burst_s * FS)] += rng.standard_normal(int(burst_s * FS))
    return x


def test_zero_signal_gives_flagged_zero_envelope():
    env = compute_envelope(np.zeros(3000), FS)
    assert env.flat
    assert np.all(env.values == 0)


def test_envelope_range():
    env = compute_envelope(burst_train(0.8), FS)
    assert env.values.min() == 0 and env.values.max() == 1
    assert not env.flat


def test_single_burst_envelope_peak_inside_burst():
    rng = np.random.default_rng(1)
    x = 0.01 * rng.standard_normal(4000)
    x[1800:2000] += rng.standard_normal(200)
    env = compute_envelope(x, FS).values
    assert 1800 <= np.argmax(env) < 2000
    # unimodal: rises to the peak and falls after it, ignoring small ripple
    peak = np.argmax(env)
    assert np.all(np.diff(env[1000:peak]) > -0.01)
    assert np.all(np.diff(env[peak:3000]) < 0.01)


def test_two_equal_bursts_give_equal_maxima():
    rng = np.random.default_rng(2)
    burst = rng.standard_normal(150)
    x = 0.01 * rng.standard_normal(5000)
    x[1000:1150] += burst
    x[3500:3650] += burst
    env = compute_envelope(x, FS).values
    a, b = env[800:1400].max(), env[3300:3900].max()
    assert abs(a - b) / max(a, b) < 0.1


@pytest.mark.parametrize("period,bpm,tol", [(0.8, 75, 3), (0.5, 120, 5)])
def test_heart_rate_from_burst_train(period, bpm, tol):
    hr = estimate_heart_rate(compute_envelope(burst_train(period), FS))
    assert abs(hr.beats_per_minute - bpm) <= tol
    assert 0.2 <= hr.systole_fraction <= 0.6


def test_heart_rate_flat_envelope_falls_back():
    hr = estimate_heart_rate(Envelope(np.zeros(3000), FS, flat=True))
    assert (hr.beats_per_minute, hr.systole_fraction, hr.low_confidence) == (75.0, 0.35, True)
    hr = estimate_heart_rate(Envelope(np.full(3000, 0.5), FS))
    assert hr.low_confidence and hr.beats_per_minute == 75.0


def test_heart_rate_needs_two_seconds():
    with pytest.raises(SegmentationError):
        estimate_heart_rate(Envelope(np.zeros(1999), FS))


def test_heart_rate_on_synthetic_pcg():
    rec = generate_record(np.random.default_rng(3), bpm=80, abnormal=False)
    x, fs = preprocess(rec.samples, rec.sample_rate)
    hr = estimate_heart_rate(compute_envelope(x, fs))
    assert abs(hr.beats_per_minute - 80) < 4
    assert abs(hr.systolic_interval - (0.21 + 0.12 * 0.75)) < 0.06


def test_duration_prior_is_normalised_and_truncated():
    p = DurationPrior.truncated(12.2, 3.0)
    assert p.low == 4 and p.high == 21
    support = np.arange(p.low, p.high + 1)
    assert np.exp(p.log_pmf(support)).sum() == pytest.approx(1.0)
    assert p.log_pmf([p.low - 1, p.high + 1]).tolist() == [-np.inf, -np.inf]


def test_duration_priors_follow_heart_rate():
    priors = duration_priors(HeartRateEstimate(75, 0.4), 100)
    assert priors[1].mean == pytest.approx(12.2)
    assert priors[3].mean == pytest.approx(9.2)
    assert priors[2].mean == pytest.approx(32 - 12.2)
    assert priors[4].mean == pytest.approx(48 - 9.2)


def synthetic_agreement(seed, **kw):
    rec = generate_record(np.random.default_rng(seed), **kw)
    x, fs = preprocess(rec.samples, rec.sample_rate)
    states = segment(x, fs)
    truth = rec.labels[::2][:len(x)]
    return float(np.mean(states.labels == truth)), states, rec


@pytest.mark.parametrize("seed,abnormal", [(0, False), (1, True), (2, False), (3, True)])
def test_segmentation_on_synthetic_ground_truth(seed, abnormal):
    agreement, states, _ = synthetic_agreement(seed, abnormal=abnormal, bpm=60 + 10 * seed)
    assert agreement >= 0.9
    assert validate_labels(states.labels) is None


def test_segment_run_lengths_within_prior_bounds():
    _, states, _ = synthetic_agreement(5, bpm=72)
    values, starts, ends = run_lengths(states.labels)
    interior = slice(1, -1)  # first and last runs may be cut by the recording edges
    lengths = (ends - starts)[interior]
    for state, (mean, std) in ((1, (122, 30)), (3, (92, 25))):
        runs = lengths[values[interior] == state]
        assert np.all(runs >= mean - 3 * std - 10) and np.all(runs <= mean + 3 * std + 10)


def test_segment_is_deterministic():
    rec = generate_record(np.random.default_rng(6), abnormal=True)
    x, fs = preprocess(rec.samples, rec.sample_rate)
    np.testing.assert_array_equal(segment(x, fs).labels, segment(x, fs).labels)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(2.0, 5.0))
def test_segment_output_always_cyclic(seed, duration):
    x = np.random.default_rng(seed).standard_normal(int(duration * FS))
    states = segment(x, FS)
    assert len(states) == len(x)
    assert set(np.unique(states.labels)) <= {1, 2, 3, 4}
    assert validate_labels(states.labels) is None


def test_segment_silence_is_cyclic():
    states = segment(np.zeros(3000), FS)
    assert validate_labels(states.labels) is None


def test_segment_rejects_short_signals():
    with pytest.raises(SegmentationError):
        segment(np.ones(1999), FS)
    with pytest.raises(SegmentationError):
        # a supplied 20 bpm estimate makes one beat longer than the 2.5 s signal
        segment(np.random.default_rng(0).standard_normal(2500), FS,
                heart_rate=HeartRateEstimate(20, 0.3))


def test_state_sequence_rejects_order_violation():
    with pytest.raises(SegmentationError):
        StateSequence([1, 1, 3, 3])
    StateSequence([3, 4, 1, 2, 3])


def test_validate_labels_reports_first_bad_index():
    assert validate_labels([1, 1, 2, 2, 3, 4, 1]) is None
    assert validate_labels([4, 1, 2, 4]) == 3
    with pytest.raises(ValueError):
        validate_labels([1, 0])


def test_external_file_valid(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("1 1 2 2 3 3 4 4")
    s = load_external_segmentation(path, 8)
    assert s.source == "external"
    assert s.labels.tolist() == [1, 1, 2, 2, 3, 3, 4, 4]


def test_external_file_newline_separated_round_trip(tmp_path):
    labels = random_state_sequence(np.random.default_rng(9), 500)
    path = tmp_path / "s.txt"
    save_segmentation(path, StateSequence(labels))
    np.testing.assert_array_equal(load_external_segmentation(path, 500).labels, labels)


@pytest.mark.parametrize("content,length,match", [
    ("1 1 2 5", 4, "not in 1..4"),
    ("1 1 3 3", 4, "index 2"),
    ("1 2 3", 4, "3 labels"),
    ("1 x 2", 3, "non-integer"),
])
def test_external_file_rejections(tmp_path, content, length, match):
    path = tmp_path / "s.txt"
    path.write_text(content)
    with pytest.raises(SegmentationError, match=match):
        load_external_segmentation(path, length)


def test_config_is_serialisable():
    d = SegmenterConfig().as_dict()
    assert d["s1_ms"] == [122.0, 30.0]
    assert d["decode_rate"] == 100.0
