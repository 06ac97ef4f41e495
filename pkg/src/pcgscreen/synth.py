"""Synthetic labelled phonocardiograms.

S1 and S2 are tapered low-frequency tone bursts; abnormal recordings add a
band-limited systolic murmur.  Every recording starts at an S1 onset and
comes with per-sample ground-truth states at the processing rate.
"""
import csv
import os
from dataclasses import dataclass

import numpy as np

from .dataset_io import Label, write_wav
from .preprocess import FilterSpec, apply_fir, design_fir
from .segmentation import DIASTOLE, S1, S2, SYSTOLE, save_segmentation

SYNTH_RATE = 2000
SUBSET = "training-s"
STATES_DIR = "states"


@dataclass
class SyntheticRecord:
    samples: np.ndarray
    labels: np.ndarray
    sample_rate: int
    abnormal: bool
    bpm: float


def _tukey(n, alpha=0.25):
    if n < 2:
        return np.ones(n)
    x = np.linspace(0, 1, n)
    w = np.ones(n)
    edge = alpha / 2
    lo = x < edge
    hi = x > 1 - edge
    w[lo] = 0.5 * (1 + np.cos(np.pi * (2 * x[lo] / alpha - 1)))
    w[hi] = 0.5 * (1 + np.cos(np.pi * (2 * x[hi] / alpha - 2 / alpha + 1)))
    return w


def _burst(rng, n, fs, f_lo, f_hi):
    t = np.arange(n) / fs
    f0 = rng.uniform(f_lo, f_hi)
    phase = rng.uniform(0, 2 * np.pi)
    tone = np.sin(2 * np.pi * f0 * t + phase) + 0.4 * np.sin(2 * np.pi * 2.1 * f0 * t + 2 * phase)
    return tone * _tukey(n)


def generate_record(rng, bpm=75.0, duration_s=12.0, abnormal=False, fs=SYNTH_RATE,
                    period_jitter=0.0, noise_level=0.02, murmur_level=0.3):
    """One synthetic recording with sample-level ground truth at ``fs``."""
    n_total = int(round(duration_s * fs))
    x = np.zeros(n_total)
    labels = np.full(n_total, DIASTOLE, dtype=np.int8)
    murmur_taps = design_fir(FilterSpec("bandpass", 120.0, 350.0, 101), fs)

    base_period = 60.0 / bpm
    onset = 0
    while onset < n_total:
        period = base_period * (1 + period_jitter * rng.standard_normal())
        n_beat = int(round(period * fs))
        sys_interval = int(round((0.21 + 0.12 * period) * fs))
        n_s1 = int(round(rng.uniform(0.10, 0.14) * fs))
        n_s2 = int(round(rng.uniform(0.08, 0.11) * fs))
        bounds = [onset, onset + n_s1, onset + sys_interval, onset + sys_interval + n_s2,
                  onset + n_beat]
        for state, a, b in zip((S1, SYSTOLE, S2, DIASTOLE), bounds[:-1], bounds[1:]):
            labels[a:min(b, n_total)] = state

        s1 = _burst(rng, n_s1, fs, 35, 60)
        s2 = rng.uniform(0.75, 1.0) * _burst(rng, n_s2, fs, 50, 90)
        for wave, start in ((s1, bounds[0]), (s2, bounds[2])):
            stop = min(start + len(wave), n_total)
            if stop > start:
                x[start:stop] += wave[:stop - start]

        if abnormal:
            a, b = bounds[1], bounds[2]
            n = b - a
            noise = apply_fir(rng.standard_normal(n + 200), murmur_taps)[100:100 + n]
            noise /= np.std(noise) + 1e-12
            shape = np.minimum(1.0, 3 * np.minimum(np.arange(n), n - 1 - np.arange(n)) / n)
            stop = min(b, n_total)
            if stop > a:
                x[a:stop] += (murmur_level * noise * shape)[:stop - a]
        onset += n_beat

    x += noise_level * rng.standard_normal(n_total)
    x *= rng.uniform(0.3, 0.8) / np.max(np.abs(x))
    return SyntheticRecord(x, labels, fs, abnormal, bpm)


def write_dataset(root, n_records=40, seed=0, duration_s=12.0, bpm_range=(60.0, 100.0),
                  abnormal_fraction=0.5):
    """Write a challenge-style directory tree plus ground-truth state files.

    Layout: ``root/training-s/{REFERENCE.csv, s0001.wav, ...}`` and
    ``root/states/s0001.txt`` holding 1000 Hz labels (the rate the
    recordings have after resampling).
    """
    rng = np.random.default_rng(seed)
    subset_dir = os.path.join(root, SUBSET)
    states_dir = os.path.join(root, STATES_DIR)
    os.makedirs(subset_dir, exist_ok=True)
    os.makedirs(states_dir, exist_ok=True)

    n_abnormal = int(round(n_records * abnormal_fraction))
    flags = np.array([True] * n_abnormal + [False] * (n_records - n_abnormal))
    rng.shuffle(flags)

    rows = []
    for i, abnormal in enumerate(flags, start=1):
        rid = f"s{i:04d}"
        rec = generate_record(
            rng,
            bpm=rng.uniform(*bpm_range),
            duration_s=duration_s,
            abnormal=bool(abnormal),
            period_jitter=0.02,
            noise_level=rng.uniform(0.01, 0.04),
            murmur_level=rng.uniform(0.25, 0.45),
        )
        write_wav(os.path.join(subset_dir, rid + ".wav"), rec.samples, rec.sample_rate)
        save_segmentation(os.path.join(states_dir, rid + ".txt"), rec.labels[::2])
        rows.append((rid, int(Label.ABNORMAL if abnormal else Label.NORMAL)))

    with open(os.path.join(subset_dir, "REFERENCE.csv"), "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return rows
