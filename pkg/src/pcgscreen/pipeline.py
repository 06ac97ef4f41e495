"""Beats, per-record feature sets and the two classification strategies.

single:   the 52 features of beats 1..9 are averaged and one classifier
          labels the recording.
ensemble: classifier ``i`` is trained on beat ``i`` of every training
          record; a recording is normal when at least 5 of the 9 beats
          are voted normal.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import classifiers
from .classifiers import ClassifierConfig
from .dataset_io import Label
from .errors import InsufficientBeatsError
from .mfcc import N_FEATURES, beat_features, signal_mfccs
from .preprocess import preprocess
from .segmentation import DIASTOLE, S1, S2, SYSTOLE, SegmenterConfig, StateSequence, segment

log = logging.getLogger(__name__)

BEATS_PER_RECORD = 9
MAJORITY = BEATS_PER_RECORD // 2 + 1


@dataclass(frozen=True)
class Beat:
    s1: tuple
    systole: tuple
    s2: tuple
    diastole: tuple

    def __post_init__(self):
        ivs = self.intervals()
        for (a, b), (c, _) in zip(ivs, ivs[1:]):
            if b != c:
                raise ValueError("beat intervals must be contiguous")
        if any(b <= a for a, b in ivs):
            raise ValueError("beat intervals must be non-empty")

    def intervals(self):
        return (self.s1, self.systole, self.s2, self.diastole)

    @property
    def start(self):
        return self.s1[0]

    @property
    def end(self):
        return self.diastole[1]


def run_lengths(labels):
    """Return ``(values, starts, ends)`` of the maximal constant runs."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        empty = np.array([], dtype=int)
        return empty, empty, empty
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(labels)]])
    return labels[starts], starts, ends


def extract_beats(states):
    """Complete S1 -> systole -> S2 -> diastole cycles, in time order."""
    labels = states.labels if isinstance(states, StateSequence) else np.asarray(states)
    values, starts, ends = run_lengths(labels)
    beats = []
    i = 0
    while i + 4 <= len(values):
        if tuple(values[i:i + 4]) == (S1, SYSTOLE, S2, DIASTOLE):
            beats.append(Beat(*((int(starts[i + k]), int(ends[i + k])) for k in range(4))))
            i += 4
        else:
            i += 1
    return beats


@dataclass
class RecordFeatures:
    record_id: str
    beats: np.ndarray  # (9, 52), beat 1 first
    label: Label
    n_beats: int = BEATS_PER_RECORD

    def __post_init__(self):
        self.beats = np.asarray(self.beats, dtype=float)
        if self.beats.shape != (BEATS_PER_RECORD, N_FEATURES):
            raise ValueError(
                f"{self.record_id}: expected {BEATS_PER_RECORD}x{N_FEATURES} features, "
                f"got {self.beats.shape}"
            )
        self.label = Label.parse(self.label)


def build_record_features(record_id, samples, fs, states, label, required=BEATS_PER_RECORD):
    """Features of beats 1..9 of a preprocessed recording."""
    beats = extract_beats(states)
    if len(beats) < required:
        raise InsufficientBeatsError(record_id, len(beats), required)
    mfccs = signal_mfccs(samples, fs)
    rows = [beat_features(samples, fs, states, b, i + 1, mfccs).values
            for i, b in enumerate(beats[:required])]
    return RecordFeatures(record_id, np.vstack(rows), label, len(beats))


@dataclass
class ProcessedRecord:
    """Outcome of running the DSP chain on one recording."""

    record_id: str
    label: Label
    n_beats: int
    features: np.ndarray  # (min(n_beats, 9), 52)
    states: StateSequence = field(repr=False, default=None)

    def record_features(self):
        if self.n_beats < BEATS_PER_RECORD:
            raise InsufficientBeatsError(self.record_id, self.n_beats, BEATS_PER_RECORD)
        return RecordFeatures(self.record_id, self.features, self.label, self.n_beats)


def process_signal(record_id, samples, sample_rate, label, states=None,
                   segmenter=SegmenterConfig()):
    """Preprocess, segment (unless ``states`` is given) and extract beat features."""
    x, fs = preprocess(samples, sample_rate)
    if states is None:
        states = segment(x, fs, segmenter)
    elif len(states) != len(x):
        raise ValueError(f"{record_id}: segmentation has {len(states)} labels, "
                         f"signal has {len(x)} samples")
    beats = extract_beats(states)
    usable = beats[:BEATS_PER_RECORD]
    if usable:
        mfccs = signal_mfccs(x, fs)
        feats = np.vstack([beat_features(x, fs, states, b, i + 1, mfccs).values
                           for i, b in enumerate(usable)])
    else:
        feats = np.zeros((0, N_FEATURES))
    return ProcessedRecord(record_id, Label.parse(label), len(beats), feats, states)


def single_strategy_vector(rf):
    return rf.beats.mean(axis=0)


@dataclass
class SingleModel:
    member: object
    config: ClassifierConfig
    strategy = "single"

    def models(self):
        return [self.member]


@dataclass
class EnsembleModel:
    members: list
    config: ClassifierConfig
    strategy = "ensemble"

    def __post_init__(self):
        if len(self.members) != BEATS_PER_RECORD:
            raise ValueError(f"an ensemble needs {BEATS_PER_RECORD} members")

    def models(self):
        return list(self.members)


def _check_classes(training):
    labels = {rf.label for rf in training}
    if labels != {Label.NORMAL, Label.ABNORMAL}:
        raise ValueError("training records must include both normal and abnormal examples")


def fit_single(config, training):
    _check_classes(training)
    X = np.vstack([single_strategy_vector(rf) for rf in training])
    y = [rf.label for rf in training]
    return SingleModel(classifiers.fit(config, X, y), config)


def predict_single(model, rf):
    return classifiers.predict(model.member, single_strategy_vector(rf))


def fit_ensemble(config, training):
    _check_classes(training)
    y = [rf.label for rf in training]
    stacked = np.stack([rf.beats for rf in training])  # (n, 9, 52)
    members = [classifiers.fit(config, stacked[:, i, :], y) for i in range(BEATS_PER_RECORD)]
    return EnsembleModel(members, config)


def ensemble_votes(model, rf):
    """Per-beat verdicts of the ensemble members, beat 1 first."""
    return [classifiers.predict(m, rf.beats[i]) for i, m in enumerate(model.members)]


def majority_vote(votes):
    normal = sum(1 for v in votes if Label.parse(v) == Label.NORMAL)
    return Label.NORMAL if normal >= MAJORITY else Label.ABNORMAL


def predict_ensemble(model, rf):
    return majority_vote(ensemble_votes(model, rf))


class Strategy:
    """Named pair of fit/predict functions used by the evaluation harness."""

    def __init__(self, name, fit, predict):
        self.name = name
        self.fit = fit
        self.predict = predict

    def predict_many(self, model, records):
        return [self.predict(model, rf) for rf in records]

    def __repr__(self):
        return f"Strategy({self.name!r})"


SINGLE = Strategy("single", fit_single, predict_single)
ENSEMBLE = Strategy("ensemble", fit_ensemble, predict_ensemble)
STRATEGIES = {"single": SINGLE, "ensemble": ENSEMBLE}


def get_strategy(strategy):
    if isinstance(strategy, Strategy):
        return strategy
    try:
        return STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown strategy {strategy!r}") from None


def strategy_model_to_dict(model):
    return {
        "strategy": model.strategy,
        "classifier": model.config.as_dict(),
        "members": [classifiers.model_to_dict(m) for m in model.models()],
    }


def strategy_model_from_dict(doc):
    config = ClassifierConfig(**doc["classifier"])
    members = [classifiers.model_from_dict(m) for m in doc["members"]]
    if doc["strategy"] == "single":
        return SingleModel(members[0], config)
    return EnsembleModel(members, config)
