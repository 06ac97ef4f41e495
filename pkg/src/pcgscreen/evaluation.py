"""Balanced repeated cross-validation and the Acc/Se/Sp/MAcc metrics.

Abnormal is the positive class.  Each run draws its own balanced subset
and stratified folds from a generator seeded with ``(master_seed, run)``,
so runs are independent and may execute in any order or in parallel.
"""
import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .classifiers import ClassifierConfig
from .dataset_io import Label
from .pipeline import get_strategy

log = logging.getLogger(__name__)

RNG_NAME = "numpy.random.PCG64 seeded by SeedSequence([master_seed, run])"
Z_95 = 1.96
CLASSIFIER_NAMES = {"knn": "kNN", "svm": "SVM", "dt": "DT"}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fn + self.fp + self.tn

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.fn + other.fn,
                               self.fp + other.fp, self.tn + other.tn)

    @classmethod
    def from_labels(cls, truth, predicted):
        tp = fn = fp = tn = 0
        for t, p in zip(truth, predicted):
            t_pos = Label.parse(t) == Label.ABNORMAL
            p_pos = Label.parse(p) == Label.ABNORMAL
            if t_pos:
                tp += p_pos
                fn += not p_pos
            else:
                fp += p_pos
                tn += not p_pos
        return cls(tp, fn, fp, tn)


@dataclass(frozen=True)
class Metrics:
    """Percentages; ``macc`` is always derived from ``se`` and ``sp``."""

    acc: float
    se: float
    sp: float

    @property
    def macc(self):
        return (self.se + self.sp) / 2

    def as_dict(self):
        return {"acc": self.acc, "se": self.se, "sp": self.sp, "macc": self.macc}


def _exact_rates(cm):
    if cm.total == 0:
        raise ValueError("accuracy undefined: no records evaluated")
    if cm.tp + cm.fn == 0:
        raise ValueError("sensitivity undefined: no abnormal records")
    if cm.fp + cm.tn == 0:
        raise ValueError("specificity undefined: no normal records")
    return (
        Fraction(100 * (cm.tp + cm.tn), cm.total),
        Fraction(100 * cm.tp, cm.tp + cm.fn),
        Fraction(100 * cm.tn, cm.fp + cm.tn),
    )


def metrics_from_confusion(cm):
    return Metrics(*(float(v) for v in _exact_rates(cm)))


def mean_metrics(confusions):
    """Average the per-fold metrics exactly, then convert to floats."""
    rates = [_exact_rates(cm) for cm in confusions]
    n = len(rates)
    return Metrics(*(float(sum(r[i] for r in rates) / n) for i in range(3)))


def run_generator(master_seed, run):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, run])))


def balance_subset(records, rng):
    """All abnormal records plus an equal-sized random draw of normal ones.

    ``rng`` is a numpy Generator or an integer seed.  Selected records keep
    their input order.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    abnormal = [i for i, r in enumerate(records) if r.label == Label.ABNORMAL]
    normal = [i for i, r in enumerate(records) if r.label == Label.NORMAL]
    if len(normal) < len(abnormal):
        raise ValueError(
            f"cannot balance: {len(normal)} normal records for {len(abnormal)} abnormal"
        )
    chosen = rng.choice(len(normal), size=len(abnormal), replace=False)
    keep = sorted(abnormal + [normal[i] for i in chosen])
    return [records[i] for i in keep]


def stratified_folds(labels, k, rng):
    """Fold index for each record; classes are dealt round-robin after shuffling."""
    labels = np.asarray([int(Label.parse(v)) for v in labels])
    assignment = np.empty(len(labels), dtype=int)
    offset = 0
    for cls in (int(Label.ABNORMAL), int(Label.NORMAL)):
        idx = np.flatnonzero(labels == cls)
        if 0 < len(idx) < k:
            raise ValueError(f"need at least {k} records per class for {k}-fold CV")
        idx = idx[rng.permutation(len(idx))]
        assignment[idx] = (offset + np.arange(len(idx))) % k
        offset = (offset + len(idx)) % k
    return assignment


def _max_kkt(model):
    values = [m.info.get("kkt_violation") for m in getattr(model, "models", lambda: [])()]
    values = [v for v in values if v is not None]
    return max(values) if values else None


@dataclass
class CvRun:
    metrics: Metrics
    confusions: list
    fold_sizes: list
    max_kkt_violation: float = None


def cross_validate(records, k, strategy, config, rng):
    """One stratified k-fold pass over ``records``."""
    strategy = get_strategy(strategy)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    folds = stratified_folds([r.label for r in records], k, rng)
    confusions, sizes, kkt = [], [], []
    for f in range(k):
        test = [r for r, a in zip(records, folds) if a == f]
        train = [r for r, a in zip(records, folds) if a != f]
        model = strategy.fit(config, train)
        predicted = strategy.predict_many(model, test)
        confusions.append(ConfusionMatrix.from_labels([r.label for r in test], predicted))
        sizes.append(len(test))
        v = _max_kkt(model)
        if v is not None:
            kkt.append(v)
    return CvRun(mean_metrics(confusions), confusions, sizes, max(kkt) if kkt else None)


def kfold_cv(records, k, strategy, config, rng):
    return cross_validate(records, k, strategy, config, rng).metrics


@dataclass
class CvReport:
    strategy: str
    classifier: dict
    folds: int
    seed: int
    n_records: int
    run_metrics: list
    mean: Metrics
    ci95: dict
    rng: str = RNG_NAME
    diagnostics: dict = field(default_factory=dict)

    @property
    def classifier_name(self):
        return CLASSIFIER_NAMES.get(self.classifier.get("kind"), self.classifier.get("kind"))

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "classifier": self.classifier,
            "folds": self.folds,
            "runs": len(self.run_metrics),
            "seed": self.seed,
            "rng": self.rng,
            "n_records": self.n_records,
            "mean": self.mean.as_dict(),
            "ci95": self.ci95,
            "per_run": [dict(m.as_dict(), run=i, seed=[self.seed, i])
                        for i, m in enumerate(self.run_metrics)],
            "diagnostics": self.diagnostics,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_row(self):
        m, ci = self.mean, self.ci95
        return [self.classifier_name] + [f"{v:.2f}" for v in (
            m.acc, m.se, m.sp, m.macc, ci["acc"], ci["se"], ci["sp"])]


CSV_HEADER = ["classifier", "acc", "se", "sp", "macc", "acc_ci", "se_ci", "sp_ci"]


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def ci95_half_width(values):
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(Z_95 * values.std(ddof=1) / math.sqrt(len(values)))


def _one_run(args):
    records, folds, strategy, config, master_seed, run, balance = args
    rng = run_generator(master_seed, run)
    subset = balance_subset(records, rng) if balance else list(records)
    return cross_validate(subset, folds, strategy, config, rng), len(subset)


def repeated_cv(records, runs, strategy, config, master_seed, folds=10, balance=True,
                workers=1):
    """``runs`` independent balanced k-fold passes, summarised with 95% CIs."""
    strategy = get_strategy(strategy)
    if runs < 1 or folds < 2:
        raise ValueError("need runs >= 1 and folds >= 2")
    jobs = [(records, folds, strategy, config, master_seed, r, balance) for r in range(runs)]
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(job) for job in jobs]

    per_run = [res.metrics for res, _ in results]
    mean = Metrics(*(float(np.mean([getattr(m, a) for m in per_run])) for a in ("acc", "se", "sp")))
    ci = {a: ci95_half_width([getattr(m, a) for m in per_run]) for a in ("acc", "se", "sp")}
    ci["macc"] = ci95_half_width([m.macc for m in per_run])
    diagnostics = {}
    kkt = [res.max_kkt_violation for res, _ in results if res.max_kkt_violation is not None]
    if kkt:
        diagnostics["max_kkt_violation"] = max(kkt)
    cfg = config.as_dict() if isinstance(config, ClassifierConfig) else dict(config or {})
    return CvReport(strategy.name, cfg, folds, master_seed, results[0][1], per_run, mean, ci,
                    diagnostics=diagnostics)


def format_table(reports):
    lines = [f"{'Strategy':<9} {'Classifier':<10} {'Acc':>7} {'Se':>7} {'Sp':>7} {'MAcc':>7}"
             f"  {'Acc 95% CI':>17}"]
    for r in reports:
        m = r.mean
        lo, hi = m.acc - r.ci95["acc"], m.acc + r.ci95["acc"]
        lines.append(f"{r.strategy:<9} {r.classifier_name:<10} {m.acc:7.2f} {m.se:7.2f} "
                     f"{m.sp:7.2f} {m.macc:7.2f}  [{lo:6.2f}, {hi:6.2f}]")
    return "\n".join(lines)
