"""Command-line entry point: ``pcgscreen {features,evaluate,classify,synth}``."""
import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, classifiers
from .classifiers import ClassifierConfig
from .dataset_io import Label, decode_wav, filter_usable, load_manifest, load_record
from .errors import PcgError
from .evaluation import balance_subset, format_table, repeated_cv, reports_to_csv, run_generator
from .mfcc import N_FEATURES, feature_names
from .pipeline import (
    BEATS_PER_RECORD, ENSEMBLE, RecordFeatures, ensemble_votes, get_strategy, majority_vote,
    predict_single, process_signal, strategy_model_from_dict, strategy_model_to_dict,
)
from .preprocess import ANTI_ALIAS, BANDPASS_25_400, processed_length
from .segmentation import SegmenterConfig, load_external_segmentation
from .synth import write_dataset

log = logging.getLogger("pcgscreen")

FEATURES_FILE = "features.csv"
CACHE_VERSION = 1


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_segmentation(value):
    if value == "internal":
        return None
    if value.startswith("external:"):
        return value[len("external:"):]
    raise argparse.ArgumentTypeError("segmentation must be 'internal' or 'external:<dir>'")


def dsp_fingerprint(segmenter=SegmenterConfig()):
    return json.dumps({
        "cache_version": CACHE_VERSION,
        "bandpass": BANDPASS_25_400.__dict__,
        "anti_alias": ANTI_ALIAS.__dict__,
        "segmenter": segmenter.as_dict(),
    }, sort_keys=True)


def cache_key(wav_bytes, seg_bytes):
    h = hashlib.sha256()
    h.update(wav_bytes)
    h.update(dsp_fingerprint().encode())
    h.update(b"internal" if seg_bytes is None else b"external:" + seg_bytes)
    return h.hexdigest()


def _process_entry(args):
    """Worker: returns (id, label, n_beats, features) or (id, label, None, error)."""
    entry, seg_dir, cache_dir = args
    try:
        with open(entry.wav_path, "rb") as fh:
            wav_bytes = fh.read()
        seg_path = os.path.join(seg_dir, entry.id + ".txt") if seg_dir else None
        seg_bytes = None
        if seg_path:
            with open(seg_path, "rb") as fh:
                seg_bytes = fh.read()
        key = cache_key(wav_bytes, seg_bytes)
        cached = os.path.join(cache_dir, key + ".npz") if cache_dir else None
        if cached and os.path.exists(cached):
            with np.load(cached) as z:
                return entry.id, entry.label, int(z["n_beats"]), z["features"]

        record = load_record(entry)
        states = None
        if seg_path:
            n = processed_length(len(record.samples), record.sample_rate)
            states = load_external_segmentation(seg_path, n)
        result = process_signal(entry.id, record.samples, record.sample_rate, entry.label, states)
        if cached:
            os.makedirs(cache_dir, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".npz")
            with os.fdopen(fd, "wb") as fh:
                np.savez(fh, n_beats=result.n_beats, features=result.features)
            os.replace(tmp, cached)
        return entry.id, entry.label, result.n_beats, result.features
    except (PcgError, ValueError, OSError) as exc:
        return entry.id, entry.label, None, str(exc)


def compute_features(manifest, seg_dir=None, cache_dir=None, workers=1):
    """Run the DSP chain over a manifest; returns ({id: (n_beats, features)}, failures)."""
    jobs = [(e, seg_dir, cache_dir) for e in manifest if e.label != Label.UNCERTAIN]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_process_entry, jobs, chunksize=4))
    else:
        results = [_process_entry(j) for j in jobs]
    processed, failures = {}, {}
    for rid, _label, n_beats, payload in results:
        if n_beats is None:
            log.warning("%s: %s", rid, payload)
            failures[rid] = payload
        else:
            processed[rid] = (n_beats, payload)
    return processed, failures


def features_csv(records):
    lines = [",".join(["record", "beat"] + feature_names() + ["label"])]
    for rf in records:
        for i, row in enumerate(rf.beats, start=1):
            values = [repr(float(v)) for v in row]
            lines.append(",".join([rf.record_id, str(i)] + values + [rf.label.text]))
    return "\n".join(lines) + "\n"


def read_features_csv(path):
    rows = {}
    order = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["record", "beat"] + feature_names() + ["label"]
        if header != expected:
            raise PcgError(f"{path}: unexpected header")
        for row in reader:
            rid = row[0]
            if rid not in rows:
                rows[rid] = {"beats": {}, "label": Label.parse(row[-1])}
                order.append(rid)
            rows[rid]["beats"][int(row[1])] = [float(v) for v in row[2:2 + N_FEATURES]]
    records = []
    for rid in order:
        beats = rows[rid]["beats"]
        if sorted(beats) != list(range(1, BEATS_PER_RECORD + 1)):
            raise PcgError(f"{path}: record {rid} does not have beats 1..{BEATS_PER_RECORD}")
        matrix = np.array([beats[i] for i in range(1, BEATS_PER_RECORD + 1)])
        records.append(RecordFeatures(rid, matrix, rows[rid]["label"]))
    return records


def build_dataset(args):
    """Manifest -> usable RecordFeatures, plus a JSON-able summary."""
    manifest = load_manifest(args.data_root, args.subsets)
    cache_dir = None if args.no_cache else (args.cache_dir or os.path.join(args.output, "cache"))
    processed, failures = compute_features(manifest, args.segmentation, cache_dir, args.workers)
    usable = filter_usable(
        manifest, args.min_beats,
        lambda e: processed[e.id][0] if e.id in processed else -1,
    )
    usable = type(usable)([e for e in usable if e.id in processed],
                          usable.source_subsets, usable.errors)
    records = [RecordFeatures(e.id, processed[e.id][1], e.label, processed[e.id][0])
               for e in usable]
    summary = {
        "manifest": manifest.summary(),
        "processed": len(processed),
        "failed": dict(sorted(failures.items())),
        "usable": usable.class_counts(),
        "min_beats": args.min_beats,
    }
    return records, summary


def cmd_features(args):
    records, summary = build_dataset(args)
    if not records and summary["processed"] == 0:
        log.error("no record could be processed")
        return 1
    atomic_write(os.path.join(args.output, FEATURES_FILE), features_csv(records))
    atomic_write(os.path.join(args.output, "dataset_summary.json"),
                 json.dumps(summary, indent=2, sort_keys=True) + "\n")
    c = summary["usable"]
    print(f"{len(records)} usable records ({c['Abnormal']} abnormal, {c['Normal']} normal) "
          f"-> {os.path.join(args.output, FEATURES_FILE)}")
    return 0


def classifier_configs(args):
    kinds = ["knn", "svm", "dt"] if args.classifier == "all" else [args.classifier]
    return [ClassifierConfig(kind=kind, k=args.k, kernel=args.kernel, svm_C=args.C,
                             poly_degree=args.degree, gamma=args.gamma,
                             dt_min_leaf=args.min_leaf, dt_max_depth=args.max_depth)
            for kind in kinds]


def cmd_evaluate(args):
    if args.features:
        records = read_features_csv(args.features)
    elif args.data_root:
        records, summary = build_dataset(args)
        atomic_write(os.path.join(args.output, "dataset_summary.json"),
                     json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        raise PcgError("evaluate needs --features or --data-root")
    if not records:
        raise PcgError("no usable records to evaluate")

    strategies = ["single", "ensemble"] if args.strategy == "both" else [args.strategy]
    reports = []
    for name in strategies:
        for config in classifier_configs(args):
            log.info("evaluating %s / %s over %d runs", name, config.describe(), args.runs)
            report = repeated_cv(records, args.runs, name, config, args.seed, folds=args.folds,
                                 balance=not args.no_balance, workers=args.workers)
            reports.append(report)
            atomic_write(os.path.join(args.output, f"report_{name}_{config.kind}.json"),
                         report.to_json())
    for name in strategies:
        subset = [r for r in reports if r.strategy == name]
        atomic_write(os.path.join(args.output, f"summary_{name}.csv"), reports_to_csv(subset))
    print(format_table(reports))

    if args.save_model:
        if len(reports) != 1:
            raise PcgError("--save-model needs a single strategy and classifier")
        config = classifier_configs(args)[0]
        strategy = get_strategy(strategies[0])
        train = records if args.no_balance else balance_subset(records,
                                                               run_generator(args.seed, 0))
        model = strategy.fit(config, train)
        classifiers.save_model(args.save_model, strategy_model_to_dict(model))
        print(f"model written to {args.save_model}")
    return 0


def cmd_classify(args):
    doc = classifiers.load_model_file(args.model)
    model = strategy_model_from_dict(doc)
    samples, rate = decode_wav(args.wav)
    states = None
    if args.states:
        n = processed_length(len(samples), rate)
        states = load_external_segmentation(args.states, n)
    rid = os.path.splitext(os.path.basename(args.wav))[0]
    processed = process_signal(rid, samples, rate, Label.NORMAL, states)
    rf = processed.record_features()
    if model.strategy == ENSEMBLE.name:
        votes = ensemble_votes(model, rf)
        verdict = majority_vote(votes)
        print(verdict.text.lower())
        print("votes: " + " ".join(v.text.lower() for v in votes))
    else:
        print(predict_single(model, rf).text.lower())
    return 0


def cmd_synth(args):
    rows = write_dataset(args.output, args.records, args.seed, args.duration)
    n_ab = sum(1 for _, label in rows if label == int(Label.ABNORMAL))
    print(f"{len(rows)} synthetic records ({n_ab} abnormal) written to {args.output}")
    return 0


def _add_data_args(p):
    p.add_argument("--data-root", help="directory of challenge-style subset folders")
    p.add_argument("--subsets", type=lambda s: [x for x in s.split(",") if x],
                   help="comma-separated subset names to load (default: all)")
    p.add_argument("--segmentation", type=parse_segmentation, default=None,
                   metavar="internal|external:DIR",
                   help="use the internal segmenter or per-record label files DIR/<id>.txt")
    p.add_argument("--min-beats", type=int, default=9)
    p.add_argument("--cache-dir", help="feature cache (default: OUTPUT/cache)")
    p.add_argument("--no-cache", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="pcgscreen", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="TOML file of defaults; command-line flags win")
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: available cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="compute per-beat MFCC features")
    _add_data_args(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("evaluate", help="repeated cross-validation of a strategy")
    _add_data_args(p)
    p.add_argument("--features", help="features.csv written by the features command")
    p.add_argument("--strategy", choices=["single", "ensemble", "both"], default="both")
    p.add_argument("--classifier", choices=["knn", "svm", "dt", "all"], default="all")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--kernel", choices=["linear", "gaussian", "polynomial"],
                   default="polynomial")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-balance", action="store_true",
                   help="use every record instead of a balanced random subset per run")
    p.add_argument("--save-model", help="also fit on a balanced subset and write the model")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="classify one recording with a saved model")
    p.add_argument("wav")
    p.add_argument("--model", required=True)
    p.add_argument("--states", help="external segmentation file for this recording")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("synth", help="generate a labelled synthetic dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--records", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=12.0)
    p.set_defaults(func=cmd_synth)
    return parser


def _apply_config(parser, argv):
    """Merge a TOML config under the command-line flags.

    Top-level keys apply to every command that has the flag; a
    ``[evaluate]`` (etc.) table applies to that command only.  Keys use flag
    names (``min-beats`` or ``min_beats``).
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    commands = subparsers.choices
    global_dests = {a.dest for a in parser._actions}

    def convert(dest, value):
        if dest == "segmentation" and isinstance(value, str):
            return parse_segmentation(value)
        if dest == "subsets" and isinstance(value, str):
            return [x for x in value.split(",") if x]
        return value

    per_command = {name: {} for name in commands}
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in commands:
                parser.error(f"{known.config}: unknown command table [{key}]")
            sp_dests = {a.dest for a in commands[key]._actions}
            for k, v in value.items():
                dest = k.replace("-", "_")
                if dest not in sp_dests:
                    parser.error(f"{known.config}: unknown setting {k!r} in [{key}]")
                per_command[key][dest] = convert(dest, v)
            continue
        dest = key.replace("-", "_")
        if dest in global_dests:
            parser.set_defaults(**{dest: value})
            continue
        targets = [n for n, sp in commands.items() if dest in {a.dest for a in sp._actions}]
        if not targets:
            parser.error(f"{known.config}: unknown setting {key!r}")
        for name in targets:
            per_command[name].setdefault(dest, convert(dest, value))
    for name, defaults in per_command.items():
        sp = commands[name]
        sp.set_defaults(**defaults)
        for action in sp._actions:
            if action.dest in defaults and action.required:
                action.required = False


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    _apply_config(parser, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "output", None) is None and args.command in ("features", "evaluate", "synth"):
        parser.error("--output is required")
    if args.command == "features" and not args.data_root:
        parser.error("features needs --data-root")
    for name in ("runs", "folds", "workers", "records"):
        if getattr(args, name, 1) < 1:
            parser.error(f"--{name} must be positive")
    try:
        return args.func(args)
    except PcgError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
