"""Loading PhysioNet/CinC 2016 style recordings and their reference labels.

Expected layout::

    root/
      training-b/
        REFERENCE.csv        # id,label  (label -1 normal, 1 abnormal)
        REFERENCE-SQI.csv    # optional: id,[label,]quality  (quality 0 -> uncertain)
        b0001.wav
        ...

A root that itself holds a REFERENCE.csv is treated as a single subset.
"""
import csv
import enum
import logging
import os
import wave
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DecodeError, ManifestError

log = logging.getLogger(__name__)

REFERENCE_FILE = "REFERENCE.csv"
QUALITY_FILE = "REFERENCE-SQI.csv"


class Label(enum.IntEnum):
    NORMAL = -1
    UNCERTAIN = 0
    ABNORMAL = 1

    @property
    def text(self):
        return self.name.capitalize()

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            s = value.strip()
            try:
                return cls(int(s))
            except ValueError:
                pass
            try:
                return cls[s.upper()]
            except KeyError:
                raise ValueError(f"unknown label {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class PcgRecord:
    id: str
    samples: np.ndarray
    sample_rate: float
    label: Label

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError(f"{self.id}: empty recording")
        if self.sample_rate <= 0:
            raise ValueError(f"{self.id}: sample rate must be positive")
        object.__setattr__(self, "label", Label.parse(self.label))

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    wav_path: str
    label: Label
    quality: int = 1
    subset: str = ""


@dataclass
class DatasetManifest:
    records: list
    source_subsets: set = field(default_factory=set)
    errors: list = field(default_factory=list)

    def __post_init__(self):
        counts = Counter(e.id for e in self.records)
        dupes = sorted(k for k, v in counts.items() if v > 1)
        if dupes:
            raise ManifestError(f"duplicate record ids: {', '.join(dupes[:5])}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def class_counts(self):
        counts = Counter(e.label.text for e in self.records)
        return {label.text: counts.get(label.text, 0) for label in Label}

    def summary(self):
        per_subset = {}
        for e in self.records:
            sub = per_subset.setdefault(e.subset, {label.text: 0 for label in Label})
            sub[e.label.text] += 1
        return {
            "records": len(self.records),
            "classes": self.class_counts(),
            "subsets": {k: per_subset[k] for k in sorted(per_subset)},
            "errors": list(self.errors),
        }


def _subset_name(dirname):
    return dirname[len("training-"):] if dirname.startswith("training-") else dirname


def _read_rows(path):
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row and row[0].strip()]


def _load_subset(path, name, errors):
    ref = os.path.join(path, REFERENCE_FILE)
    if not os.path.isfile(ref):
        raise ManifestError(f"subset {name!r}: missing {REFERENCE_FILE}")
    quality = {}
    sqi = os.path.join(path, QUALITY_FILE)
    if os.path.isfile(sqi):
        for row in _read_rows(sqi):
            try:
                quality[row[0].strip()] = int(row[-1])
            except ValueError:
                continue  # header line
    entries = []
    for i, row in enumerate(_read_rows(ref)):
        rid = row[0].strip()
        try:
            label = Label(int(row[1]))
        except (ValueError, IndexError):
            if i == 0:
                continue  # header line
            raise ManifestError(f"subset {name!r}: bad label row {row!r}") from None
        q = quality.get(rid, 1)
        if q == 0:
            label = Label.UNCERTAIN
        wav_path = os.path.join(path, rid + ".wav")
        if not os.path.isfile(wav_path):
            errors.append(f"{name}/{rid}: missing {rid}.wav")
            continue
        entries.append(ManifestEntry(rid, wav_path, label, q, name))
    return entries


def load_manifest(root_dir, subsets=None):
    """Index every labelled recording under ``root_dir``.

    ``subsets`` optionally restricts loading to the named subsets
    (``"b"`` or ``"training-b"`` both work).
    """
    if not os.path.isdir(root_dir):
        raise ManifestError(f"{root_dir}: not a directory")
    wanted = None if subsets is None else {_subset_name(s) for s in subsets}
    errors = []
    records = []
    names = set()
    if os.path.isfile(os.path.join(root_dir, REFERENCE_FILE)):
        name = _subset_name(os.path.basename(os.path.normpath(root_dir)))
        records.extend(_load_subset(root_dir, name, errors))
        names.add(name)
    else:
        for dirname in sorted(os.listdir(root_dir)):
            path = os.path.join(root_dir, dirname)
            if not os.path.isdir(path):
                continue
            name = _subset_name(dirname)
            if wanted is not None and name not in wanted:
                continue
            has_wav = any(f.endswith(".wav") for f in os.listdir(path))
            if not has_wav:
                continue
            records.extend(_load_subset(path, name, errors))
            names.add(name)
    if wanted is not None and wanted - names:
        raise ManifestError(f"subsets not found: {', '.join(sorted(wanted - names))}")
    for msg in errors:
        log.warning(msg)
    return DatasetManifest(records, names, errors)


def decode_wav(path):
    """Read a mono PCM WAV file; returns (samples in [-1, 1], sample_rate)."""
    try:
        with wave.open(path, "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            n = w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise DecodeError(f"{path}: {exc}") from None
    if channels != 1:
        raise DecodeError(f"{path}: expected mono audio, got {channels} channels")
    if len(raw) != n * width:
        raise DecodeError(f"{path}: truncated data ({len(raw)} of {n * width} bytes)")
    if width == 1:
        samples = (np.frombuffer(raw, dtype=np.uint8).astype(float) - 128.0) / 128.0
    elif width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    elif width == 4:
        samples = np.frombuffer(raw, dtype="<i4").astype(float) / 2147483648.0
    else:
        raise DecodeError(f"{path}: unsupported sample width of {width} bytes")
    return samples, rate


def load_record(entry):
    samples, rate = decode_wav(entry.wav_path)
    if len(samples) == 0:
        raise DecodeError(f"{entry.wav_path}: no samples")
    return PcgRecord(entry.id, samples, rate, entry.label)


def write_wav(path, samples, sample_rate):
    """Write 16-bit mono PCM; ``samples`` are clipped to [-1, 1)."""
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())


def filter_usable(manifest, min_beats, beat_counter):
    """Drop uncertain records and those with fewer than ``min_beats`` beats."""
    kept = []
    for entry in manifest.records:
        if entry.label == Label.UNCERTAIN:
            continue
        if min_beats > 0 and beat_counter(entry) < min_beats:
            continue
        kept.append(entry)
    result = DatasetManifest(kept, set(manifest.source_subsets), list(manifest.errors))
    counts = result.class_counts()
    log.info(
        "usable records: %d (%d abnormal, %d normal)",
        len(kept), counts["Abnormal"], counts["Normal"],
    )
    return result
