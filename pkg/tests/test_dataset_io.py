import wave

import numpy as np
import pytest

from pcgscreen.dataset_io import (
    DatasetManifest, Label, ManifestEntry, PcgRecord, decode_wav, filter_usable, load_manifest,
    load_record, write_wav,
)
from pcgscreen.errors import DecodeError, ManifestError


def write_pcm(path, frames, width=2, channels=1, rate=2000):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(frames)


def make_subset(root, name, rows, sqi=None, wavs=None):
    d = root / name
    d.mkdir(parents=True)
    (d / "REFERENCE.csv").write_text("".join(f"{rid},{lab}\n" for rid, lab in rows))
    if sqi is not None:
        (d / "REFERENCE-SQI.csv").write_text("".join(f"{rid},{q}\n" for rid, q in sqi))
    for rid, _ in rows:
        if wavs is None or rid in wavs:
            write_wav(str(d / f"{rid}.wav"), np.zeros(100), 2000)
    return d


def test_label_mapping(tmp_path):
    make_subset(tmp_path, "training-a", [("a0001", 1), ("a0002", -1)])
    m = load_manifest(str(tmp_path))
    assert [(e.id, e.label) for e in m.records] == [("a0001", Label.ABNORMAL),
                                                    ("a0002", Label.NORMAL)]
    assert m.source_subsets == {"a"}


def test_quality_zero_marks_uncertain(tmp_path):
    make_subset(tmp_path, "training-b", [("b1", 1), ("b2", -1), ("b3", -1)],
                sqi=[("b1", 1), ("b2", 0), ("b3", 1)])
    m = load_manifest(str(tmp_path))
    assert [e.label for e in m.records] == [Label.ABNORMAL, Label.UNCERTAIN, Label.NORMAL]
    assert m.class_counts() == {"Normal": 1, "Uncertain": 1, "Abnormal": 1}


def test_header_row_tolerated(tmp_path):
    d = make_subset(tmp_path, "c", [("c1", 1)])
    (d / "REFERENCE.csv").write_text("record,label\nc1,1\n")
    assert [e.id for e in load_manifest(str(tmp_path)).records] == ["c1"]


def test_bad_label_row_after_header_is_an_error(tmp_path):
    d = make_subset(tmp_path, "c", [("c1", 1)])
    (d / "REFERENCE.csv").write_text("c1,1\nc2,maybe\n")
    with pytest.raises(ManifestError):
        load_manifest(str(tmp_path))


def test_missing_wav_collected_not_fatal(tmp_path):
    make_subset(tmp_path, "training-d", [("d1", 1), ("d2", -1)], wavs={"d1"})
    m = load_manifest(str(tmp_path))
    assert [e.id for e in m.records] == ["d1"]
    assert len(m.errors) == 1 and "d2" in m.errors[0]


def test_missing_label_file_names_subset(tmp_path):
    d = tmp_path / "training-e"
    d.mkdir()
    write_wav(str(d / "e1.wav"), np.zeros(10), 2000)
    with pytest.raises(ManifestError, match="'e'"):
        load_manifest(str(tmp_path))


def test_subset_selection(tmp_path):
    make_subset(tmp_path, "training-b", [("b1", 1)])
    make_subset(tmp_path, "training-c", [("c1", -1)])
    assert [e.id for e in load_manifest(str(tmp_path), ["c"]).records] == ["c1"]
    assert [e.id for e in load_manifest(str(tmp_path), ["training-b"]).records] == ["b1"]
    with pytest.raises(ManifestError):
        load_manifest(str(tmp_path), ["z"])


def test_flat_root_is_one_subset(tmp_path):
    d = make_subset(tmp_path, "training-f", [("f1", 1)])
    m = load_manifest(str(d))
    assert m.source_subsets == {"f"}


def test_duplicate_ids_rejected():
    e = ManifestEntry("x", "x.wav", Label.NORMAL, 1, "a")
    with pytest.raises(ManifestError):
        DatasetManifest([e, e], {"a"})


def test_summary_counts(tmp_path):
    make_subset(tmp_path, "training-b", [("b1", 1), ("b2", -1)])
    s = load_manifest(str(tmp_path)).summary()
    assert s["records"] == 2
    assert s["subsets"]["b"] == {"Normal": 1, "Uncertain": 0, "Abnormal": 1}


def test_manifest_loading_is_deterministic(tmp_path):
    make_subset(tmp_path, "training-b", [("b2", 1), ("b1", -1)])
    make_subset(tmp_path, "training-a", [("a1", 1)])
    a = load_manifest(str(tmp_path))
    b = load_manifest(str(tmp_path))
    assert a.records == b.records


def test_pcm16_scaling(tmp_path):
    path = tmp_path / "x.wav"
    write_pcm(path, np.array([32767, 0, -32768], dtype="<i2").tobytes())
    samples, rate = decode_wav(str(path))
    assert rate == 2000
    assert samples.tolist() == [32767 / 32768, 0.0, -1.0]


def test_pcm8_scaling(tmp_path):
    path = tmp_path / "x.wav"
    write_pcm(path, bytes([128, 255, 0]), width=1)
    samples, _ = decode_wav(str(path))
    assert samples.tolist() == [0.0, 127 / 128, -1.0]


def test_ten_second_recording_length(tmp_path):
    path = tmp_path / "x.wav"
    write_wav(str(path), np.zeros(20000), 2000)
    samples, rate = decode_wav(str(path))
    assert len(samples) == 20000 and rate == 2000


def test_write_read_round_trip(tmp_path):
    x = np.random.default_rng(0).uniform(-1, 1, 500)
    path = tmp_path / "x.wav"
    write_wav(str(path), x, 1000)
    y, _ = decode_wav(str(path))
    assert np.abs(x - y).max() <= 1 / 32768


def test_stereo_rejected(tmp_path):
    path = tmp_path / "x.wav"
    write_pcm(path, np.zeros(4, dtype="<i2").tobytes(), channels=2)
    with pytest.raises(DecodeError, match="mono"):
        decode_wav(str(path))


def test_unsupported_width_rejected(tmp_path):
    path = tmp_path / "x.wav"
    write_pcm(path, bytes(9), width=3)
    with pytest.raises(DecodeError, match="width"):
        decode_wav(str(path))


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "x.wav"
    write_wav(str(path), np.zeros(1000), 2000)
    data = path.read_bytes()
    path.write_bytes(data[:-500])
    with pytest.raises(DecodeError):
        decode_wav(str(path))


def test_not_a_wav_rejected(tmp_path):
    path = tmp_path / "x.wav"
    path.write_bytes(b"hello world, not audio at all")
    with pytest.raises(DecodeError):
        decode_wav(str(path))


def test_load_record(tmp_path):
    make_subset(tmp_path, "training-a", [("a1", -1)])
    entry = load_manifest(str(tmp_path)).records[0]
    rec = load_record(entry)
    assert rec.id == "a1" and rec.label == Label.NORMAL and rec.sample_rate == 2000
    assert rec.duration == pytest.approx(0.05)


def test_record_invariants():
    with pytest.raises(ValueError):
        PcgRecord("x", np.array([]), 2000, Label.NORMAL)
    with pytest.raises(ValueError):
        PcgRecord("x", np.zeros(3), 0, Label.NORMAL)


def _manifest(labels_and_beats):
    entries = [ManifestEntry(f"r{i}", f"r{i}.wav", Label(lab), 1, "a")
               for i, (lab, _) in enumerate(labels_and_beats)]
    beats = {e.id: b for e, (_, b) in zip(entries, labels_and_beats)}
    return DatasetManifest(entries, {"a"}), (lambda e: beats[e.id])


def test_filter_usable_rules():
    m, counter = _manifest([(1, 9), (-1, 8), (0, 20), (-1, 15), (1, 0)])
    out = filter_usable(m, 9, counter)
    assert [e.id for e in out.records] == ["r0", "r3"]
    assert out.class_counts() == {"Normal": 1, "Uncertain": 0, "Abnormal": 1}


def test_filter_usable_identity_with_zero_threshold():
    m, counter = _manifest([(1, 0), (-1, 3)])
    out = filter_usable(m, 0, counter)
    assert out.records == m.records


def test_filter_usable_subset_and_counts():
    rng = np.random.default_rng(1)
    rows = [(int(rng.choice([-1, 0, 1])), int(rng.integers(0, 20))) for _ in range(200)]
    m, counter = _manifest(rows)
    out = filter_usable(m, 9, counter)
    assert set(out.records) <= set(m.records)
    assert all(e.label != Label.UNCERTAIN for e in out.records)
    counts = out.class_counts()
    assert counts["Normal"] + counts["Abnormal"] == len(out.records)


def test_label_parse():
    assert Label.parse("Abnormal") == Label.ABNORMAL
    assert Label.parse("-1") == Label.NORMAL
    assert Label.parse(0) == Label.UNCERTAIN
    assert Label.NORMAL.text == "Normal"
    with pytest.raises(ValueError):
        Label.parse("sick")
