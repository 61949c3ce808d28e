import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drow.dataio import (AnnotatedFrame, Annotation, DataFormatError, Klass, load_directory,
                         load_scans,
                         load_sequence, parse_annotation_line, parse_scan_line, split,
                         validate_annotations, write_sequence)
from drow.geometry import Scan


def _scan_line(seq, ts, ranges):
    return f"{seq},{ts}," + ",".join(f"{r}" for r in ranges)


def test_load_sequence_example(tmp_path, sensor):
    ranges = [2.31] * 450
    (tmp_path / "a.csv").write_text(_scan_line(1203, 1490.3, ranges) + "\n"
                                    + _scan_line(1204, 1490.4, ranges) + "\n")
    (tmp_path / "a.wc").write_text("1203,[[1.5,0.2]]\n")
    (tmp_path / "a.wa").write_text("1203,[]\n1204,[]\n")
    frames = load_sequence(tmp_path / "a.csv")
    assert [f.scan.seq_id for f in frames] == [1203, 1204]
    f0, f1 = frames
    assert f0.annotations == [Annotation(Klass.WHEELCHAIR, (1.5, 0.2))]
    assert f0.scan.timestamp == 1490.3 and f0.sequence == "a"
    assert f1.annotations == []


def test_unannotated_scans_are_skipped(tmp_path):
    (tmp_path / "a.csv").write_text(_scan_line(1, 0.0, [3.0] * 450) + "\n"
                                    + _scan_line(2, 0.1, [3.0] * 450) + "\n")
    (tmp_path / "a.wc").write_text("2,[]\n")
    assert [f.scan.seq_id for f in load_sequence(tmp_path / "a.csv")] == [2]


def test_explicit_annotation_paths(tmp_path):
    (tmp_path / "s.csv").write_text(_scan_line(7, 0.0, [3.0] * 450) + "\n")
    (tmp_path / "other.wa").write_text("7,[[2.0,-1.0]]\n")
    frames = load_sequence(tmp_path / "s.csv", [tmp_path / "other.wa"])
    assert frames[0].annotations == [Annotation(Klass.WALKER, (2.0, -1.0))]


def test_beam_count_error(sensor):
    with pytest.raises(DataFormatError, match="expected 450 ranges, got 449"):
        parse_scan_line(_scan_line(1, 0.0, [1.0] * 449), sensor)


def test_malformed_value_names_file_line_column(tmp_path, sensor):
    vals = ["1.0"] * 450
    vals[3] = "x"
    line = "5,0.0," + ",".join(vals)
    p = tmp_path / "bad.csv"
    p.write_text(_scan_line(4, 0.0, [1.0] * 450) + "\n" + line + "\n")
    with pytest.raises(DataFormatError) as e:
        load_scans(p, sensor)
    err = e.value
    assert err.path == str(p) and err.line == 2
    assert line[err.column - 1] == "x"
    assert f"{p}:2:{err.column}" in str(err)


def test_annotation_line_errors():
    assert parse_annotation_line("3,[[1,2],[3.5,-4]]") == (3, [(1.0, 2.0), (3.5, -4.0)])
    with pytest.raises(DataFormatError):
        parse_annotation_line("3 [[1,2]]")
    with pytest.raises(DataFormatError):
        parse_annotation_line("x,[]")
    with pytest.raises(DataFormatError):
        parse_annotation_line("3,[[1,2,3]]")
    with pytest.raises(DataFormatError):
        parse_annotation_line("3,[[1,2]")


def test_out_of_range_values_sanitized(sensor):
    ranges = [5.0] * 450
    ranges[0], ranges[1], ranges[2] = 0.0, 100.0, float("nan")
    s = parse_scan_line(_scan_line(1, 0.0, ranges), sensor)
    assert s.ranges[0] == s.ranges[1] == s.ranges[2] == sensor.range_max
    assert np.all(s.ranges[3:] == 5.0)


def test_same_class_duplicates_rejected(tmp_path):
    with pytest.raises(ValueError):
        validate_annotations([Annotation(Klass.WALKER, (1.0, 1.0)),
                              Annotation(Klass.WALKER, (1.05, 1.0))])
    # different classes may overlap
    validate_annotations([Annotation(Klass.WALKER, (1.0, 1.0)),
                          Annotation(Klass.WHEELCHAIR, (1.05, 1.0))])
    (tmp_path / "d.csv").write_text(_scan_line(1, 0.0, [3.0] * 450) + "\n")
    (tmp_path / "d.wc").write_text("1,[[1,1],[1.01,1]]\n")
    with pytest.raises(DataFormatError):
        load_sequence(tmp_path / "d.csv")


def _frames(rng, n, seq="s"):
    out = []
    for i in range(n):
        anns = [Annotation(Klass.WHEELCHAIR, (float(rng.uniform(1, 5)), float(rng.uniform(-2, 2))))]
        if i % 2:
            anns.append(Annotation(Klass.WALKER, (float(rng.uniform(-5, -1)), 0.25)))
        out.append(AnnotatedFrame(Scan(rng.uniform(0.05, 30, 450), i, i * 0.077), anns, seq))
    return out


def test_round_trip(tmp_path, rng):
    frames = _frames(rng, 6, "seq1")
    write_sequence(frames, tmp_path / "seq1.csv")
    back = load_sequence(tmp_path / "seq1.csv")
    assert len(back) == len(frames)
    for a, b in zip(frames, back):
        assert a.scan.seq_id == b.scan.seq_id and a.scan.timestamp == b.scan.timestamp
        assert np.max(np.abs(a.scan.ranges - b.scan.ranges)) <= 5e-5 + 1e-12
        assert a.annotations == b.annotations
    assert len(load_directory(tmp_path)) == 6


def _seq_frames(names):
    return [AnnotatedFrame(Scan(np.ones(4)), [], n) for n in names for _ in range(3)]


def test_split_counts():
    frames = _seq_frames([f"s{i}" for i in range(10)])
    tr, va, te = split(frames, (0.8, 0.1, 0.1), seed=0)
    assert [len({f.sequence for f in p}) for p in (tr, va, te)] == [8, 1, 1]
    tr, va, te = split(frames, (1, 0, 0), seed=0)
    assert len(tr) == len(frames) and not va and not te


def test_split_deterministic_and_too_few():
    frames = _seq_frames(["a", "b", "c", "d"])
    assert split(frames, (0.5, 0.25, 0.25), 3) == split(frames, (0.5, 0.25, 0.25), 3)
    with pytest.raises(ValueError):
        split(_seq_frames(["a", "b"]), (0.8, 0.1, 0.1), 0)
    with pytest.raises(ValueError):
        split(frames, (0.5, 0.5, 0.5), 0)


@given(st.integers(1, 30), st.lists(st.floats(0, 1), min_size=3, max_size=3), st.integers(0, 99))
@settings(max_examples=100, deadline=None)
def test_split_is_sequence_level_partition(n_seq, raw, seed):
    total = sum(raw)
    if total == 0:
        return
    fractions = [r / total for r in raw]
    fractions[2] = 1 - fractions[0] - fractions[1]
    if fractions[2] < 0:
        return
    frames = _seq_frames([f"q{i}" for i in range(n_seq)])
    try:
        parts = split(frames, fractions, seed)
    except ValueError:
        assert n_seq < sum(f > 0 for f in fractions)
        return
    ids = [id(f) for p in parts for f in p]
    assert sorted(ids) == sorted(id(f) for f in frames)
    seqs = [{f.sequence for f in p} for p in parts]
    assert not (seqs[0] & seqs[1]) and not (seqs[0] & seqs[2]) and not (seqs[1] & seqs[2])
    for frac, p in zip(fractions, parts):
        if frac > 0:
            assert p
