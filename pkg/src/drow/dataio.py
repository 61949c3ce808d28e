"""Annotated scan files and dataset splits.

File layout, one sequence per scan file::

    name.csv   seq,timestamp,r0,...,r{N-1}
    name.wc    seq,[[x,y],...]      wheelchair centers, sensor frame, meters
    name.wa    seq,[[x,y],...]      walker centers

Only scans that appear in at least one annotation file are returned by
:func:`load_sequence`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .geometry import Scan, SensorConfig, sanitize_ranges


class Klass(IntEnum):
    BACKGROUND = 0
    WHEELCHAIR = 1
    WALKER = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, name) -> "Klass":
        if isinstance(name, cls):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        return cls[str(name).upper()]


OBJECT_CLASSES = (Klass.WHEELCHAIR, Klass.WALKER)
ANNOTATION_EXT = {Klass.WHEELCHAIR: ".wc", Klass.WALKER: ".wa"}
MIN_SAME_CLASS_SEPARATION = 0.1


class DataFormatError(ValueError):
    """A scan or annotation file could not be parsed."""

    def __init__(self, path, line: int, column: int, message: str):
        super().__init__(f"{path}:{line}:{column}: {message}")
        self.path, self.line, self.column = str(path), line, column


@dataclass(frozen=True)
class Annotation:
    klass: Klass
    position: tuple


@dataclass
class AnnotatedFrame:
    scan: Scan
    annotations: list = field(default_factory=list)
    sequence: str = ""

    def positions(self, klass: Klass | None = None) -> np.ndarray:
        pts = [a.position for a in self.annotations if klass is None or a.klass == klass]
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    def classes(self) -> np.ndarray:
        return np.array([int(a.klass) for a in self.annotations], dtype=np.int64)


def validate_annotations(annotations, cfg: SensorConfig | None = None):
    """Raise ValueError on same-class duplicates closer than 0.1 m or out-of-range centers."""
    for k in OBJECT_CLASSES:
        pts = [np.asarray(a.position) for a in annotations if a.klass == k]
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.hypot(*(pts[i] - pts[j])) < MIN_SAME_CLASS_SEPARATION:
                    raise ValueError(f"two {k.label} annotations closer than "
                                     f"{MIN_SAME_CLASS_SEPARATION} m: {pts[i]}, {pts[j]}")
    if cfg is not None:
        for a in annotations:
            d = math.hypot(*a.position)
            if not cfg.range_min <= d <= cfg.range_max:
                raise ValueError(f"annotation at {a.position} outside sensor range")


# -- parsing -----------------------------------------------------------------

def _column_of(line: str, field_index: int) -> int:
    """1-based character column where comma-separated field ``field_index`` starts."""
    col = 1
    for _ in range(field_index):
        nxt = line.find(",", col - 1)
        if nxt < 0:
            break
        col = nxt + 2
    return col


def parse_scan_line(line: str, cfg: SensorConfig, path="<string>", lineno: int = 1) -> Scan:
    parts = line.strip().split(",")
    if len(parts) != cfg.num_beams + 2:
        raise DataFormatError(path, lineno, 1,
                              f"expected {cfg.num_beams} ranges, got {max(len(parts) - 2, 0)}")
    try:
        seq = int(parts[0])
    except ValueError:
        raise DataFormatError(path, lineno, 1, f"bad sequence number {parts[0]!r}") from None
    values = []
    for k, tok in enumerate(parts[1:], start=1):
        try:
            values.append(float(tok))
        except ValueError:
            raise DataFormatError(path, lineno, _column_of(line, k),
                                  f"bad number {tok!r}") from None
    return Scan(sanitize_ranges(values[1:], cfg), seq, values[0])


def parse_annotation_positions(text: str):
    """Parse the ``[[x,y],...]`` payload of an annotation line into (x, y) tuples.

    Coordinates are Cartesian in the sensor frame.  Kept separate so another
    coordinate convention only touches this function.
    """
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValueError("annotation payload must be a list")
    out = []
    for item in data:
        if not (isinstance(item, list) and len(item) == 2
                and all(isinstance(v, (int, float)) for v in item)):
            raise ValueError(f"bad annotation entry {item!r}")
        out.append((float(item[0]), float(item[1])))
    return out


def parse_annotation_line(line: str, path="<string>", lineno: int = 1):
    line = line.strip()
    head, sep, payload = line.partition(",")
    if not sep:
        raise DataFormatError(path, lineno, 1, "missing ',' after sequence number")
    try:
        seq = int(head)
    except ValueError:
        raise DataFormatError(path, lineno, 1, f"bad sequence number {head!r}") from None
    try:
        return seq, parse_annotation_positions(payload)
    except json.JSONDecodeError as e:
        raise DataFormatError(path, lineno, len(head) + 1 + e.colno, e.msg) from None
    except ValueError as e:
        raise DataFormatError(path, lineno, len(head) + 2, str(e)) from None


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip() and not line.lstrip().startswith("#"):
                yield lineno, line


def load_scans(path, cfg: SensorConfig) -> list:
    return [parse_scan_line(line, cfg, path, n) for n, line in _read_lines(path)]


def load_annotations(path) -> dict:
    out = {}
    for n, line in _read_lines(path):
        seq, pts = parse_annotation_line(line, path, n)
        out[seq] = pts
    return out


def load_sequence(scan_path, annotation_paths=None, cfg: SensorConfig | None = None) -> list:
    """Load one recorded sequence.

    ``annotation_paths`` maps classes to files; by default the ``.wc``/``.wa``
    siblings of ``scan_path`` are used when they exist.
    """
    cfg = cfg or SensorConfig()
    scan_path = Path(scan_path)
    if annotation_paths is None:
        annotation_paths = {k: scan_path.with_suffix(ext) for k, ext in ANNOTATION_EXT.items()}
        annotation_paths = {k: p for k, p in annotation_paths.items() if p.exists()}
    elif not isinstance(annotation_paths, dict):
        by_ext = {ext: k for k, ext in ANNOTATION_EXT.items()}
        annotation_paths = {by_ext[Path(p).suffix]: Path(p) for p in annotation_paths}

    per_class = {Klass.parse(k): load_annotations(p) for k, p in annotation_paths.items()}
    annotated = set().union(*[set(d) for d in per_class.values()]) if per_class else set()
    frames = []
    for scan in load_scans(scan_path, cfg):
        if scan.seq_id not in annotated:
            continue
        anns = [Annotation(k, pos) for k in OBJECT_CLASSES
                for pos in per_class.get(k, {}).get(scan.seq_id, [])]
        try:
            validate_annotations(anns)
        except ValueError as e:
            raise DataFormatError(scan_path, 0, 0, f"scan {scan.seq_id}: {e}") from None
        frames.append(AnnotatedFrame(scan, anns, scan_path.stem))
    return frames


def write_sequence(frames, scan_path) -> None:
    """Write frames as a scan file plus ``.wc``/``.wa`` annotation siblings."""
    scan_path = Path(scan_path)
    with open(scan_path, "w", encoding="utf-8") as fh:
        for f in frames:
            rs = ",".join(f"{r:.4f}" for r in f.scan.ranges)
            fh.write(f"{f.scan.seq_id},{f.scan.timestamp!r},{rs}\n")
    for k, ext in ANNOTATION_EXT.items():
        with open(scan_path.with_suffix(ext), "w", encoding="utf-8") as fh:
            for f in frames:
                pts = [[float(a.position[0]), float(a.position[1])]
                       for a in f.annotations if a.klass == k]
                fh.write(f"{f.scan.seq_id},{json.dumps(pts)}\n")


def load_directory(path, cfg: SensorConfig | None = None) -> list:
    frames = []
    for scan_path in sorted(Path(path).glob("*.csv")):
        frames.extend(load_sequence(scan_path, cfg=cfg))
    return frames


# -- splitting ---------------------------------------------------------------

def split(frames, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Split frames into (train, valid, test) at sequence granularity.

    Sequences are shuffled with ``seed`` and allotted by largest remainder; every
    part with a nonzero fraction receives at least one sequence.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if len(fractions) != 3 or np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError(f"fractions must be three nonnegative values summing to 1, got {fractions}")
    order = []
    groups = {}
    for f in frames:
        if f.sequence not in groups:
            groups[f.sequence] = []
            order.append(f.sequence)
        groups[f.sequence].append(f)
    nonzero = fractions > 0
    if len(order) < nonzero.sum():
        raise ValueError(f"{len(order)} sequences cannot fill {int(nonzero.sum())} nonempty splits")

    raw = fractions * len(order)
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: len(order) - counts.sum()]:
        counts[i] += 1
    # guarantee one sequence per nonzero part, taken from the largest part
    for i in np.flatnonzero(nonzero & (counts == 0)):
        counts[np.argmax(counts)] -= 1
        counts[i] += 1

    perm = np.random.default_rng(seed).permutation(len(order))
    names = [order[i] for i in perm]
    bounds = np.concatenate([[0], np.cumsum(counts)])
    parts = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        chosen = set(names[a:b])
        parts.append([f for f in frames if f.sequence in chosen])
    return tuple(parts)
