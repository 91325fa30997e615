"""Synthetic floorplan corpus built by recursive guillotine splits.

Stands in for a real floorplan dataset. Every sample is a set of disjoint
rectangles separated by one-pixel walls, with room adjacency derived from
the geometry so that the diagram and the layout always agree.
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import LengthMismatch, ParseError, SchemaVersionMismatch, Unsatisfiable
from .graph import NUM_ROOM_TYPES, BubbleDiagram, RoomType
from .layout import CANVAS, Rect, extract_bubble_diagram

SCHEMA_VERSION = 1
MIN_SIDE = 3
WALL = 1
MAX_ROOMS = 20
MAX_ATTEMPTS = 50

BUCKETS = ("1-3", "4-6", "7-9", "10-12", "13+")


@dataclass(frozen=True)
class LayoutSample:
    diagram: BubbleDiagram
    rects: tuple

    def __post_init__(self):
        object.__setattr__(self, "rects", tuple(self.rects))
        if len(self.rects) != self.diagram.num_rooms:
            raise LengthMismatch(f"{len(self.rects)} rects for {self.diagram.num_rooms} rooms")

    @property
    def num_rooms(self):
        return self.diagram.num_rooms

    @property
    def room_types(self):
        return self.diagram.room_types

    @classmethod
    def from_rects(cls, rects, types):
        return cls(extract_bubble_diagram(rects, types), rects)


def _split_candidates(rect):
    """All (axis, cut) pairs that leave both halves at least MIN_SIDE wide."""
    out = []
    x0, y0, x1, y1 = rect
    for axis, lo, hi in ((0, x0, x1), (1, y0, y1)):
        first, last = lo + MIN_SIDE, hi - MIN_SIDE - WALL
        out.extend((axis, c) for c in range(first, last + 1))
    return out


def _guillotine(rng, num_rooms):
    leaves = [(0, 0, CANVAS, CANVAS)]
    while len(leaves) < num_rooms:
        splittable = [k for k, leaf in enumerate(leaves) if _split_candidates(leaf)]
        if not splittable:
            return None
        areas = np.array([(leaves[k][2] - leaves[k][0]) * (leaves[k][3] - leaves[k][1]) for k in splittable], float)
        k = splittable[rng.choice(len(splittable), p=areas / areas.sum())]
        x0, y0, x1, y1 = leaves.pop(k)
        # favour cutting across the long side so rooms stay roughly square
        long_axis = 0 if (x1 - x0) >= (y1 - y0) else 1
        candidates = _split_candidates((x0, y0, x1, y1))
        preferred = [c for c in candidates if c[0] == long_axis]
        if preferred and rng.random() < 0.8:
            candidates = preferred
        axis, cut = candidates[rng.integers(len(candidates))]
        if axis == 0:
            leaves += [(x0, y0, cut, y1), (cut + WALL, y0, x1, y1)]
        else:
            leaves += [(x0, y0, x1, cut), (x0, cut + WALL, x1, y1)]
    return leaves


def _sample_types(rng, num_rooms):
    types = []
    for _ in range(num_rooms):
        if RoomType.LIVING_ROOM in types:
            types.append(RoomType(rng.integers(1, NUM_ROOM_TYPES)))
        else:
            types.append(RoomType(rng.integers(NUM_ROOM_TYPES)))
    return types


def sample_floorplan(rng, num_rooms):
    """Draw one layout with exactly ``num_rooms`` rooms.

    ``rng`` may be a seed or a ``numpy.random.Generator``.
    """
    if not 1 <= num_rooms <= MAX_ROOMS:
        raise Unsatisfiable(num_rooms, f"(supported range is 1..{MAX_ROOMS})")
    rng = np.random.default_rng(rng)
    for _ in range(MAX_ATTEMPTS):
        leaves = _guillotine(rng, num_rooms)
        if leaves is not None:
            break
    else:
        raise Unsatisfiable(num_rooms, f"after {MAX_ATTEMPTS} attempts")
    order = rng.permutation(len(leaves))
    rects = [Rect(*leaves[k]) for k in order]
    return LayoutSample.from_rects(rects, _sample_types(rng, num_rooms))


def generate_corpus(count, seed, min_rooms=1, max_rooms=15, room_count_weights=None):
    """``count`` independent samples; the room count distribution is a knob.

    ``room_count_weights`` (length ``max_rooms - min_rooms + 1``) overrides the
    default uniform choice of room count.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    sizes = np.arange(min_rooms, max_rooms + 1)
    p = None
    if room_count_weights is not None:
        p = np.asarray(room_count_weights, float)
        p = p / p.sum()
    out = []
    for child in children:
        rng = np.random.default_rng(child)
        out.append(sample_floorplan(rng, int(rng.choice(sizes, p=p))))
    return out


def sample_to_record(sample):
    return {
        "v": SCHEMA_VERSION,
        "rooms": [int(t) for t in sample.room_types],
        "edges": [list(e) for e in sample.diagram.edges],
        "rects": [r.as_list() for r in sample.rects],
    }


def record_to_sample(record):
    if record.get("v") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"expected schema v{SCHEMA_VERSION}, got {record.get('v')!r}")
    diagram = BubbleDiagram(record["rooms"], [tuple(e) for e in record["edges"]])
    return LayoutSample(diagram, [Rect(*r) for r in record["rects"]])


def write_dataset(samples, path, append=False):
    path = Path(path)
    lines = "".join(json.dumps(sample_to_record(s), separators=(",", ":")) + "\n" for s in samples)
    if append:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(lines)
        return path
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(lines, encoding="utf-8")
    os.replace(tmp, path)
    return path


def read_dataset(path):
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, exc.msg) from exc
            if not isinstance(record, dict) or "v" not in record:
                raise ParseError(lineno, "record lacks schema version key 'v'")
            try:
                samples.append(record_to_sample(record))
            except SchemaVersionMismatch:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(lineno, str(exc)) from exc
    return samples


def bucket_of(num_rooms):
    if num_rooms < 1:
        raise ValueError("room count must be positive")
    if num_rooms >= 13:
        return "13+"
    lo = 3 * ((num_rooms - 1) // 3) + 1
    return f"{lo}-{lo + 2}"


@dataclass(frozen=True)
class DatasetSplit:
    bucket: str
    samples: tuple


def bucket_split(samples):
    groups = {b: [] for b in BUCKETS}
    for s in samples:
        groups[bucket_of(s.num_rooms)].append(s)
    return {b: DatasetSplit(b, tuple(v)) for b, v in groups.items()}


def exclude(samples, bucket):
    """Samples outside ``bucket``: the training pool when evaluating on it."""
    if bucket not in BUCKETS:
        raise ValueError(f"unknown bucket {bucket!r}")
    return [s for s in samples if bucket_of(s.num_rooms) != bucket]
