"""Axis-aligned room rectangles on the 32x32 canvas."""

from dataclasses import dataclass

import numpy as np

from .graph import BubbleDiagram, RoomType

CANVAS = 32
ADJACENCY_GAP = 2

# index 0 is the white background; room type t is painted with index t + 1
PALETTE = (
    (255, 255, 255),
    (238, 77, 77),     # living room
    (192, 142, 60),    # kitchen
    (255, 214, 102),   # bedroom
    (102, 178, 255),   # bathroom
    (153, 102, 204),   # closet
    (102, 204, 153),   # balcony
    (180, 180, 180),   # corridor
    (255, 153, 51),    # dining room
    (51, 102, 153),    # laundry room
    (90, 90, 90),      # unknown
)


@dataclass(frozen=True, order=True)
class Rect:
    """Half-open pixel box ``[x0, x1) x [y0, y1)``; x indexes columns, y rows."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (0 <= self.x0 < self.x1 <= CANVAS and 0 <= self.y0 < self.y1 <= CANVAS):
            raise ValueError(f"invalid rect {self.as_list()}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def as_list(self):
        return [self.x0, self.y0, self.x1, self.y1]

    def mask(self, canvas=CANVAS):
        out = np.zeros((canvas, canvas), dtype=bool)
        out[self.y0:self.y1, self.x0:self.x1] = True
        return out


def _gap_and_overlap(a0, a1, b0, b1):
    gap = max(b0 - a1, a0 - b1)
    overlap = min(a1, b1) - max(a0, b0)
    return gap, overlap


def rects_adjacent(a, b, delta=ADJACENCY_GAP):
    x_gap, x_overlap = _gap_and_overlap(a.x0, a.x1, b.x0, b.x1)
    y_gap, y_overlap = _gap_and_overlap(a.y0, a.y1, b.y0, b.y1)
    return (x_gap <= delta and y_overlap >= 1) or (y_gap <= delta and x_overlap >= 1)


def extract_bubble_diagram(rects, types, delta=ADJACENCY_GAP):
    """Rebuild the bubble diagram implied by a layout.

    Rooms are adjacent when they are at most ``delta`` pixels apart along one
    axis and their projections on the other axis share at least one pixel.
    A ``None`` rect (a room that failed to materialise) has no neighbours.
    """
    edges = []
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if rects[i] is not None and rects[j] is not None and rects_adjacent(rects[i], rects[j], delta):
                edges.append((i, j))
    return BubbleDiagram(types, edges)


def rasterize(rects, types, scale=1):
    """Paint rooms largest-first onto a white canvas of palette indices.

    Ties in area keep room-index order, so the lower index is painted first
    and ends up underneath.
    """
    canvas = np.zeros((CANVAS, CANVAS), dtype=np.uint8)
    order = sorted(
        (i for i, r in enumerate(rects) if r is not None),
        key=lambda i: (-rects[i].area, i),
    )
    for i in order:
        r = rects[i]
        canvas[r.y0:r.y1, r.x0:r.x1] = int(RoomType(types[i])) + 1
    if scale > 1:
        canvas = np.kron(canvas, np.ones((scale, scale), dtype=np.uint8))
    return canvas


def save_raster(image, path):
    from PIL import Image

    img = Image.fromarray(np.asarray(image, dtype=np.uint8), mode="P")
    img.putpalette([c for rgb in PALETTE for c in rgb])
    img.save(path)
