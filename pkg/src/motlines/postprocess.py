"""Merging of the two scans and output encoding."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .engine import Axis, LinearObject
from .image_io import LabelMasks


@dataclass(frozen=True)
class Segment:
    x0: float
    y0: float
    x1: float
    y1: float
    id: int = -1

    @property
    def length(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    @property
    def angle_deg(self) -> float:
        """Orientation in (-90, 90] degrees, image y axis pointing down."""
        a = math.degrees(math.atan2(self.y1 - self.y0, self.x1 - self.x0))
        if a > 90:
            a -= 180
        elif a <= -90:
            a += 180
        return a


def _indicator(footprints: Sequence[np.ndarray], size: int) -> sparse.csr_matrix:
    rows = np.repeat(np.arange(len(footprints)), [f.size for f in footprints])
    cols = np.concatenate(footprints) if footprints else np.empty(0, dtype=np.int64)
    data = np.ones(cols.size, dtype=np.int64)
    return sparse.csr_matrix((data, (rows, cols)), shape=(len(footprints), size))


def _diag_sum(footprint: np.ndarray, width: int) -> int:
    """Sum of x + y over the pixels; unchanged by transposition."""
    return int(np.sum(footprint // width) + np.sum(footprint % width))


def deduplicate(objects: Sequence[LinearObject], width: int, height: int,
                overlap_threshold: float = 0.5, footprints: dict | None = None) -> list[LinearObject]:
    """Drop objects that mostly overlap another one.

    Overlap is the shared pixel count over the smaller footprint. Objects
    are ranked by footprint size (larger first); equal sizes fall back on
    more spans, then the smaller coordinate sum, then horizontal before
    vertical, then the lower id. The first three keys do not change when
    the image is transposed, so the same physical detection survives in
    both orientations. Walking down the ranking, an object is kept unless
    it overlaps an already kept one above ``overlap_threshold``. Hence every
    removed object has a surviving duplicate and no kept pair is above the
    threshold.
    """
    if not 0 < overlap_threshold <= 1:
        raise ValueError("overlap_threshold must lie in (0, 1]")
    objects = list(objects)
    if len(objects) < 2:
        return objects
    if footprints is None:
        footprints = {o.id: o.footprint(width, height) for o in objects}
    fps = [footprints[o.id] for o in objects]
    ind = _indicator(fps, width * height)
    inter = sparse.triu(ind @ ind.T, k=1).tocoo()
    sizes = [f.size for f in fps]

    duplicates: dict[int, list[int]] = {}
    for i, j, c in zip(inter.row.tolist(), inter.col.tolist(), inter.data.tolist()):
        smaller = min(sizes[i], sizes[j])
        if smaller and c / smaller > overlap_threshold:
            duplicates.setdefault(i, []).append(j)
            duplicates.setdefault(j, []).append(i)

    def rank(k):
        o = objects[k]
        return (-sizes[k], -len(o.spans), _diag_sum(fps[k], width),
                o.axis is Axis.VERTICAL, o.id)

    kept: set[int] = set()
    for k in sorted(range(len(objects)), key=rank):
        if not any(j in kept for j in duplicates.get(k, ())):
            kept.add(k)
    return [o for k, o in enumerate(objects) if k in kept]


def object_thickness(obj: LinearObject) -> float:
    return float(np.median([s.thickness for s in obj.spans]))


def filter_attributes(objects: Sequence[LinearObject], min_length: float | None = None,
                      thickness_range: tuple[float, float] | None = None,
                      angle_range: tuple[float, float] | None = None) -> list[LinearObject]:
    """Keep objects whose endpoint length, median thickness and angle are in range."""
    for rng in (thickness_range, angle_range):
        if rng is not None and rng[0] > rng[1]:
            raise ValueError(f"range {rng} is not ordered")
    kept = []
    for obj in objects:
        seg = _segment(obj)
        if min_length is not None and seg.length < min_length:
            continue
        if thickness_range is not None:
            th = object_thickness(obj)
            if not thickness_range[0] <= th <= thickness_range[1]:
                continue
        if angle_range is not None and not angle_range[0] <= seg.angle_deg <= angle_range[1]:
            continue
        kept.append(obj)
    return kept


def _segment(obj: LinearObject) -> Segment:
    (x0, y0), (x1, y1) = obj.endpoints()
    return Segment(x0, y0, x1, y1, obj.id)


def to_segments(objects: Sequence[LinearObject]) -> list[Segment]:
    return [_segment(o) for o in objects]


def to_masks(objects: Sequence[LinearObject], width: int, height: int) -> LabelMasks:
    return LabelMasks(width, height, [o.footprint(width, height) for o in objects])


def segment_records(objects: Sequence[LinearObject]) -> list[dict]:
    """JSON-ready vector output, one record per object."""
    out = []
    for obj in objects:
        seg = _segment(obj)
        out.append({
            "id": obj.id,
            "x0": seg.x0,
            "y0": seg.y0,
            "x1": seg.x1,
            "y1": seg.y1,
            "length": seg.length,
            "angle_deg": seg.angle_deg,
            "mean_thickness": float(np.mean([s.thickness for s in obj.spans])),
        })
    return out
