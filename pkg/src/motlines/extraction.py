"""Span extraction from a single 1-D luminance profile (one scene)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Observation:
    scene: int
    position: float
    thickness: float
    luminance: float

    @property
    def lo(self) -> int:
        """First pixel index of the span."""
        return int(np.floor(self.position - self.thickness / 2 + 0.5))

    @property
    def hi(self) -> int:
        """Last pixel index of the span (inclusive)."""
        return int(np.floor(self.position + self.thickness / 2 - 0.5))


@dataclass(frozen=True)
class ExtractionParams:
    l_mm: int = 128
    r: float = 1.0
    max_thickness: int = 10

    def __post_init__(self):
        if not 0 < self.l_mm <= 255:
            raise ValueError(f"l_mm must lie in (0, 255], got {self.l_mm}")
        if not self.r > 0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if self.max_thickness < 1:
            raise ValueError(f"max_thickness must be >= 1, got {self.max_thickness}")


def dark_runs(profile: np.ndarray, l_mm: int) -> tuple[np.ndarray, np.ndarray]:
    """Start and end (exclusive) indices of maximal runs with value <= l_mm."""
    dark = np.concatenate(([False], profile <= l_mm, [False]))
    edges = np.flatnonzero(dark[1:] != dark[:-1])
    return edges[0::2], edges[1::2]


def extract_observations(profile, scene: int, params: ExtractionParams) -> list[Observation]:
    """Return the dark spans of ``profile`` as observations sorted by position.

    Each maximal run of pixels ``<= l_mm`` is scored by its contrast: the
    darker of its two neighbours (255 past the profile ends) minus the run
    minimum. Runs with no contrast are dropped. The run is then shrunk to
    the largest sub-range around its minimum whose pixels stay within
    ``r * contrast`` of that minimum; position is the sub-range midpoint,
    thickness its length and luminance its mean value.
    """
    p = np.asarray(profile)
    n = p.size
    if n == 0:
        raise ValueError("empty profile")
    starts, stops = dark_runs(p, params.l_mm)
    if starts.size == 0:
        return []

    pi = p.astype(np.int64)
    left = np.where(starts > 0, pi[np.maximum(starts - 1, 0)], 255)
    right = np.where(stops < n, pi[np.minimum(stops, n - 1)], 255)
    # interleaved bounds make reduceat cover exactly [start, stop)
    padded = np.append(pi, 255)
    bounds = np.stack([starts, stops], axis=1).ravel()
    run_min = np.minimum.reduceat(padded, bounds)[0::2]
    contrast = np.minimum(left, right) - run_min
    keep = contrast > 0

    out = []
    if params.r == 1.0:
        # every run pixel is <= l_mm < both neighbours, so nothing is trimmed
        sums = np.add.reduceat(padded, bounds)[0::2]
        lengths = stops - starts
        ok = keep & (lengths <= params.max_thickness)
        for a, b, s in zip(starts[ok].tolist(), stops[ok].tolist(), sums[ok].tolist()):
            out.append(Observation(scene, (a + b - 1) / 2.0, float(b - a), s / (b - a)))
        return out

    for a, b, mn, c, k in zip(starts.tolist(), stops.tolist(), run_min.tolist(),
                              contrast.tolist(), keep.tolist()):
        if not k:
            continue
        limit = mn + params.r * c
        seg = pi[a:b]
        centre = a + int(np.argmin(seg))
        lo = centre
        while lo > a and pi[lo - 1] <= limit:
            lo -= 1
        hi = centre + 1
        while hi < b and pi[hi] <= limit:
            hi += 1
        thickness = hi - lo
        if thickness > params.max_thickness:
            continue
        out.append(Observation(scene, (lo + hi - 1) / 2.0, float(thickness),
                               float(pi[lo:hi].mean())))
    return out
