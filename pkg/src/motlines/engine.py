"""Two-pass multiple object tracking over image scenes.

A horizontal scan reads the image column by column and tracks roughly
horizontal objects; the vertical scan does the same on the transposed
image. :func:`detect` runs both, merges them and builds the outputs.
"""
from __future__ import annotations

import bisect
import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import image_io
from .extraction import ExtractionParams, Observation, extract_observations
from .image_io import GrayImage
from .trackers import Prediction, Tracker, TrackerKind, TrackerParams, init_tracker

log = logging.getLogger(__name__)


class Axis(str, enum.Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


@dataclass(frozen=True)
class EngineParams:
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    tracker_kind: TrackerKind = TrackerKind.KALMAN
    tracker: TrackerParams = field(default_factory=TrackerParams)
    match_distance: float = 5.0
    gap_relative: float = 0.5
    gap_absolute: int = 10
    min_length: int = 10
    occlusion_spans: bool = True
    # post-processing
    overlap_threshold: float = 0.5
    filter_min_length: float | None = None
    thickness_range: tuple[float, float] | None = None
    angle_range: tuple[float, float] | None = None

    def __post_init__(self):
        if isinstance(self.tracker_kind, str) and not isinstance(self.tracker_kind, TrackerKind):
            object.__setattr__(self, "tracker_kind", TrackerKind.parse(self.tracker_kind))
        if not self.match_distance > 0:
            raise ValueError("match_distance must be > 0")
        if not 0 <= self.gap_relative <= 1:
            raise ValueError("gap_relative must lie in [0, 1]")
        if self.gap_absolute < 0:
            raise ValueError("gap_absolute must be >= 0")
        if self.min_length < 0:
            raise ValueError("min_length must be >= 0")
        if not 0 < self.overlap_threshold <= 1:
            raise ValueError("overlap_threshold must lie in (0, 1]")
        for name in ("thickness_range", "angle_range"):
            rng = getattr(self, name)
            if rng is not None and rng[0] > rng[1]:
                raise ValueError(f"{name} must be ordered (min, max)")


@dataclass(eq=False)
class LinearObject:
    axis: Axis
    spans: tuple[Observation, ...]
    id: int = -1

    @property
    def first_scene(self) -> int:
        return self.spans[0].scene

    @property
    def last_scene(self) -> int:
        return self.spans[-1].scene

    def to_xy(self, scene: float, position: float) -> tuple[float, float]:
        if self.axis is Axis.HORIZONTAL:
            return float(scene), float(position)
        return float(position), float(scene)

    def endpoints(self) -> tuple[tuple[float, float], tuple[float, float]]:
        a, b = self.spans[0], self.spans[-1]
        return self.to_xy(a.scene, a.position), self.to_xy(b.scene, b.position)

    def footprint(self, width: int, height: int) -> np.ndarray:
        """Sorted flat pixel indices covered by the spans, clamped to the raster."""
        scene_len = height if self.axis is Axis.HORIZONTAL else width
        parts = []
        for s in self.spans:
            lo, hi = max(s.lo, 0), min(s.hi, scene_len - 1)
            if hi < lo:
                continue
            pos = np.arange(lo, hi + 1, dtype=np.int64)
            if self.axis is Axis.HORIZONTAL:
                parts.append(pos * width + s.scene)
            else:
                parts.append(s.scene * width + pos)
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(parts))

    def __repr__(self):
        (x0, y0), (x1, y1) = self.endpoints()
        return (f"LinearObject(id={self.id}, axis={self.axis.value}, spans={len(self.spans)}, "
                f"({x0:.1f},{y0:.1f})-({x1:.1f},{y1:.1f}))")


def match_observations(
    predictions: Sequence[tuple[int, Prediction]],
    observations: Sequence[Observation],
    trackers: Mapping[int, Tracker],
    params: EngineParams,
) -> tuple[dict[int, int], list[int]]:
    """Assign each tracker its closest compatible observation.

    A candidate lies within ``match_distance`` of the predicted position and
    deviates from the tracker by less than three standard deviations in
    slope, thickness and luminance. Several trackers may take the same
    observation (crossings).
    """
    positions = [o.position for o in observations]
    md = params.match_distance
    assignments: dict[int, int] = {}
    taken = [False] * len(observations)
    for tid, pred in predictions:
        tr = trackers[tid]
        lo = bisect.bisect_left(positions, pred.position - md)
        hi = bisect.bisect_right(positions, pred.position + md)
        if lo == hi:
            continue
        s_slope, s_thick, s_lum = tr.attribute_sigmas()
        last = tr.last_obs
        best, best_d = -1, None
        for j in range(lo, hi):
            o = observations[j]
            dt = o.scene - last.scene
            # implied slope minus tracker slope estimate
            if abs(o.position - pred.position) / dt >= 3 * s_slope:
                continue
            if abs(o.thickness - pred.thickness) >= 3 * s_thick:
                continue
            if abs(o.luminance - pred.luminance) >= 3 * s_lum:
                continue
            d = abs(o.position - pred.position)
            if best_d is None or d < best_d:
                best, best_d = j, d
        if best >= 0:
            assignments[tid] = best
            taken[best] = True
    unmatched = [j for j, t in enumerate(taken) if not t]
    return assignments, unmatched


def _predicted_pixels(pred: Prediction) -> tuple[int, int]:
    """Pixel range whose centres lie in [position - thickness/2, position + thickness/2)."""
    lo = int(np.ceil(pred.position - pred.thickness / 2))
    hi = int(np.ceil(pred.position + pred.thickness / 2)) - 1
    return lo, hi


def _occluded_span(pred: Prediction, profile: np.ndarray, scene: int, l_mm: int):
    """Predicted span as an observation if every pixel under it is dark.

    Covers scenes where the object disappears into a larger dark region
    (e.g. crossing a nearly parallel line) and no span was extracted.
    """
    if not pred.thickness > 0:
        return None
    lo, hi = _predicted_pixels(pred)
    if hi < lo or lo < 0 or hi >= profile.size:
        return None
    th = hi - lo + 1
    window = profile[lo:hi + 1]
    if window.max() > l_mm:
        return None
    return Observation(scene, lo + (th - 1) / 2, float(th), float(window.mean()))


def scan(img: GrayImage, params: EngineParams, axis: Axis = Axis.HORIZONTAL,
         first_id: int = 0) -> list[LinearObject]:
    """Track linear objects along one scan direction.

    Every scene is read once. Trackers that stay unmatched for longer than
    ``min(gap_relative * spans, gap_absolute)`` scenes are retired; their
    objects end at the last matched span. No length filtering happens here.

    With ``occlusion_spans``, an unmatched tracker whose predicted span lies
    entirely on dark pixels (it is hidden in a crossing or a merged run) gets
    a provisional span there. Provisional spans do not update the model and
    are kept only if the tracker is matched again later; they count as
    support for the gap rule.
    """
    source = img if axis is Axis.HORIZONTAL else image_io.transpose(img)
    ext = params.extraction
    kind, tparams = params.tracker_kind, params.tracker
    active: list[Tracker] = []
    finished: list[Tracker] = []

    for t in range(source.width):
        profile = source.column(t)
        observations = extract_observations(profile, t, ext)
        if active:
            predictions = [(k, tr.predict(t)) for k, tr in enumerate(active)]
            pool = dict(enumerate(active))
            assignments, unmatched = match_observations(predictions, observations, pool, params)
            for k, j in assignments.items():
                active[k].integrate(observations[j], t)
            if params.occlusion_spans:
                for k, pred in predictions:
                    if k in assignments:
                        continue
                    occluded = _occluded_span(pred, profile, t, ext.l_mm)
                    if occluded is not None:
                        active[k].attach(occluded)
        else:
            unmatched = range(len(observations))
        for j in unmatched:
            active.append(init_tracker(kind, observations[j], tparams))

        survivors = []
        for tr in active:
            limit = min(params.gap_relative * len(tr.spans), params.gap_absolute)
            if t - tr.last_supported_scene > limit:
                finished.append(tr)
            else:
                survivors.append(tr)
        active = survivors

    finished.extend(active)
    finished.sort(key=lambda tr: (tr.first_scene, tr.spans[0].position))
    objects = [LinearObject(axis, tuple(tr.spans), first_id + k) for k, tr in enumerate(finished)]
    log.debug("%s scan: %d scenes, %d objects", axis.value, source.width, len(objects))
    return objects


@dataclass
class DetectionResult:
    """Merged detections. ``raw_counts`` holds, per scan, the objects that
    reach ``min_length`` before deduplication."""

    objects: list[LinearObject]
    segments: list
    masks: image_io.LabelMasks
    raw_counts: dict[str, int] = field(default_factory=dict)


def detect(img: GrayImage, params: EngineParams | None = None) -> DetectionResult:
    """Run both scans, deduplicate, filter and encode the detections."""
    from . import postprocess

    params = params or EngineParams()
    horizontal = scan(img, params, Axis.HORIZONTAL)
    vertical = scan(img, params, Axis.VERTICAL, first_id=len(horizontal))
    w, h = img.width, img.height
    footprints = {o.id: o.footprint(w, h) for o in horizontal + vertical}
    merged = postprocess.deduplicate(horizontal + vertical, w, h, params.overlap_threshold,
                                     footprints=footprints)
    merged = [o for o in merged if len(o.spans) >= params.min_length]
    merged = postprocess.filter_attributes(
        merged,
        min_length=params.filter_min_length,
        thickness_range=params.thickness_range,
        angle_range=params.angle_range,
    )
    segments = postprocess.to_segments(merged)
    masks = image_io.LabelMasks(w, h, [footprints[o.id] for o in merged])
    return DetectionResult(
        objects=merged,
        segments=segments,
        masks=masks,
        raw_counts={
            "horizontal": sum(len(o.spans) >= params.min_length for o in horizontal),
            "vertical": sum(len(o.spans) >= params.min_length for o in vertical),
        },
    )
