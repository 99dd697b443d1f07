"""Scoring of vector and instance-segmentation outputs.

Vector matching: a prediction may match one target, a target may be matched
by several predictions (fragments). ``precision2`` divides every matched
projection by the fragment count of its target.

Instance scoring uses panoptic quality with IoU > 0.5 pairing, plus a
binary pixel F-score that ignores instance identities.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment

from .image_io import LabelMasks


class EvaluationError(ValueError):
    """Input outside the metric's domain (no targets, size mismatch...)."""


@dataclass(frozen=True)
class VectorMatchParams:
    min_overlap: float = 0.8
    max_perp_distance: float = 20.0
    max_angle_diff: float = 5.0

    def __post_init__(self):
        if not 0 < self.min_overlap <= 1:
            raise ValueError("min_overlap must lie in (0, 1]")
        if not self.max_perp_distance > 0 or not self.max_angle_diff > 0:
            raise ValueError("distance and angle thresholds must be > 0")


@dataclass
class VectorScores:
    precision: float
    recall: float
    precision2: float
    fscore: float
    fscore2: float
    assignments: list[tuple[int, int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["assignments"] = [list(a) for a in self.assignments]
        return d


def _xy(seg) -> tuple[float, float, float, float]:
    if isinstance(seg, dict):
        return float(seg["x0"]), float(seg["y0"]), float(seg["x1"]), float(seg["y1"])
    if hasattr(seg, "x0"):
        return float(seg.x0), float(seg.y0), float(seg.x1), float(seg.y1)
    x0, y0, x1, y1 = seg[:4]
    return float(x0), float(y0), float(x1), float(y1)


def seg_length(seg) -> float:
    x0, y0, x1, y1 = _xy(seg)
    return math.hypot(x1 - x0, y1 - y0)


def project(p, t) -> tuple[tuple[float, float], float]:
    """Project ``p`` on ``t``.

    Returns the interval covered by ``p``'s orthogonal projection, in
    arc-length coordinates along ``t`` clipped to ``[0, |t|]``, and the
    distance from ``t``'s midpoint to the line supporting ``p``.
    """
    px0, py0, px1, py1 = _xy(p)
    tx0, ty0, tx1, ty1 = _xy(t)
    lp = math.hypot(px1 - px0, py1 - py0)
    lt = math.hypot(tx1 - tx0, ty1 - ty0)
    if lp == 0 or lt == 0:
        raise ValueError("degenerate (zero-length) segment")
    ux, uy = (tx1 - tx0) / lt, (ty1 - ty0) / lt
    a = (px0 - tx0) * ux + (py0 - ty0) * uy
    b = (px1 - tx0) * ux + (py1 - ty0) * uy
    lo = min(max(min(a, b), 0.0), lt)
    hi = min(max(max(a, b), 0.0), lt)
    mx, my = (tx0 + tx1) / 2, (ty0 + ty1) / 2
    d = abs((px1 - px0) * (my - py0) - (py1 - py0) * (mx - px0)) / lp
    return (lo, hi), d


def angle_difference(p, t) -> float:
    """Smallest angle between the two undirected segments, in degrees."""
    px0, py0, px1, py1 = _xy(p)
    tx0, ty0, tx1, ty1 = _xy(t)
    a = math.degrees(math.atan2(py1 - py0, px1 - px0))
    b = math.degrees(math.atan2(ty1 - ty0, tx1 - tx0))
    diff = abs(a - b) % 180.0
    return min(diff, 180.0 - diff)


# slack for rounding at the gate boundaries, so that thresholds met exactly
# by integer coordinates are decided as in exact arithmetic
_EPS = 1e-12


def _match(P, T, params):
    """Assignments plus the projection interval of every assigned pair.

    Distance ties go to the lower target index.
    """
    assignments, intervals = [], []
    for i, p in enumerate(P):
        lp = seg_length(p)
        if lp == 0:
            continue
        best = None
        for j, t in enumerate(T):
            (lo, hi), d = project(p, t)
            if (hi - lo) / lp < params.min_overlap * (1 - _EPS):
                continue
            if d >= params.max_perp_distance * (1 - _EPS):
                continue
            if angle_difference(p, t) > params.max_angle_diff:
                continue
            if best is None or d < best[0] - _EPS * max(1.0, best[0]):
                best = (d, j, (lo, hi))
        if best is not None:
            assignments.append((i, best[1]))
            intervals.append(best[2])
    return assignments, intervals


def match_vector(P: Sequence, T: Sequence, params: VectorMatchParams | None = None) -> list[tuple[int, int]]:
    """Map each prediction to its closest compatible target (by distance to centre)."""
    if any(seg_length(t) == 0 for t in T):
        raise ValueError("degenerate (zero-length) target")
    return _match(P, T, params or VectorMatchParams())[0]


def _union_length(intervals: Iterable[tuple[float, float]]) -> float:
    total, cur_lo, cur_hi = 0.0, None, None
    for lo, hi in sorted(intervals):
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def fmeasure(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def vector_scores(P: Sequence, T: Sequence, params: VectorMatchParams | None = None) -> VectorScores:
    params = params or VectorMatchParams()
    if len(T) == 0:
        raise EvaluationError("no targets")
    if any(seg_length(t) == 0 for t in T):
        raise ValueError("degenerate (zero-length) target")
    assignments, intervals = _match(P, T, params)
    total_p = sum(seg_length(p) for p in P)
    total_t = sum(seg_length(t) for t in T)

    fragments: dict[int, int] = {}
    per_target: dict[int, list] = {}
    for (i, j), iv in zip(assignments, intervals):
        fragments[j] = fragments.get(j, 0) + 1
        per_target.setdefault(j, []).append(iv)

    if total_p == 0:
        precision = precision2 = 1.0
    else:
        matched = [hi - lo for lo, hi in intervals]
        precision = sum(matched) / total_p
        precision2 = sum(m / fragments[j] for m, (_, j) in zip(matched, assignments)) / total_p
    recall = sum(_union_length(ivs) for ivs in per_target.values()) / total_t
    return VectorScores(
        precision=precision,
        recall=recall,
        precision2=precision2,
        fscore=fmeasure(precision, recall),
        fscore2=fmeasure(precision2, recall),
        assignments=assignments,
    )


# --------------------------------------------------------------------------
# Instance segmentation
# --------------------------------------------------------------------------

@dataclass
class PanopticScores:
    pq: float
    tp: int
    fp: int
    fn: int
    mean_iou: float
    iou_sum: float = 0.0
    pairs: list[tuple[int, int, float]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"pq": self.pq, "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "mean_iou": self.mean_iou}


def _check_dims(pred: LabelMasks, gt: LabelMasks):
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise EvaluationError(
            f"raster size mismatch: prediction {pred.width}x{pred.height}, "
            f"ground truth {gt.width}x{gt.height}")


def _indicator(masks: LabelMasks) -> sparse.csr_matrix:
    rows = np.repeat(np.arange(len(masks.masks)), [m.size for m in masks.masks])
    cols = np.concatenate(masks.masks) if masks.masks else np.empty(0, dtype=np.int64)
    return sparse.csr_matrix((np.ones(cols.size, dtype=np.int64), (rows, cols)),
                             shape=(len(masks.masks), masks.width * masks.height))


def panoptic_quality(iou_sum: float, tp: int, fp: int, fn: int) -> float:
    denom = tp + 0.5 * fp + 0.5 * fn
    return 1.0 if denom == 0 else iou_sum / denom


def coco_pq(pred: LabelMasks, gt: LabelMasks) -> PanopticScores:
    """Panoptic quality of ``pred`` against ``gt``, single category, no void.

    Candidate pairs have IoU > 0.5. With non-overlapping masks they are
    unique; ground-truth instances may overlap though (crossing lines), so
    the pairing is the one-to-one matching of maximal IoU sum, which also
    maximizes PQ since its denominator is fixed at (n_pred + n_gt) / 2.
    """
    _check_dims(pred, gt)
    pairs = []
    if pred.masks and gt.masks:
        inter = (_indicator(pred) @ _indicator(gt).T).tocoo()
        ps = np.array([m.size for m in pred.masks])
        gs = np.array([m.size for m in gt.masks])
        cand = []
        for i, j, c in zip(inter.row.tolist(), inter.col.tolist(), inter.data.tolist()):
            iou = c / (ps[i] + gs[j] - c)
            if iou > 0.5:
                cand.append((i, j, float(iou)))
        rows = sorted({c[0] for c in cand})
        cols = sorted({c[1] for c in cand})
        if cand and (len(rows) < len(cand) or len(cols) < len(cand)):
            ri = {r: k for k, r in enumerate(rows)}
            ci = {c: k for k, c in enumerate(cols)}
            w = np.zeros((len(rows), len(cols)))
            for i, j, iou in cand:
                w[ri[i], ci[j]] = iou
            r_idx, c_idx = linear_sum_assignment(w, maximize=True)
            pairs = [(rows[a], cols[b], float(w[a, b])) for a, b in zip(r_idx, c_idx) if w[a, b] > 0]
        else:
            pairs = cand
    pairs.sort()
    tp = len(pairs)
    iou_sum = math.fsum(p[2] for p in pairs)
    fp = len(pred.masks) - tp
    fn = len(gt.masks) - tp
    return PanopticScores(
        pq=panoptic_quality(iou_sum, tp, fp, fn),
        tp=tp, fp=fp, fn=fn,
        mean_iou=iou_sum / tp if tp else 0.0,
        iou_sum=iou_sum,
        pairs=pairs,
    )


def binary_pixel_fscore(pred: LabelMasks, gt: LabelMasks) -> tuple[float, float, float]:
    _check_dims(pred, gt)
    fp_mask = pred.foreground()
    fg_mask = gt.foreground()
    tp = int(np.count_nonzero(fp_mask & fg_mask))
    n_pred = int(np.count_nonzero(fp_mask))
    n_gt = int(np.count_nonzero(fg_mask))
    precision = 1.0 if n_pred == 0 else tp / n_pred
    recall = 1.0 if n_gt == 0 else tp / n_gt
    return precision, recall, fmeasure(precision, recall)


# --------------------------------------------------------------------------
# Batch reports
# --------------------------------------------------------------------------

def summarize(rows: Sequence[dict], keys: Sequence[str]) -> dict:
    """Dataset mean and population standard deviation of each key."""
    out = {}
    for k in keys:
        vals = [float(r[k]) for r in rows]
        if vals:
            out[k] = {"mean": statistics.fmean(vals), "std": statistics.pstdev(vals)}
    return out


VECTOR_KEYS = ("precision", "recall", "precision2", "fscore", "fscore2")
INSTANCE_KEYS = ("pq", "mean_iou", "binary_precision", "binary_recall", "binary_fscore")


def vector_report(pairs: Sequence[tuple[str, Sequence, Sequence]],
                  params: VectorMatchParams | None = None) -> dict:
    rows = []
    for name, P, T in pairs:
        s = vector_scores(P, T, params)
        row = {"image": name, **{k: getattr(s, k) for k in VECTOR_KEYS}}
        rows.append(row)
    return {"images": rows, "summary": summarize(rows, VECTOR_KEYS)}


def instance_report(pairs: Sequence[tuple[str, LabelMasks, LabelMasks]]) -> dict:
    rows = []
    iou_sum, tp, fp, fn = 0.0, 0, 0, 0
    for name, pred, gt in pairs:
        s = coco_pq(pred, gt)
        bp, br, bf = binary_pixel_fscore(pred, gt)
        rows.append({"image": name, **s.as_dict(), "binary_precision": bp,
                     "binary_recall": br, "binary_fscore": bf})
        iou_sum += s.iou_sum
        tp, fp, fn = tp + s.tp, fp + s.fp, fn + s.fn
    pooled = {"pq": panoptic_quality(iou_sum, tp, fp, fn), "tp": tp, "fp": fp, "fn": fn,
              "mean_iou": iou_sum / tp if tp else 0.0}
    return {"images": rows, "pooled": pooled, "summary": summarize(rows, INSTANCE_KEYS)}
