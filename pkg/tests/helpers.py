"""Fixture generators and independent reference implementations for the tests.

The references are written from the definitions, in a different style
from the package code (exact rationals, plain loops, literal matrices), so
agreement between the two is meaningful.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from motlines.image_io import SynthSegment, SynthSpec


# --------------------------------------------------------------------------
# synthetic fixtures
# --------------------------------------------------------------------------

def centred_line(angle_deg, length=150, thickness=3, luminance=30, centre=(100, 100),
                 dash_on=0.0, dash_off=0.0) -> SynthSegment:
    r = math.radians(angle_deg)
    dx, dy = math.cos(r) * length / 2, math.sin(r) * length / 2
    cx, cy = centre
    return SynthSegment(round(cx - dx), round(cy - dy), round(cx + dx), round(cy + dy),
                        thickness, luminance, dash_on, dash_off)


def x_fixture(a=45, b=135, thickness=3, size=200) -> SynthSpec:
    return SynthSpec(size, size, (centred_line(a, thickness=thickness),
                                  centred_line(b, thickness=thickness)))


def _point_segment(px, py, s) -> float:
    dx, dy = s.x1 - s.x0, s.y1 - s.y0
    u = ((px - s.x0) * dx + (py - s.y0) * dy) / (dx * dx + dy * dy)
    u = min(max(u, 0.0), 1.0)
    return math.hypot(px - s.x0 - u * dx, py - s.y0 - u * dy)


def _segments_cross(a, b) -> bool:
    def orient(ax, ay, bx, by, cx, cy):
        return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)

    d1 = orient(a.x0, a.y0, a.x1, a.y1, b.x0, b.y0)
    d2 = orient(a.x0, a.y0, a.x1, a.y1, b.x1, b.y1)
    d3 = orient(b.x0, b.y0, b.x1, b.y1, a.x0, a.y0)
    d4 = orient(b.x0, b.y0, b.x1, b.y1, a.x1, a.y1)
    return d1 * d2 < 0 and d3 * d4 < 0


def _endpoint_distances(a, b):
    return [_point_segment(a.x0, a.y0, b), _point_segment(a.x1, a.y1, b),
            _point_segment(b.x0, b.y0, a), _point_segment(b.x1, b.y1, a)]


def well_separated(a, b, clearance=5.0, min_cross_deg=20.0) -> bool:
    """True unless the pair is geometrically ambiguous.

    Lines that come within ``clearance`` px of each other (edge to edge)
    must cross at ``min_cross_deg`` or more, and no endpoint may sit within
    that distance of the other line.
    """
    gap = (a.thickness + b.thickness) / 2 + clearance
    ends = _endpoint_distances(a, b)
    dist = 0.0 if _segments_cross(a, b) else min(ends)
    if dist >= gap:
        return True
    ta = math.degrees(math.atan2(a.y1 - a.y0, a.x1 - a.x0))
    tb = math.degrees(math.atan2(b.y1 - b.y0, b.x1 - b.x0))
    d = abs(ta - tb) % 180
    if min(d, 180 - d) < min_cross_deg:
        return False
    return min(ends) >= gap


def random_line_spec(rng, size=200, n=None, margin=10, min_len=60,
                     clearance: float | None = 5.0, min_cross_deg=20.0) -> SynthSpec:
    """1-5 solid lines, thickness 1-5, angles uniform in [0, 90] degrees.

    With ``clearance`` set, lines are redrawn until every pair passes
    :func:`well_separated`; ``None`` keeps fully random placements.
    """
    n = n or int(rng.integers(1, 6))
    segs = []
    while len(segs) < n:
        ang = math.radians(rng.uniform(0, 90))
        length = rng.uniform(min_len, size - 2 * margin)
        cx, cy = rng.uniform(margin, size - margin, 2)
        dx, dy = math.cos(ang) * length / 2, math.sin(ang) * length / 2
        x0, y0, x1, y1 = cx - dx, cy - dy, cx + dx, cy + dy
        if min(x0, x1, y0, y1) < margin or max(x0, x1, y0, y1) > size - 1 - margin:
            continue
        s = SynthSegment(round(x0), round(y0), round(x1), round(y1),
                         int(rng.integers(1, 6)), int(rng.integers(0, 60)))
        if clearance is not None and not all(well_separated(s, o, clearance, min_cross_deg) for o in segs):
            continue
        segs.append(s)
    return SynthSpec(size, size, tuple(segs))


def map_like_spec(rng, width=5454, height=3878, n=200, noise_sigma=8.0) -> SynthSpec:
    """Mostly axis-aligned rules of 100-2000 px plus some oblique strokes."""
    segs = []
    for _ in range(n):
        kind = rng.random()
        length = rng.uniform(100, 2000)
        x0 = rng.uniform(20, width - 20)
        y0 = rng.uniform(20, height - 20)
        if kind < 0.45:
            ang = rng.normal(0, 1.0)
        elif kind < 0.9:
            ang = 90 + rng.normal(0, 1.0)
        else:
            ang = rng.uniform(0, 180)
        r = math.radians(ang)
        x1 = float(np.clip(x0 + math.cos(r) * length, 20, width - 20))
        y1 = float(np.clip(y0 + math.sin(r) * length, 20, height - 20))
        segs.append(SynthSegment(round(x0), round(y0), round(x1), round(y1),
                                 int(rng.integers(1, 6)), int(rng.integers(0, 80))))
    return SynthSpec(width, height, tuple(segs), noise_sigma)


# --------------------------------------------------------------------------
# vector metric reference (exact arithmetic on integer coordinates)
# --------------------------------------------------------------------------

def _frac_union(intervals):
    total = Fraction(0)
    cur = None
    for lo, hi in sorted(intervals):
        if cur is None or lo > cur[1]:
            if cur is not None:
                total += cur[1] - cur[0]
            cur = [lo, hi]
        else:
            cur[1] = max(cur[1], hi)
    if cur is not None:
        total += cur[1] - cur[0]
    return total


def reference_vector_scores(P, T, min_overlap=Fraction(4, 5), max_perp=20, max_angle=5.0):
    """Brute-force matching over every (prediction, target) pair.

    Projections are kept as exact fractions of the target length, the
    overlap and distance gates are compared squared, so only the final
    lengths involve a square root.
    """
    min_overlap = Fraction(min_overlap)
    assignments, matched = [], []
    for i, p in enumerate(P):
        px0, py0, px1, py1 = p
        pvx, pvy = px1 - px0, py1 - py0
        lp2 = pvx * pvx + pvy * pvy
        if lp2 == 0:
            continue
        best = None
        for j, t in enumerate(T):
            tx0, ty0, tx1, ty1 = t
            tvx, tvy = tx1 - tx0, ty1 - ty0
            lt2 = tvx * tvx + tvy * tvy
            sa = Fraction((px0 - tx0) * tvx + (py0 - ty0) * tvy, lt2)
            sb = Fraction((px1 - tx0) * tvx + (py1 - ty0) * tvy, lt2)
            lo = min(max(min(sa, sb), Fraction(0)), Fraction(1))
            hi = min(max(max(sa, sb), Fraction(0)), Fraction(1))
            # (hi - lo) * |t| / |p| >= min_overlap, squared
            if (hi - lo) ** 2 * lt2 < min_overlap ** 2 * lp2:
                continue
            mx, my = Fraction(tx0 + tx1, 2), Fraction(ty0 + ty1, 2)
            cross = abs(pvx * (my - py0) - pvy * (mx - px0))
            # distance = cross / |p| < max_perp, squared
            if cross * cross >= max_perp * max_perp * lp2:
                continue
            cos = abs(pvx * tvx + pvy * tvy) / math.sqrt(lp2 * lt2)
            if math.degrees(math.acos(min(cos, 1.0))) > max_angle:
                continue
            if best is None or cross < best[0]:
                best = (cross, j, lo, hi, lt2)
        if best is not None:
            assignments.append((i, best[1]))
            matched.append(best)

    def length(s):
        return math.hypot(s[2] - s[0], s[3] - s[1])

    total_p = sum(length(p) for p in P)
    total_t = sum(length(t) for t in T)
    counts = {}
    for _, j in assignments:
        counts[j] = counts.get(j, 0) + 1
    if total_p == 0:
        precision = precision2 = 1.0
    else:
        m = [float(hi - lo) * math.sqrt(lt2) for _, _, lo, hi, lt2 in matched]
        precision = sum(m) / total_p
        precision2 = sum(v / counts[j] for v, (_, j) in zip(m, assignments)) / total_p
    per_target = {}
    for _, j, lo, hi, lt2 in matched:
        per_target.setdefault(j, (lt2, []))[1].append((lo, hi))
    recall = sum(float(_frac_union(ivs)) * math.sqrt(lt2) for lt2, ivs in per_target.values()) / total_t

    def f(a, b):
        return 0.0 if a + b == 0 else 2 * a * b / (a + b)

    return {"precision": precision, "recall": recall, "precision2": precision2,
            "fscore": f(precision, recall), "fscore2": f(precision2, recall),
            "assignments": assignments}


# --------------------------------------------------------------------------
# panoptic quality reference
# --------------------------------------------------------------------------

def reference_pq(pred_sets, gt_sets):
    """Enumerate every one-to-one pairing restricted to IoU > 0.5 pairs and
    keep the one with the largest IoU sum. Returns (pq, iou_sum)."""
    n_p, n_g = len(pred_sets), len(gt_sets)
    if n_p + n_g == 0:
        return 1.0, 0.0
    iou = {}
    for i, a in enumerate(pred_sets):
        for j, b in enumerate(gt_sets):
            inter = len(a & b)
            union = len(a | b)
            # IoU > 1/2  <=>  2 * inter > union
            if 2 * inter > union:
                iou[i, j] = inter / union
    best = 0.0
    k = min(n_p, n_g)
    for r in range(k + 1):
        for preds in itertools.combinations(range(n_p), r):
            for gts in itertools.permutations(range(n_g), r):
                if all((p, g) in iou for p, g in zip(preds, gts)):
                    best = max(best, math.fsum(iou[p, g] for p, g in zip(preds, gts)))
    return best / ((n_p + n_g) / 2), best


# --------------------------------------------------------------------------
# Kalman reference: the textbook recursion with full matrices
# --------------------------------------------------------------------------

A_REF = np.array([[1.0, 1.0, 0.0, 0.0],
                  [0.0, 1.0, 0.0, 0.0],
                  [0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0]])
H_REF = np.array([[1.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0]])


class ReferenceKalman:
    def __init__(self, z0, q=1e-5, p0=1.0, r=(1.0, 1.0, 4.0)):
        self.S = np.array([z0[0], 0.0, z0[1], z0[2]], dtype=float)
        self.P = np.eye(4) * p0
        self.Q = np.eye(4) * q
        self.R = np.diag(r)

    def predict(self, dt):
        S, P = self.S.copy(), self.P.copy()
        for _ in range(dt):
            S = A_REF @ S
            P = A_REF @ P @ A_REF.T + self.Q
        return S, P

    def update(self, z, dt):
        S, P = self.predict(dt)
        K = P @ H_REF.T @ np.linalg.inv(H_REF @ P @ H_REF.T + self.R)
        self.S = S + K @ (np.asarray(z, dtype=float) - H_REF @ S)
        self.P = (np.eye(4) - K @ H_REF) @ P


# --------------------------------------------------------------------------
# extraction reference
# --------------------------------------------------------------------------

def reference_extract(profile, l_mm, r=1.0, max_thickness=10):
    """Literal loop over the runs: (position, thickness, luminance) tuples."""
    vals = [int(v) for v in profile]
    n = len(vals)
    out = []
    i = 0
    while i < n:
        if vals[i] > l_mm:
            i += 1
            continue
        j = i
        while j + 1 < n and vals[j + 1] <= l_mm:
            j += 1
        left = vals[i - 1] if i > 0 else 255
        right = vals[j + 1] if j + 1 < n else 255
        run = vals[i:j + 1]
        mn = min(run)
        contrast = min(left, right) - mn
        if contrast > 0:
            centre = i + run.index(mn)
            limit = mn + r * contrast
            a = centre
            while a - 1 >= i and vals[a - 1] <= limit:
                a -= 1
            b = centre
            while b + 1 <= j and vals[b + 1] <= limit:
                b += 1
            th = b - a + 1
            if th <= max_thickness:
                out.append(((a + b) / 2, th, sum(vals[a:b + 1]) / th))
        i = j + 1
    return out
