"""Vanishing point estimation from line segments via sequential RANSAC.

Each RANSAC round samples two segments, intersects their supporting lines,
and scores the candidate by the number of segments whose direction agrees
with it within an angular threshold.  The winning candidate is refined on
its inliers, the inliers are removed, and the next round starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geom import (
    INFINITY_EPS,
    DegenerateInputError,
    LineSegment,
    intersect,
    normalize_h,
)

VERTICAL = "vertical"
HORIZONTAL = "horizontal"


class MissingVanishingPointError(DegenerateInputError):
    """A stage that needs a vertical (or horizontal) vanishing point found none."""


@dataclass(frozen=True)
class VpParams:
    angle_thresh: float = 2.0  # degrees
    min_inliers: int = 5
    max_iterations: int = 2000  # per sequential round
    max_vps: int = 5
    vertical_cone: float = 20.0  # degrees off the image y-axis
    rng_seed: int = 0

    def __post_init__(self):
        if self.angle_thresh <= 0.0:
            raise ValueError("angle_thresh must be positive")
        if self.min_inliers < 2:
            raise ValueError("min_inliers must be at least 2")


@dataclass(frozen=True)
class VanishingPoint:
    point: np.ndarray  # homogeneous, unit norm, canonical sign
    inlier_ids: tuple[int, ...]
    orientation: str | None = None

    @property
    def support(self) -> int:
        return len(self.inlier_ids)


def vp_from_pair(s1: LineSegment, s2: LineSegment) -> np.ndarray:
    """Vanishing point candidate from two segments' supporting lines."""
    return normalize_h(intersect(s1.line, s2.line))


def residual_angle(s: LineSegment, v: np.ndarray) -> float:
    """Angle in degrees between the segment direction and the direction
    toward the vanishing point (from the segment midpoint when v is finite)."""
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) < 1e-300:
        raise DegenerateInputError("zero vanishing point")
    if abs(v[2]) < INFINITY_EPS * np.hypot(v[0], v[1]):
        target = v[:2]
    else:
        target = v[:2] / v[2] - s.midpoint
    tn = np.linalg.norm(target)
    if tn < 1e-12:
        return 0.0
    d = s.direction
    cosang = abs(float(np.dot(d, target))) / (np.linalg.norm(d) * tn)
    return float(np.degrees(np.arccos(np.clip(cosang, 0.0, 1.0))))


def _residual_matrix(vps: np.ndarray, dirs: np.ndarray, mids: np.ndarray) -> np.ndarray:
    """Residual angles for every (candidate vp, segment) pair.

    vps: (k, 3) homogeneous candidates; dirs/mids: (m, 2) segment data.
    Returns a (k, m) array of degrees in [0, 90].
    """
    xy = vps[:, :2]
    w = vps[:, 2]
    inf = np.abs(w) < INFINITY_EPS * np.hypot(xy[:, 0], xy[:, 1])
    safe_w = np.where(inf, 1.0, w)
    finite_t = xy[:, None, :] / safe_w[:, None, None] - mids[None, :, :]
    t = np.where(inf[:, None, None], np.broadcast_to(xy[:, None, :], finite_t.shape), finite_t)
    tn = np.linalg.norm(t, axis=2)
    dn = np.linalg.norm(dirs, axis=1)
    num = np.abs(np.einsum("kmj,mj->km", t, dirs))
    den = tn * dn[None, :]
    cosang = np.divide(num, den, out=np.ones_like(num), where=den > 1e-12)
    return np.degrees(np.arccos(np.clip(cosang, 0.0, 1.0)))


def _refine(p: np.ndarray, q: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Null-space refinement: the point minimizing length-weighted incidence
    residuals of the inlier supporting lines.

    Solved in a translated/scaled frame for conditioning at pixel scale.
    """
    pts = np.vstack([p, q])
    c = pts.mean(axis=0)
    s = np.sqrt(2.0) / max(np.linalg.norm(pts - c, axis=1).mean(), 1e-12)
    t = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    ph = np.column_stack([p, np.ones(len(p))]) @ t.T
    qh = np.column_stack([q, np.ones(len(q))]) @ t.T
    lines = np.cross(ph, qh)
    rows = lines / np.linalg.norm(lines, axis=1, keepdims=True)
    rows = rows * lengths[:, None]
    _, _, vt = np.linalg.svd(rows)
    # Lines transform contravariantly, so the refined point maps back by T^-1.
    return normalize_h(np.linalg.inv(t) @ vt[-1])


def estimate_vps(segments: list[LineSegment], params: VpParams) -> list[VanishingPoint]:
    """Sequential RANSAC extraction of vanishing points.

    Deterministic given params.rng_seed; sampling is biased toward longer
    segments.  Returns vanishing points sorted by decreasing support.
    """
    n = len(segments)
    if n < 2:
        return []
    p_arr = np.array([s.p for s in segments])
    q_arr = np.array([s.q for s in segments])
    dirs = q_arr - p_arr
    mids = 0.5 * (p_arr + q_arr)
    lengths = np.array([s.length for s in segments])
    lines = np.array([s.line for s in segments])
    lines = lines / np.linalg.norm(lines, axis=1, keepdims=True)

    rng = np.random.default_rng(params.rng_seed)
    remaining = np.arange(n)
    found: list[VanishingPoint] = []

    while len(found) < params.max_vps and len(remaining) >= max(2, params.min_inliers):
        probs = lengths[remaining] / lengths[remaining].sum()
        i1 = rng.choice(remaining, size=params.max_iterations, p=probs)
        i2 = rng.choice(remaining, size=params.max_iterations, p=probs)
        cands = np.cross(lines[i1], lines[i2])
        norms = np.linalg.norm(cands, axis=1)
        valid = (i1 != i2) & (norms > 1e-12)
        if not np.any(valid):
            break
        cands = cands[valid] / norms[valid][:, None]
        res = _residual_matrix(cands, dirs[remaining], mids[remaining])
        counts = (res <= params.angle_thresh).sum(axis=1)
        best = int(np.argmax(counts))
        if counts[best] < params.min_inliers:
            break
        cons = remaining[res[best] <= params.angle_thresh]
        point = _refine(p_arr[cons], q_arr[cons], lengths[cons])
        res_ref = _residual_matrix(point[None, :], dirs[remaining], mids[remaining])[0]
        inliers = remaining[res_ref <= params.angle_thresh]
        if len(inliers) < params.min_inliers:
            break
        found.append(VanishingPoint(point=point, inlier_ids=tuple(int(i) for i in inliers)))
        keep = res_ref > params.angle_thresh
        remaining = remaining[keep]

    found.sort(key=lambda v: -v.support)
    return found


def classify(
    vps: list[VanishingPoint],
    params: VpParams,
    center: np.ndarray | tuple[float, float] = (0.0, 0.0),
) -> list[VanishingPoint]:
    """Assign vertical/horizontal orientations.

    A vanishing point is a vertical candidate when its direction (seen from
    the image center for finite points) is within params.vertical_cone of
    the image y-axis.  Only the best-supported candidate keeps the vertical
    label; every other point is horizontal.
    """
    center = np.asarray(center, dtype=float)
    vertical_flags = []
    for vp in vps:
        v = vp.point
        if abs(v[2]) < INFINITY_EPS * np.hypot(v[0], v[1]):
            d = v[:2]
        else:
            d = v[:2] / v[2] - center
        dn = np.linalg.norm(d)
        if dn < 1e-12:
            vertical_flags.append(False)
            continue
        off_y = np.degrees(np.arccos(np.clip(abs(d[1]) / dn, 0.0, 1.0)))
        vertical_flags.append(off_y <= params.vertical_cone)

    vertical_idx = None
    for k, flag in enumerate(vertical_flags):
        if flag:
            vertical_idx = k  # list is support-sorted, first hit is best
            break
    out = []
    for k, vp in enumerate(vps):
        orientation = VERTICAL if k == vertical_idx else HORIZONTAL
        out.append(replace(vp, orientation=orientation))
    return out


def best_by_orientation(vps: list[VanishingPoint], orientation: str) -> VanishingPoint:
    """Best-supported vanishing point with the given orientation."""
    for vp in vps:  # support-sorted
        if vp.orientation == orientation:
            return vp
    raise MissingVanishingPointError(f"no {orientation} vanishing point available")
