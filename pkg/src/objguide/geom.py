"""Homogeneous 2D geometry: points, lines, homographies, and convex-quad IoU.

All projective quantities are numpy 3-vectors (points/lines) or 3x3 matrices.
Points and lines compare equal up to a nonzero scale factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# A point (x, y, w) counts as "at infinity" when |w| is negligible against
# the Euclidean part.  Single shared predicate for the whole package.
INFINITY_EPS = 1e-9


class GeometryError(Exception):
    """Base class for all geometric failures in this package."""


class DegenerateInputError(GeometryError):
    """Input configuration admits no unique answer (coincident points, ...)."""


class EstimationError(GeometryError):
    """A fit could not be computed (rank deficiency, near-singular system)."""


def hom_point(x: float, y: float) -> np.ndarray:
    return np.array([float(x), float(y), 1.0])


def normalize_h(v: np.ndarray) -> np.ndarray:
    """Scale a homogeneous 3-vector to unit norm with canonical sign.

    The sign is chosen so the largest-magnitude component is positive,
    making equality tests on projective quantities well defined.
    """
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-300:
        raise DegenerateInputError("zero homogeneous vector")
    v = v / n
    k = int(np.argmax(np.abs(v)))
    if v[k] < 0:
        v = -v
    return v


def is_infinite(p: np.ndarray) -> bool:
    return abs(p[2]) < INFINITY_EPS * float(np.hypot(p[0], p[1]))


def dehomogenize(p: np.ndarray) -> np.ndarray:
    if is_infinite(p):
        raise DegenerateInputError("cannot dehomogenize a point at infinity")
    return np.array([p[0] / p[2], p[1] / p[2]])


def same_up_to_scale(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(np.cross(a, b))) <= tol * np.linalg.norm(a) * np.linalg.norm(b)


def line_through(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Line incident to both points (cross product construction)."""
    l = np.cross(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    n = np.linalg.norm(l)
    if n < 1e-12 * np.linalg.norm(p) * np.linalg.norm(q):
        raise DegenerateInputError("coincident points define no unique line")
    return l


def intersect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Intersection point of two lines; at infinity when they are parallel."""
    p = np.cross(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    n = np.linalg.norm(p)
    if n < 1e-12 * np.linalg.norm(a) * np.linalg.norm(b):
        raise DegenerateInputError("identical lines have no unique intersection")
    return p


@dataclass(frozen=True)
class LineSegment:
    """Image line segment with endpoints in pixels (origin top-left, y down)."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(2))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(2))
        if self.length <= 0.0:
            raise DegenerateInputError("zero-length segment")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.q - self.p))

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.p + self.q)

    @property
    def direction(self) -> np.ndarray:
        return self.q - self.p

    @property
    def line(self) -> np.ndarray:
        """Supporting line in homogeneous coordinates."""
        return line_through(hom_point(*self.p), hom_point(*self.q))


@dataclass(frozen=True)
class Homography:
    """3x3 invertible projective map, stored with unit Frobenius norm and
    canonical sign (largest-magnitude entry positive)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).reshape(3, 3)
        n = np.linalg.norm(m)
        if n < 1e-300:
            raise DegenerateInputError("zero homography matrix")
        m = m / n
        flat = m.ravel()
        k = int(np.argmax(np.abs(flat)))
        if flat[k] < 0:
            m = -m
        # Invertibility: smallest/largest singular value ratio is scale-free
        # and does not penalize strong perspective at pixel coordinates.
        sv = np.linalg.svd(m, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise DegenerateInputError("homography matrix is singular")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = tx
        m[1, 2] = ty
        return cls(m)

    @property
    def inv(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Map a homogeneous point; the result may be at infinity."""
        return self.m @ np.asarray(p, dtype=float)

    def map_points(self, pts: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of finite points to finite points.

        Raises DegenerateInputError if any image lands at infinity.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ph = np.column_stack([pts, np.ones(len(pts))]) @ self.m.T
        w = ph[:, 2]
        if np.any(np.abs(w) < INFINITY_EPS * np.hypot(ph[:, 0], ph[:, 1])):
            raise DegenerateInputError("point mapped to infinity")
        return ph[:, :2] / w[:, None]

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.m @ other.m)


@dataclass(frozen=True)
class DetBox:
    """Axis-aligned detection box."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise DegenerateInputError("empty detection box")
        if not (0.0 <= self.score <= 1.0):
            raise DegenerateInputError("detection score outside [0, 1]")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0])

    @property
    def corners(self) -> np.ndarray:
        """Corners in TL, TR, BR, BL order."""
        return np.array(
            [
                [self.xmin, self.ymin],
                [self.xmax, self.ymin],
                [self.xmax, self.ymax],
                [self.xmin, self.ymax],
            ]
        )


def _edge_crosses(corners: np.ndarray) -> np.ndarray:
    e = np.roll(corners, -1, axis=0) - corners
    en = np.roll(e, -1, axis=0)
    return e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]


def canonical_quad_order(corners: np.ndarray) -> np.ndarray:
    """Reorder 4 convex-position points to canonical TL, TR, BR, BL.

    Points are sorted by angle about their centroid (positive shoelace in
    image coordinates, y down) and rotated so the top-left-most corner,
    the one minimizing x + y, comes first.
    """
    corners = np.asarray(corners, dtype=float).reshape(4, 2)
    c = corners.mean(axis=0)
    ang = np.arctan2(corners[:, 1] - c[1], corners[:, 0] - c[0])
    order = np.argsort(ang, kind="stable")
    corners = corners[order]
    start = int(np.argmin(corners.sum(axis=1)))
    return np.roll(corners, -start, axis=0)


@dataclass(frozen=True)
class QuadBox:
    """Four-corner perspective box, corners in TL, TR, BR, BL order."""

    corners: np.ndarray
    score: float = 1.0

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=float).reshape(4, 2)
        crosses = _edge_crosses(corners)
        if not np.all(crosses > 0):
            raise DegenerateInputError("quad corners are not strictly convex in order")
        if not (0.0 <= self.score <= 1.0):
            raise DegenerateInputError("quad score outside [0, 1]")
        corners.flags.writeable = False
        object.__setattr__(self, "corners", corners)

    @classmethod
    def from_detbox(cls, box: DetBox) -> "QuadBox":
        return cls(box.corners, box.score)

    @property
    def centroid(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    @property
    def area(self) -> float:
        return _shoelace_area(self.corners)

    def contains(self, point: np.ndarray, eps: float = 1e-9) -> bool:
        p = np.asarray(point, dtype=float)
        v = self.corners
        e = np.roll(v, -1, axis=0) - v
        d = p[None, :] - v
        cross = e[:, 0] * d[:, 1] - e[:, 1] * d[:, 0]
        return bool(np.all(cross >= -eps))

    def dilated(self, margin: float) -> "QuadBox":
        """Scale the quad about its centroid by (1 + margin)."""
        c = self.centroid
        return QuadBox(c + (1.0 + margin) * (self.corners - c), self.score)


def _shoelace_area(poly: np.ndarray) -> float:
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by a convex polygon.

    Both polygons must be in positive-shoelace order (image coords, y down).
    Returns the intersection polygon, possibly empty.
    """
    output = [tuple(p) for p in np.asarray(subject, dtype=float)]
    clipper = np.asarray(clipper, dtype=float)
    for k in range(len(clipper)):
        if not output:
            return np.empty((0, 2))
        a = clipper[k]
        b = clipper[(k + 1) % len(clipper)]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def inside(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0]) >= 0.0

        def crossing(p, q):
            dx, dy = q[0] - p[0], q[1] - p[1]
            denom = ex * dy - ey * dx
            t = (ex * (a[1] - p[1]) - ey * (a[0] - p[0])) / denom
            return (p[0] + t * dx, p[1] + t * dy)

        result = []
        s = output[-1]
        for e in output:
            if inside(e):
                if not inside(s):
                    result.append(crossing(s, e))
                result.append(e)
            elif inside(s):
                result.append(crossing(s, e))
            s = e
        output = result
    return np.array(output) if output else np.empty((0, 2))


def quad_iou(a: QuadBox, b: QuadBox) -> float:
    """Area intersection-over-union of two convex quads."""
    area_a = a.area
    area_b = b.area
    if area_a < 1e-12 or area_b < 1e-12:
        return 0.0
    inter_poly = clip_convex(a.corners, b.corners)
    if len(inter_poly) < 3:
        return 0.0
    inter = _shoelace_area(inter_poly)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def _hartley_transform(pts: np.ndarray) -> np.ndarray:
    """Isotropic normalization: centroid to origin, mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    s = np.sqrt(2.0) / d if d > 1e-12 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def dlt_homography_h(
    src_h: np.ndarray, dst_h: np.ndarray, weights: np.ndarray | None = None
) -> Homography:
    """Weighted DLT on homogeneous correspondences (points may be at infinity).

    Hartley conditioning is computed from the finite points only; infinite
    correspondences are still transformed consistently (translation has no
    effect on directions).
    """
    src_h = np.asarray(src_h, dtype=float).reshape(-1, 3)
    dst_h = np.asarray(dst_h, dtype=float).reshape(-1, 3)
    n = len(src_h)
    if n < 4:
        raise EstimationError("need at least 4 correspondences")
    if weights is None:
        weights = np.ones(n)

    def finite_xy(pts_h):
        w = pts_h[:, 2]
        mask = np.abs(w) >= INFINITY_EPS * np.hypot(pts_h[:, 0], pts_h[:, 1])
        return pts_h[mask, :2] / pts_h[mask, 2:3]

    fs = finite_xy(src_h)
    fd = finite_xy(dst_h)
    t_src = _hartley_transform(fs) if len(fs) >= 2 else np.eye(3)
    t_dst = _hartley_transform(fd) if len(fd) >= 2 else np.eye(3)

    s = src_h @ t_src.T
    d = dst_h @ t_dst.T
    # Renormalize rows so weights are comparable across correspondences.
    s = s / np.linalg.norm(s, axis=1, keepdims=True)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)

    a = np.zeros((2 * n, 9))
    x, y, w = d[:, 0], d[:, 1], d[:, 2]
    a[0::2, 3:6] = -w[:, None] * s
    a[0::2, 6:9] = y[:, None] * s
    a[1::2, 0:3] = w[:, None] * s
    a[1::2, 6:9] = -x[:, None] * s
    a *= np.repeat(np.asarray(weights, dtype=float), 2)[:, None]

    _, sv, vt = np.linalg.svd(a)
    # The solution is unique up to scale only if the system has rank 8.
    if sv[7] < 1e-10 * sv[0]:
        raise EstimationError("degenerate correspondence configuration")
    h = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t_dst) @ h @ t_src
    try:
        return Homography(m)
    except DegenerateInputError as exc:
        raise EstimationError(str(exc)) from exc


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Homography from >= 4 finite point correspondences (Hartley-normalized)."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if src.shape != dst.shape:
        raise EstimationError("source/target correspondence count mismatch")
    ones = np.ones((len(src), 1))
    return dlt_homography_h(np.hstack([src, ones]), np.hstack([dst, ones]))
