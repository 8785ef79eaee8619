"""Per-plane rectifying homographies and column-wise plane segmentation.

The rectifier is a composition S * B * P: a projective map P sending the
plane's vanishing line to infinity, a linear map B aligning the two
vanishing directions with the +x/+y axes, and an anisotropic scale plus
translation S fitted to keep segment endpoints close to where they were.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import (
    INFINITY_EPS,
    DegenerateInputError,
    DetBox,
    Homography,
    LineSegment,
    QuadBox,
    canonical_quad_order,
    quad_iou,
)
from .vanishing import (
    HORIZONTAL,
    VERTICAL,
    VanishingPoint,
    VpParams,
    _residual_matrix,
    best_by_orientation,
    classify,
    estimate_vps,
    residual_angle,
)


class RectifierDegenerateError(DegenerateInputError):
    """The vanishing line passes (nearly) through the image center."""


class BackprojectionError(DegenerateInputError):
    """A rectified box corner maps to infinity in the original image."""


@dataclass(frozen=True)
class Rectifier:
    H: Homography
    vp_h: np.ndarray
    vp_v: np.ndarray
    plane_id: int


@dataclass(frozen=True)
class SegParams:
    majority_thresh: float = 0.5  # fraction of the column's total vote mass
    ratio_thresh: float = 1.5  # first-to-second-best vote ratio
    softmax_temp: float = 2.0  # degrees

    def __post_init__(self):
        if not (0.0 < self.majority_thresh < 1.0):
            raise ValueError("majority_thresh must be in (0, 1)")
        if self.ratio_thresh <= 1.0:
            raise ValueError("ratio_thresh must exceed 1")


@dataclass(frozen=True)
class ColumnInterval:
    lo: int
    hi: int  # half-open [lo, hi)
    plane_id: int  # index into the horizontal vanishing point list

    def __post_init__(self):
        if self.lo >= self.hi:
            raise ValueError("empty column interval")


def build_rectifier(
    vp_h: np.ndarray,
    vp_v: np.ndarray,
    segments: list[LineSegment],
    image_size: tuple[float, float],
    plane_id: int = 0,
) -> Rectifier:
    """Rectifying homography for the plane spanned by the two vanishing points.

    The anisotropic scale/translation is the closed-form per-axis least
    squares fit minimizing the squared displacement of segment endpoints.
    """
    vp_h = np.asarray(vp_h, dtype=float)
    vp_v = np.asarray(vp_v, dtype=float)
    if not segments:
        raise DegenerateInputError("no segments to fit the rectifier scale")

    width, height = image_size
    center = np.array([width / 2.0, height / 2.0, 1.0])
    l = np.cross(vp_h, vp_v)
    ln = np.linalg.norm(l)
    if ln < 1e-12 * np.linalg.norm(vp_h) * np.linalg.norm(vp_v):
        raise DegenerateInputError("coincident vanishing points")
    l = l / ln
    lc = float(l @ center)
    if abs(lc) < 1e-9 * np.linalg.norm(center):
        raise RectifierDegenerateError("vanishing line passes through the image center")
    l = l / lc

    p = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], l])

    def image_direction(vp):
        d = (p @ vp)[:2]
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise RectifierDegenerateError("vanishing point collapses under projective stage")
        return d / n

    d_h = image_direction(vp_h)
    d_v = image_direction(vp_v)
    # Resolve the sign ambiguity of homogeneous directions toward +x / +y.
    if d_h[0] < 0 or (d_h[0] == 0 and d_h[1] < 0):
        d_h = -d_h
    if d_v[1] < 0 or (d_v[1] == 0 and d_v[0] < 0):
        d_v = -d_v
    basis = np.column_stack([d_h, d_v])
    if abs(np.linalg.det(basis)) < 1e-9:
        raise RectifierDegenerateError("vanishing directions are parallel after projection")
    b = np.eye(3)
    b[:2, :2] = np.linalg.inv(basis)

    bp = b @ p
    endpoints = np.array([e for s in segments for e in (s.p, s.q)])
    ph = np.column_stack([endpoints, np.ones(len(endpoints))]) @ bp.T
    w = ph[:, 2]
    good = np.abs(w) > INFINITY_EPS * np.hypot(ph[:, 0], ph[:, 1])
    if good.sum() < 2:
        raise RectifierDegenerateError("all segment endpoints near the vanishing line")
    mapped = ph[good, :2] / w[good, None]
    orig = endpoints[good]

    s_mat = np.eye(3)
    for axis in range(2):
        u = mapped[:, axis]
        v = orig[:, axis]
        var = float(np.var(u))
        if var < 1e-12:
            scale, shift = 1.0, float(np.mean(v) - np.mean(u))
        else:
            scale = float(np.cov(u, v, bias=True)[0, 1] / var)
            if scale == 0.0:
                scale = 1.0
            if scale < 0.0:
                # Flip the axis instead of allowing a mirrored rectification.
                scale = -scale
                b[axis, :] = -b[axis, :]
                u = -u
            shift = float(np.mean(v) - scale * np.mean(u))
        s_mat[axis, axis] = scale
        s_mat[axis, 2] = shift

    h = Homography(s_mat @ b @ p)
    return Rectifier(H=h, vp_h=vp_h, vp_v=vp_v, plane_id=plane_id)


def segment_columns(
    segments: list[LineSegment],
    horizontal_vps: list[VanishingPoint],
    width: int,
    params: SegParams,
) -> list[ColumnInterval]:
    """Partition image columns among the horizontal vanishing points.

    Near-horizontal segments cast a softmax confidence vote over every
    column they span; confidently labeled runs become intervals and
    unlabeled gaps are split where the accumulated vote mass of the two
    neighboring labels balances best.
    """
    if not horizontal_vps:
        raise DegenerateInputError("no horizontal vanishing point")
    width = int(width)
    k = len(horizontal_vps)
    best_vp = 0  # list is support-sorted

    if k == 1:
        return [ColumnInterval(0, width, 0)]

    votes = np.zeros((width, k))
    vp_arr = np.array([vp.point for vp in horizontal_vps])
    for s in segments:
        d = s.direction
        if abs(d[0]) < abs(d[1]):  # more than 45 degrees off horizontal
            continue
        res = _residual_matrix(vp_arr, d[None, :], s.midpoint[None, :])[:, 0]
        conf = np.exp(-res / params.softmax_temp)
        conf = conf / conf.sum()
        lo = max(0, int(np.floor(min(s.p[0], s.q[0]))))
        hi = min(width - 1, int(np.floor(max(s.p[0], s.q[0]))))
        if lo <= hi:
            votes[lo : hi + 1] += conf

    total = votes.sum(axis=1)
    order = np.argsort(-votes, axis=1, kind="stable")
    first = order[:, 0]
    v1 = votes[np.arange(width), first]
    v2 = votes[np.arange(width), order[:, 1]]
    confident = (total > 0) & (v1 >= params.majority_thresh * total) & (
        (v2 <= 0) | (v1 >= params.ratio_thresh * v2)
    )

    if not np.any(confident):
        return [ColumnInterval(0, width, best_vp)]

    # Maximal runs of confidently, identically labeled columns.
    runs: list[tuple[int, int, int]] = []
    c = 0
    while c < width:
        if not confident[c]:
            c += 1
            continue
        label = int(first[c])
        start = c
        while c < width and confident[c] and int(first[c]) == label:
            c += 1
        runs.append((start, c, label))

    boundaries = [0]
    labels = [runs[0][2]]
    for (s0, e0, a), (s1, _e1, bl) in zip(runs, runs[1:]):
        if a == bl:
            continue
        if s1 == e0:
            boundaries.append(s1)
        else:
            # Split the gap where the vote mass of the two labels balances.
            gap = np.arange(e0, s1)
            ca = np.concatenate([[0.0], np.cumsum(votes[gap, a])])
            cb = np.concatenate([[0.0], np.cumsum(votes[gap, bl])])
            obj = ca + (cb[-1] - cb)  # split index t: left of t -> a, rest -> b
            best = np.flatnonzero(obj == obj.max())
            mid = (len(gap)) / 2.0
            t = int(best[np.argmin(np.abs(best - mid))])
            boundaries.append(e0 + t)
        labels.append(bl)
    boundaries.append(width)

    return [
        ColumnInterval(lo, hi, lab)
        for lo, hi, lab in zip(boundaries, boundaries[1:], labels)
        if lo < hi
    ]


def build_plane_rectifiers(
    segments: list[LineSegment],
    width: int,
    height: int,
    vp_params: VpParams,
    seg_params: SegParams,
    vps: list[VanishingPoint] | None = None,
) -> tuple[list[Rectifier | None], list[ColumnInterval]]:
    """Estimate vanishing points, segment columns, and build one rectifier
    per facade (numbered left to right by column interval).

    Entries are None where the rectifier is degenerate.  Both the matching
    pipeline and any simulation of detections in rectified frames must use
    this routine so that they agree on the rectified coordinate frames.
    """
    if vps is None:
        vps = classify(
            estimate_vps(segments, vp_params),
            vp_params,
            center=(width / 2.0, height / 2.0),
        )
    horizontal = [vp for vp in vps if vp.orientation == HORIZONTAL]
    try:
        vertical = best_by_orientation(vps, VERTICAL)
        intervals = segment_columns(segments, horizontal, width, seg_params)
    except DegenerateInputError:
        return [], []

    rectifiers: list[Rectifier | None] = []
    for facade_id, interval in enumerate(intervals):
        vp_h = horizontal[interval.plane_id]
        # Fit the scale only on segments in the interval that agree with the
        # plane's vanishing geometry; off-plane clutter would skew the fit.
        plane_segs = [
            s
            for s in segments
            if interval.lo <= s.midpoint[0] < interval.hi
            and min(
                residual_angle(s, vp_h.point), residual_angle(s, vertical.point)
            )
            <= vp_params.angle_thresh
        ]
        try:
            rectifiers.append(
                build_rectifier(
                    vp_h.point, vertical.point, plane_segs, (width, height), facade_id
                )
            )
        except DegenerateInputError:
            rectifiers.append(None)
    return rectifiers, intervals


def backproject_quad(box: DetBox, r: Rectifier) -> QuadBox:
    """Map a rectified-frame detection back to the original image."""
    try:
        corners = r.H.inv.map_points(box.corners)
    except DegenerateInputError as exc:
        raise BackprojectionError(str(exc)) from exc
    try:
        return QuadBox(canonical_quad_order(corners), box.score)
    except DegenerateInputError as exc:
        raise BackprojectionError(str(exc)) from exc


DEDUP_IOU = 0.8

MODES = ("O", "OA", "R", "RA", "O+R", "(O+R)A")


def merge_detections(
    orthogonal: list[QuadBox],
    adjusted: list[QuadBox],
    rectified: list[QuadBox],
    rectified_adjusted: list[QuadBox],
    mode: str,
) -> list[QuadBox]:
    """Union of the configured detection streams with IoU-based dedup.

    Duplicates (quad IoU >= 0.8) are merged keeping the higher score.
    """
    streams = {
        "O": orthogonal,
        "OA": adjusted,
        "R": rectified,
        "RA": rectified_adjusted,
        "O+R": orthogonal + rectified,
        "(O+R)A": adjusted + rectified_adjusted,
    }
    if mode not in streams:
        raise ValueError(f"unknown detection mode {mode!r}")
    pool = streams[mode]
    order = sorted(range(len(pool)), key=lambda i: (-pool[i].score, i))
    kept: list[QuadBox] = []
    for i in order:
        if all(quad_iou(pool[i], q) < DEDUP_IOU for q in kept):
            kept.append(pool[i])
    return kept
