"""Homography refinement, geometry-guided feature matching, and fusion.

Each object group's homography is re-estimated from all supporting box
corners with vanishing-point consistency rows, then used to project
features and restrict their match candidates to a search radius.  Features
left unmatched afterwards go through plain mutual-NN matching with a
ratio test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import (
    INFINITY_EPS,
    DegenerateInputError,
    DetBox,
    EstimationError,
    Homography,
    LineSegment,
    QuadBox,
    dlt_homography_h,
    quad_iou,
)
from .objmatch import (
    Feature,
    MatchParams,
    ObjectGroup,
    greedy_match,
    _project_quad,
)
from .boxes import AdjustmentError, adjust_box, vote_box_vps
from .rectify import (
    BackprojectionError,
    SegParams,
    backproject_quad,
    build_plane_rectifiers,
    merge_detections,
)
from .vanishing import (
    HORIZONTAL,
    VERTICAL,
    MissingVanishingPointError,
    VanishingPoint,
    VpParams,
    best_by_orientation,
    classify,
    estimate_vps,
)


@dataclass(frozen=True)
class Match:
    i: int  # feature id in image 1
    j: int  # feature id in image 2
    sim: float
    group_id: int  # -1 for additional (descriptor-only) matches


@dataclass
class MatchSet:
    matches: list[Match]
    groups: list[ObjectGroup]


def refine_homography(
    g: ObjectGroup,
    boxes1: list[QuadBox],
    boxes2: list[QuadBox],
    vps1: list[VanishingPoint],
    vps2: list[VanishingPoint],
    params: MatchParams,
) -> Homography:
    """Re-estimate the group homography from all supporting corners.

    The best-supported horizontal and vertical vanishing points of the two
    images are appended as weighted correspondences, enforcing consistency
    of the vanishing geometry.  Falls back to the initial hypothesis (with
    g.refined left False) when the system is degenerate or the refit breaks
    the group's IoU support.
    """
    src = np.vstack([boxes1[i].corners for i, _ in g.pairs])
    dst = np.vstack([boxes2[j].corners for _, j in g.pairs])
    src_h = np.column_stack([src, np.ones(len(src))])
    dst_h = np.column_stack([dst, np.ones(len(dst))])
    weights = [1.0] * len(src)

    omega = params.vp_weight if params.vp_weight is not None else float(len(g.pairs))
    for orientation in (HORIZONTAL, VERTICAL):
        try:
            v1 = best_by_orientation(vps1, orientation).point
            v2 = best_by_orientation(vps2, orientation).point
        except MissingVanishingPointError:
            continue
        src_h = np.vstack([src_h, v1])
        dst_h = np.vstack([dst_h, v2])
        weights.append(omega)

    def corner_rms(h: Homography) -> float:
        try:
            proj = h.map_points(src)
        except DegenerateInputError:
            return np.inf
        return float(np.sqrt(np.mean(np.sum((proj - dst) ** 2, axis=1))))

    try:
        refined = dlt_homography_h(src_h, dst_h, np.array(weights))
    except (EstimationError, DegenerateInputError):
        g.refined = False
        return g.H

    # Accept only if the refit does not hurt the observed corners nor the
    # IoU support that defined the group.
    if corner_rms(refined) > corner_rms(g.H) + 1e-9:
        g.refined = False
        return g.H
    for i, j in g.pairs:
        pq = _project_quad(refined, boxes1[i])
        if pq is None or quad_iou(pq, boxes2[j]) < params.eps_iou:
            g.refined = False
            return g.H

    g.H = refined
    g.refined = True
    return refined


def support_region(g: ObjectGroup, boxes: list[QuadBox], margin: float):
    """Membership predicate over the group's dilated supporting quads."""
    quads = [boxes[i].dilated(margin) for i, _ in g.pairs]

    def inside(point: np.ndarray) -> bool:
        return any(q.contains(point) for q in quads)

    return inside


def guided_match(
    feats1: list[Feature],
    feats2: list[Feature],
    g: ObjectGroup,
    boxes1: list[QuadBox],
    params: MatchParams,
    group_id: int = 0,
    claimed1: set[int] | None = None,
    claimed2: set[int] | None = None,
) -> list[Match]:
    """Match features inside the group's support through its homography.

    Candidates are the image-2 features within r_search of the projection;
    the most similar one wins.  Conflicts keep the higher-similarity match
    and let the loser retry its remaining candidates.
    """
    claimed1 = claimed1 or set()
    claimed2 = claimed2 or set()
    region = support_region(g, boxes1, params.margin)
    pool2 = [f for f in feats2 if f.id not in claimed2]
    if not pool2:
        return []
    pos2 = np.array([f.pos for f in pool2])
    desc2 = np.array([f.desc for f in pool2])

    cand_lists: dict[int, list[tuple[float, int]]] = {}
    order1 = []
    for f in sorted(feats1, key=lambda f: f.id):
        if f.id in claimed1 or not region(f.pos):
            continue
        ph = g.H.apply(np.array([f.pos[0], f.pos[1], 1.0]))
        if abs(ph[2]) < INFINITY_EPS * np.hypot(ph[0], ph[1]):
            continue
        proj = ph[:2] / ph[2]
        d = np.linalg.norm(pos2 - proj, axis=1)
        near = np.flatnonzero(d <= params.r_search)
        if len(near) == 0:
            continue
        sims = desc2[near] @ f.desc
        cands = sorted(
            ((float(s), pool2[int(k)].id) for s, k in zip(sims, near) if s >= params.sim_thresh),
            key=lambda t: (-t[0], t[1]),
        )
        if cands:
            cand_lists[f.id] = cands
            order1.append(f.id)

    assigned_j: dict[int, tuple[float, int]] = {}  # j -> (sim, i)
    ptr = {i: 0 for i in order1}
    queue = list(order1)
    while queue:
        i = queue.pop(0)
        cands = cand_lists[i]
        while ptr[i] < len(cands):
            sim, j = cands[ptr[i]]
            if j not in assigned_j:
                assigned_j[j] = (sim, i)
                break
            held_sim, held_i = assigned_j[j]
            if sim > held_sim:
                assigned_j[j] = (sim, i)
                ptr[held_i] += 1
                queue.append(held_i)
                break
            ptr[i] += 1

    return sorted(
        (Match(i=i, j=j, sim=sim, group_id=group_id) for j, (sim, i) in assigned_j.items()),
        key=lambda m: m.i,
    )


def additional_matches(
    feats1: list[Feature],
    feats2: list[Feature],
    already: MatchSet,
    ratio: float,
) -> list[Match]:
    """Mutual-NN + ratio-test matching over the still-unmatched features."""
    used1 = {m.i for m in already.matches}
    used2 = {m.j for m in already.matches}
    pool1 = [f for f in sorted(feats1, key=lambda f: f.id) if f.id not in used1]
    pool2 = [f for f in sorted(feats2, key=lambda f: f.id) if f.id not in used2]
    if not pool1 or not pool2:
        return []
    d1 = np.array([f.desc for f in pool1])
    d2 = np.array([f.desc for f in pool2])
    sims = d1 @ d2.T

    def dist(s):
        return float(np.sqrt(max(2.0 - 2.0 * s, 0.0)))

    best2 = np.argmax(sims, axis=0)  # for each j, best i
    out = []
    for a, f in enumerate(pool1):
        order = np.argsort(-sims[a], kind="stable")
        b = int(order[0])
        if int(best2[b]) != a:
            continue
        if len(order) > 1:
            s1, s2 = float(sims[a, b]), float(sims[a, int(order[1])])
            if not dist(s1) < ratio * dist(s2):
                continue
        out.append(Match(i=f.id, j=pool2[b].id, sim=float(sims[a, b]), group_id=-1))
    return out


@dataclass
class ImageInputs:
    """Everything the pipeline ingests for one image."""

    width: int
    height: int
    segments: list[LineSegment]
    boxes: list[DetBox]
    features: list[Feature]
    # Simulated detections in rectified frames: (plane index, box in that frame).
    rect_boxes: list[tuple[int, DetBox]] = field(default_factory=list)


def _detection_streams(
    img: ImageInputs,
    vps: list[VanishingPoint],
    vp_params: VpParams,
    seg_params: SegParams,
):
    """Build the O / OA / R / RA quad streams for one image."""
    orthogonal = [QuadBox.from_detbox(b) for b in img.boxes]

    adjusted = []
    for b in img.boxes:
        try:
            vp_h, vp_v = vote_box_vps(b, img.segments, vps, vp_params)
            adjusted.append(adjust_box(b, vp_h.point, vp_v.point))
        except (AdjustmentError, MissingVanishingPointError, DegenerateInputError):
            adjusted.append(QuadBox.from_detbox(b))

    rectified: list[QuadBox] = []
    if img.rect_boxes:
        # Facades are numbered left to right by their column interval.
        rectifiers, _intervals = build_plane_rectifiers(
            img.segments, img.width, img.height, vp_params, seg_params, vps=vps
        )
        for plane, box in img.rect_boxes:
            if not (0 <= plane < len(rectifiers)) or rectifiers[plane] is None:
                continue
            try:
                rectified.append(backproject_quad(box, rectifiers[plane]))
            except BackprojectionError:
                continue
    # Detections in a rectified frame are already aligned with the plane's
    # vanishing directions, so adjustment there is the identity.
    rectified_adjusted = list(rectified)
    return orthogonal, adjusted, rectified, rectified_adjusted


def match_pair(
    img1: ImageInputs,
    img2: ImageInputs,
    params: MatchParams | None = None,
    vp_params: VpParams | None = None,
    seg_params: SegParams | None = None,
    mode: str = "O",
) -> tuple[MatchSet, dict]:
    """Run the full pipeline on one image pair.

    Returns the fused MatchSet plus a per-stage count report.  Deterministic
    given vp_params.rng_seed.
    """
    params = params or MatchParams()
    vp_params = vp_params or VpParams()
    seg_params = seg_params or SegParams()

    report: dict = {"mode": mode}
    boxes = []
    vps_all = []
    for tag, img in (("1", img1), ("2", img2)):
        vps = classify(
            estimate_vps(img.segments, vp_params),
            vp_params,
            center=(img.width / 2.0, img.height / 2.0),
        )
        vps_all.append(vps)
        streams = _detection_streams(img, vps, vp_params, seg_params)
        merged = merge_detections(*streams, mode)
        boxes.append(merged)
        report[f"vps_{tag}"] = len(vps)
        report[f"boxes_{tag}"] = len(merged)

    boxes1, boxes2 = boxes
    vps1, vps2 = vps_all

    groups = greedy_match(boxes1, boxes2, img1.features, img2.features, params)
    for g in groups:
        refine_homography(g, boxes1, boxes2, vps1, vps2, params)
    report["groups"] = len(groups)

    matches: list[Match] = []
    claimed1: set[int] = set()
    claimed2: set[int] = set()
    for gid, g in enumerate(groups):
        got = guided_match(
            img1.features, img2.features, g, boxes1, params, gid, claimed1, claimed2
        )
        matches.extend(got)
        claimed1.update(m.i for m in got)
        claimed2.update(m.j for m in got)
    report["guided_matches"] = len(matches)

    partial = MatchSet(matches=matches, groups=groups)
    extra = additional_matches(img1.features, img2.features, partial, params.ratio)
    report["additional_matches"] = len(extra)

    all_matches = sorted(matches + extra, key=lambda m: (m.i, m.j))
    return MatchSet(matches=all_matches, groups=groups), report
