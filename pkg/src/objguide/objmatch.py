"""Greedy object-box matching through homography hypotheses.

Candidate box pairs (pruned by pooled-descriptor similarity) each induce a
homography from their four corner correspondences.  The hypothesis that
registers the most boxes across the images wins, its boxes are removed,
and the search repeats until no hypothesis is supported by two pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import (
    DegenerateInputError,
    EstimationError,
    Homography,
    QuadBox,
    canonical_quad_order,
    dlt_homography,
    quad_iou,
)


class NoDescriptorError(ValueError):
    """GeM pooling was asked to pool an empty descriptor set."""


@dataclass(frozen=True)
class Feature:
    """Local feature: keypoint position plus unit-norm descriptor."""

    id: int
    pos: np.ndarray
    desc: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(2))
        desc = np.asarray(self.desc, dtype=float)
        n = np.linalg.norm(desc)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("feature descriptor must be unit norm")
        object.__setattr__(self, "desc", desc)


@dataclass(frozen=True)
class MatchParams:
    k_candidates: int = 5
    eps_iou: float = 0.5
    gem_p: float = 3.0
    r_search: float = 20.0
    sim_thresh: float = 0.0
    ratio: float = 0.8
    margin: float = 0.5  # support-region dilation for guided matching
    vp_weight: float | None = None  # None: one corner-set per supporting pair

    def __post_init__(self):
        if self.gem_p < 1.0:
            raise ValueError("gem_p must be >= 1")
        if not (0.0 < self.ratio <= 1.0):
            raise ValueError("ratio must be in (0, 1]")


@dataclass
class ObjectGroup:
    """Box correspondences between two images consistent with one homography."""

    H: Homography
    pairs: list[tuple[int, int]]
    refined: bool = False

    @property
    def support(self) -> int:
        return len(self.pairs)


def gem_pool(descs: np.ndarray, p: float) -> np.ndarray:
    """Generalized-mean pooling of unit descriptors, re-normalized.

    GeM is defined on non-negative activations; signed components are pooled
    on their magnitudes and given the sign of the componentwise mean.
    """
    descs = np.asarray(descs, dtype=float)
    if descs.ndim == 1:
        descs = descs[None, :]
    if len(descs) == 0:
        raise NoDescriptorError("cannot pool an empty descriptor set")
    pooled = np.mean(np.abs(descs) ** p, axis=0) ** (1.0 / p)
    signs = np.sign(np.mean(descs, axis=0))
    signs[signs == 0] = 1.0
    vec = signs * pooled
    n = np.linalg.norm(vec)
    if n < 1e-12:
        raise NoDescriptorError("pooled descriptor is zero")
    return vec / n


def box_descriptor(box: QuadBox, feats: list[Feature], p: float) -> np.ndarray:
    """Pooled descriptor of the features inside the quad.

    A box containing no features gets the zero sentinel, which has cosine
    similarity 0 to everything.
    """
    inside = [f.desc for f in feats if box.contains(f.pos)]
    if not inside:
        dim = len(feats[0].desc) if feats else 0
        return np.zeros(dim)
    return gem_pool(np.array(inside), p)


def candidates(
    b: int, descs1: np.ndarray, descs2: np.ndarray, k: int
) -> list[int]:
    """Indices of the K most similar image-2 boxes, descending similarity.

    Ties break toward the lower index.
    """
    if len(descs2) == 0:
        return []
    sims = descs2 @ descs1[b]
    order = np.argsort(-sims, kind="stable")
    return [int(j) for j in order[:k]]


def hypothesis(q1: QuadBox, q2: QuadBox) -> Homography:
    """Homography mapping one quad's corners onto the other's."""
    return dlt_homography(q1.corners, q2.corners)


def _project_quad(h: Homography, q: QuadBox) -> QuadBox | None:
    try:
        corners = h.map_points(q.corners)
        return QuadBox(canonical_quad_order(corners), q.score)
    except DegenerateInputError:
        return None


def _iou_matrix(h: Homography, boxes1: list[QuadBox], boxes2: list[QuadBox]) -> np.ndarray:
    """Projected-IoU matrix with a bounding-box prefilter for disjoint pairs."""
    iou = np.zeros((len(boxes1), len(boxes2)))
    if not boxes2:
        return iou
    lo2 = np.array([q.corners.min(axis=0) for q in boxes2])
    hi2 = np.array([q.corners.max(axis=0) for q in boxes2])
    for i, q1 in enumerate(boxes1):
        pq = _project_quad(h, q1)
        if pq is None:
            continue
        lo = pq.corners.min(axis=0)
        hi = pq.corners.max(axis=0)
        overlap = np.flatnonzero(np.all((hi2 > lo) & (lo2 < hi), axis=1))
        for j in overlap:
            iou[i, j] = quad_iou(pq, boxes2[int(j)])
    return iou


def _greedy_pairs(iou: np.ndarray, eps_iou: float) -> list[tuple[int, int]]:
    pairs: list[tuple[int, int]] = []
    iou = iou.copy()
    while iou.size:
        flat = int(np.argmax(iou))
        i, j = divmod(flat, iou.shape[1]) if iou.shape[1] else (0, 0)
        if iou[i, j] < eps_iou:
            break
        pairs.append((i, j))
        iou[i, :] = -1.0
        iou[:, j] = -1.0
    pairs.sort()
    return pairs


def support(
    h: Homography,
    boxes1: list[QuadBox],
    boxes2: list[QuadBox],
    eps_iou: float,
) -> list[tuple[int, int]]:
    """Greedy one-to-one pairing of boxes whose projected IoU clears eps_iou.

    Appearance is deliberately ignored here; geometry alone decides.
    """
    return _greedy_pairs(_iou_matrix(h, boxes1, boxes2), eps_iou)


def _support_score(h, boxes1, boxes2, eps_iou):
    iou = _iou_matrix(h, boxes1, boxes2)
    pairs = _greedy_pairs(iou, eps_iou)
    total = float(sum(iou[i, j] for i, j in pairs))
    return pairs, total


def greedy_match(
    boxes1: list[QuadBox],
    boxes2: list[QuadBox],
    feats1: list["Feature"],
    feats2: list["Feature"],
    params: MatchParams,
) -> list[ObjectGroup]:
    """Extract object groups by repeated best-supported homography hypotheses.

    Fully deterministic: ties are resolved by larger summed IoU, then by the
    lexicographically smaller supporting pair list.
    """
    descs1 = np.array([box_descriptor(q, feats1, params.gem_p) for q in boxes1])
    descs2 = np.array([box_descriptor(q, feats2, params.gem_p) for q in boxes2])

    remaining1 = list(range(len(boxes1)))
    remaining2 = list(range(len(boxes2)))
    groups: list[ObjectGroup] = []

    while remaining1 and remaining2:
        sub1 = [boxes1[i] for i in remaining1]
        sub2 = [boxes2[j] for j in remaining2]
        sub_descs2 = descs2[remaining2] if len(remaining2) else descs2
        best = None  # (count, sum_iou, pairs, H)
        for li, i in enumerate(remaining1):
            sims = sub_descs2 @ descs1[i]
            order = np.argsort(-sims, kind="stable")[: params.k_candidates]
            for lj in order:
                try:
                    h = hypothesis(sub1[li], sub2[int(lj)])
                except (EstimationError, DegenerateInputError):
                    continue
                pairs, sum_iou = _support_score(h, sub1, sub2, params.eps_iou)
                if len(pairs) < 2:
                    continue
                global_pairs = [(remaining1[a], remaining2[b]) for a, b in pairs]
                key = (len(pairs), sum_iou, [(-a, -b) for a, b in global_pairs])
                if best is None or key > best[0]:
                    best = (key, global_pairs, h)
        if best is None:
            break
        _, global_pairs, h = best
        groups.append(ObjectGroup(H=h, pairs=sorted(global_pairs)))
        used1 = {a for a, _ in global_pairs}
        used2 = {b for _, b in global_pairs}
        remaining1 = [i for i in remaining1 if i not in used1]
        remaining2 = [j for j in remaining2 if j not in used2]

    return groups
