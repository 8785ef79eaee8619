"""Object-box guided local feature matching for urban day-night image pairs."""

from .geom import (
    DetBox,
    Homography,
    LineSegment,
    QuadBox,
    dlt_homography,
    intersect,
    line_through,
    quad_iou,
)
from .guided import ImageInputs, Match, MatchSet, match_pair
from .objmatch import Feature, MatchParams, ObjectGroup, greedy_match
from .rectify import ColumnInterval, Rectifier, SegParams
from .vanishing import VanishingPoint, VpParams, classify, estimate_vps

__all__ = [
    "ColumnInterval",
    "DetBox",
    "Feature",
    "Homography",
    "ImageInputs",
    "LineSegment",
    "Match",
    "MatchParams",
    "MatchSet",
    "ObjectGroup",
    "QuadBox",
    "Rectifier",
    "SegParams",
    "VanishingPoint",
    "VpParams",
    "classify",
    "dlt_homography",
    "estimate_vps",
    "greedy_match",
    "intersect",
    "line_through",
    "match_pair",
    "quad_iou",
]

__version__ = "0.1.0"
