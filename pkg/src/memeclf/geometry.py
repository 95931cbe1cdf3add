"""Bounding-box arithmetic and face-to-person assignment by largest overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence


class InvalidBoxError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, corners (x1, y1) and (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidBoxError(f"non-finite coordinates: {coords}")
        if any(c < 0 for c in coords):
            raise InvalidBoxError(f"negative coordinates: {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidBoxError(f"box must have positive area: {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple:
        return (self.x1, self.y1, self.x2, self.y2)


def overlap_area(a: BoundingBox, b: BoundingBox) -> float:
    """Area of the geometric intersection of two boxes; 0 when disjoint."""
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def map_face_to_person(face: BoundingBox,
                       persons: Sequence[BoundingBox]) -> Optional[int]:
    """Index of the person box with the largest overlap with `face`.

    Returns None when `persons` is empty or no box overlaps the face at all.
    Ties are broken by lowest index. Raw intersection area is used, not IoU.
    """
    best_idx = None
    best_overlap = 0.0
    for i, person in enumerate(persons):
        ov = overlap_area(face, person)
        if ov > best_overlap:
            best_overlap = ov
            best_idx = i
    return best_idx
