"""Per-image region features through pluggable providers.

The synthetic provider generates deterministic boxes/features from a seeded
stream keyed by (global_seed, image_id, region_index), so desk-scale runs are
reproducible without a real detector. The file-backed provider reads detector
output from a JSONL file and lets real features substitute in later.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .geometry import BoundingBox

DEFAULT_FEATURE_DIM = 64
DEFAULT_MAX_REGIONS = 10
DEFAULT_IMAGE_SIZE = (64.0, 64.0)

# Closed det_class set for the synthetic provider; includes "person" so the
# enrichment mapping path is exercised.
SYNTHETIC_CLASSES = ("person", "animal", "object", "text", "background")
PERSON_CLASS = "person"


class UnknownImageError(KeyError):
    pass


@dataclass(frozen=True)
class RegionFeature:
    box: BoundingBox
    feature: np.ndarray
    det_class: str
    confidence: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.feature)):
            raise ValueError("region feature contains non-finite entries")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ImageRegions:
    image_id: int
    whole_image: RegionFeature
    regions: List[RegionFeature] = field(default_factory=list)

    def feature_table(self) -> np.ndarray:
        """Row 0 = whole image, row k = region k-1; shape (1+n, d_v)."""
        rows = [self.whole_image.feature] + [r.feature for r in self.regions]
        return np.stack(rows).astype(np.float64)

    def person_boxes(self) -> List[BoundingBox]:
        return [r.box for r in self.regions if r.det_class == PERSON_CLASS]


class SyntheticRegionProvider:
    """Deterministic pseudo-random regions, stable across runs and platforms."""

    def __init__(self, seed: int = 0, d_v: int = DEFAULT_FEATURE_DIM,
                 max_regions: int = DEFAULT_MAX_REGIONS,
                 image_size=DEFAULT_IMAGE_SIZE):
        self.seed = seed
        self.d_v = d_v
        self.max_regions = max_regions
        self.width, self.height = image_size

    def _region(self, image_id: int, index: int) -> RegionFeature:
        rng = np.random.default_rng([self.seed, image_id, index])
        x1 = rng.uniform(0, self.width * 0.8)
        y1 = rng.uniform(0, self.height * 0.8)
        x2 = rng.uniform(x1 + 1.0, self.width)
        y2 = rng.uniform(y1 + 1.0, self.height)
        return RegionFeature(
            box=BoundingBox(x1, y1, x2, y2),
            feature=rng.standard_normal(self.d_v),
            det_class=SYNTHETIC_CLASSES[int(rng.integers(len(SYNTHETIC_CLASSES)))],
            confidence=float(rng.uniform(0.3, 1.0)),
        )

    def get_regions(self, image_id: int) -> ImageRegions:
        rng = np.random.default_rng([self.seed, image_id])
        n = int(rng.integers(1, self.max_regions + 1))
        whole = RegionFeature(
            box=BoundingBox(0.0, 0.0, self.width, self.height),
            feature=rng.standard_normal(self.d_v),
            det_class="image",
            confidence=1.0,
        )
        regions = [self._region(image_id, k) for k in range(n)]
        regions.sort(key=lambda r: -r.confidence)
        return ImageRegions(image_id=image_id, whole_image=whole, regions=regions)


class FileRegionProvider:
    """Regions read from a JSONL file: one object per image.

    Expected keys per line: id, width, height, regions (list of
    {box: [x1,y1,x2,y2], feature: [...], det_class, confidence}), and an
    optional whole_feature vector (defaults to the mean of region features).
    """

    def __init__(self, path):
        self._images: Dict[int, ImageRegions] = {}
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                self._images[int(obj["id"])] = self._parse(obj)

    @staticmethod
    def _parse(obj) -> ImageRegions:
        regions = [
            RegionFeature(
                box=BoundingBox(*r["box"]),
                feature=np.asarray(r["feature"], dtype=np.float64),
                det_class=str(r["det_class"]),
                confidence=float(r["confidence"]),
            )
            for r in obj.get("regions", [])
        ]
        regions.sort(key=lambda r: -r.confidence)
        if "whole_feature" in obj:
            whole_feat = np.asarray(obj["whole_feature"], dtype=np.float64)
        elif regions:
            whole_feat = np.mean([r.feature for r in regions], axis=0)
        else:
            raise ValueError(
                f"image {obj['id']}: whole_feature required when regions empty")
        whole = RegionFeature(
            box=BoundingBox(0.0, 0.0, float(obj["width"]), float(obj["height"])),
            feature=whole_feat,
            det_class="image",
            confidence=1.0,
        )
        return ImageRegions(image_id=int(obj["id"]), whole_image=whole,
                            regions=regions)

    def get_regions(self, image_id: int) -> ImageRegions:
        try:
            return self._images[image_id]
        except KeyError:
            raise UnknownImageError(
                f"no regions on file for image id {image_id}") from None


def get_regions(image_id: int, provider) -> ImageRegions:
    return provider.get_regions(image_id)
