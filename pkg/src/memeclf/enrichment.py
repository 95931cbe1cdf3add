"""External-label enrichment: web entities and face race/gender tags.

Labels come from pluggable clients. The fixture clients replay canned
responses from a JSONL file and are what tests and acceptance use; the live
Google Vision adapter is documented in the README and never exercised in CI.
Responses are cached on disk, one file per image id under the client's name,
so repeated runs make zero external calls.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .dataset_io import MemeRecord
from .features import ImageRegions, RegionFeature, PERSON_CLASS
from .geometry import BoundingBox, map_face_to_person

logger = logging.getLogger(__name__)

# FairFace taxonomy, normalized to single vocabulary tokens.
RACE_LABELS = (
    "white", "black", "latino_hispanic", "east_asian",
    "southeast_asian", "indian", "middle_eastern",
)
GENDER_LABELS = ("male", "female")

DEFAULT_MAX_ENTITIES = 5


class ClientError(RuntimeError):
    """Retriable failure of an external client."""


@dataclass(frozen=True)
class EntityTag:
    description: str
    score: float

    def __post_init__(self):
        if not self.description:
            raise ValueError("entity description must be non-empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"entity score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class FaceAttribute:
    face_box: BoundingBox
    race: str
    gender: str
    confidence: float

    def __post_init__(self):
        if self.race not in RACE_LABELS:
            raise ValueError(f"unknown race label {self.race!r}")
        if self.gender not in GENDER_LABELS:
            raise ValueError(f"unknown gender label {self.gender!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PersonTag:
    person_region_index: int
    race: str
    gender: str


@dataclass(frozen=True)
class EnrichedMeme:
    record: MemeRecord
    entities: List[EntityTag] = field(default_factory=list)
    person_tags: List[PersonTag] = field(default_factory=list)


class FixtureEntityClient:
    """Entity client replaying a JSONL fixture; counts calls for cache tests."""

    name = "fixture-entities"

    def __init__(self, fixture_path):
        self._by_id = _load_fixtures(fixture_path)
        self.calls = 0

    def web_entities(self, image_id: int) -> List[EntityTag]:
        self.calls += 1
        entry = self._by_id.get(image_id, {})
        return [EntityTag(e["description"], float(e["score"]))
                for e in entry.get("entities", [])]


class FixtureFaceClient:
    """Face client replaying a JSONL fixture; counts calls for cache tests."""

    name = "fixture-faces"

    def __init__(self, fixture_path):
        self._by_id = _load_fixtures(fixture_path)
        self.calls = 0

    def face_attributes(self, image_id: int) -> List[FaceAttribute]:
        self.calls += 1
        entry = self._by_id.get(image_id, {})
        return [
            FaceAttribute(BoundingBox(*f["box"]), f["race"], f["gender"],
                          float(f["confidence"]))
            for f in entry.get("faces", [])
        ]


def _load_fixtures(path) -> Dict[int, dict]:
    by_id: Dict[int, dict] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                by_id[int(obj["id"])] = obj
    return by_id


class GoogleVisionEntityClient:
    """Live web-entity detection adapter (see README for the wire format).

    Requires GOOGLE_VISION_API_KEY in the environment. Never used in tests.
    """

    name = "google-vision-entities"
    endpoint = "https://vision.googleapis.com/v1/images:annotate"

    def __init__(self, image_dir, api_key: Optional[str] = None):
        self.image_dir = Path(image_dir)
        self.api_key = api_key or os.environ.get("GOOGLE_VISION_API_KEY")
        if not self.api_key:
            raise ClientError("GOOGLE_VISION_API_KEY not configured")

    def web_entities(self, image_id: int) -> List[EntityTag]:
        import base64

        import requests

        image_path = self.image_dir / f"{image_id:05d}.png"
        payload = {"requests": [{
            "image": {"content": base64.b64encode(image_path.read_bytes()).decode()},
            "features": [{"type": "WEB_DETECTION"}],
        }]}
        resp = requests.post(self.endpoint, params={"key": self.api_key},
                             json=payload, timeout=30)
        if resp.status_code != 200:
            raise ClientError(f"vision API returned {resp.status_code}")
        entities = (resp.json()["responses"][0]
                    .get("webDetection", {}).get("webEntities", []))
        return [EntityTag(e["description"], min(1.0, float(e.get("score", 0.0))))
                for e in entities if e.get("description")]


class _DiskCache:
    """One JSON file per image id, under a subdirectory named for the client."""

    def __init__(self, cache_dir, client_name: str):
        self.dir = Path(cache_dir) / client_name
        self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, image_id: int) -> Path:
        return self.dir / f"{image_id}.json"

    def get(self, image_id: int):
        path = self._path(image_id)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, OSError):
            logger.warning("corrupt cache entry %s, rebuilding", path)
            return None

    def put(self, image_id: int, payload) -> None:
        tmp = self._path(image_id).with_suffix(".tmp")
        tmp.write_text(json.dumps(payload), encoding="utf-8")
        tmp.replace(self._path(image_id))


class CachedEntityClient:
    def __init__(self, inner, cache_dir):
        self.inner = inner
        self.name = inner.name
        self._cache = _DiskCache(cache_dir, inner.name)

    def web_entities(self, image_id: int) -> List[EntityTag]:
        cached = self._cache.get(image_id)
        if cached is not None:
            return [EntityTag(c["description"], c["score"]) for c in cached]
        tags = self.inner.web_entities(image_id)
        self._cache.put(image_id, [{"description": t.description, "score": t.score}
                                   for t in tags])
        return tags


class CachedFaceClient:
    def __init__(self, inner, cache_dir):
        self.inner = inner
        self.name = inner.name
        self._cache = _DiskCache(cache_dir, inner.name)

    def face_attributes(self, image_id: int) -> List[FaceAttribute]:
        cached = self._cache.get(image_id)
        if cached is not None:
            return [FaceAttribute(BoundingBox(*c["box"]), c["race"], c["gender"],
                                  c["confidence"]) for c in cached]
        faces = self.inner.face_attributes(image_id)
        self._cache.put(image_id, [
            {"box": list(f.face_box.as_tuple()), "race": f.race,
             "gender": f.gender, "confidence": f.confidence}
            for f in faces
        ])
        return faces


def fetch_entities(image_id: int, client,
                   max_entities: int = DEFAULT_MAX_ENTITIES) -> List[EntityTag]:
    """Top `max_entities` web-entity tags, sorted by descending score."""
    tags = sorted(client.web_entities(image_id), key=lambda t: -t.score)
    return tags[:max_entities]


def fetch_face_attributes(image_id: int, client) -> List[FaceAttribute]:
    """Per-face race/gender attributes, detection order preserved."""
    return list(client.face_attributes(image_id))


def attach_attributes_to_persons(faces: Sequence[FaceAttribute],
                                 regions: Sequence[RegionFeature]
                                 ) -> List[PersonTag]:
    """Map each face's attributes onto the person region it overlaps most.

    Candidate regions are those with det_class "person"; faces that overlap
    no person region are dropped (the head may not sit inside any detection).
    """
    person_indices = [i for i, r in enumerate(regions)
                      if r.det_class == PERSON_CLASS]
    person_boxes = [regions[i].box for i in person_indices]
    tags: List[PersonTag] = []
    for face in faces:
        local = map_face_to_person(face.face_box, person_boxes)
        if local is None:
            logger.warning("face at %s overlaps no person region, dropped",
                           face.face_box.as_tuple())
            continue
        tags.append(PersonTag(person_indices[local], face.race, face.gender))
    return tags


def enrich(record: MemeRecord, regions: ImageRegions, entity_client,
           face_client, max_entities: int = DEFAULT_MAX_ENTITIES) -> EnrichedMeme:
    entities = fetch_entities(record.id, entity_client, max_entities)
    faces = fetch_face_attributes(record.id, face_client)
    person_tags = attach_attributes_to_persons(faces, regions.regions)
    return EnrichedMeme(record=record, entities=entities, person_tags=person_tags)


def enriched_to_json(meme: EnrichedMeme) -> str:
    """Serialize one enriched record as a deterministic JSON line."""
    rec = meme.record
    obj = {"id": rec.id, "img": rec.img, "text": rec.text}
    if rec.label is not None:
        obj["label"] = rec.label
    obj["entities"] = [t.description for t in meme.entities]
    obj["person_tags"] = [
        {"region_index": t.person_region_index, "race": t.race, "gender": t.gender}
        for t in meme.person_tags
    ]
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def load_enriched(path) -> List[EnrichedMeme]:
    """Reload an enriched split file. Entity scores are not persisted; the
    stored order (descending score) is kept, with placeholder scores."""
    memes: List[EnrichedMeme] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            record = MemeRecord(int(obj["id"]), obj["img"], obj["text"],
                                obj.get("label"))
            n = len(obj["entities"])
            entities = [EntityTag(d, 1.0 - i / max(n, 1))
                        for i, d in enumerate(obj["entities"])]
            person_tags = [PersonTag(int(t["region_index"]), t["race"], t["gender"])
                           for t in obj["person_tags"]]
            memes.append(EnrichedMeme(record, entities, person_tags))
    return memes


def enrich_split(records: Sequence[MemeRecord], provider, entity_client,
                 face_client, out_path,
                 max_entities: int = DEFAULT_MAX_ENTITIES) -> List[EnrichedMeme]:
    """Enrich a whole split and write one JSON line per record."""
    memes = []
    lines = []
    for record in records:
        regions = provider.get_regions(record.id)
        meme = enrich(record, regions, entity_client, face_client, max_entities)
        memes.append(meme)
        lines.append(enriched_to_json(meme))
    Path(out_path).write_text("\n".join(lines) + ("\n" if lines else ""),
                              encoding="utf-8")
    return memes
