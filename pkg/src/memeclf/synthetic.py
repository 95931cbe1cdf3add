"""Synthetic desk-scale corpora.

Two constructions:

* a meme corpus whose hateful label is a deterministic function of the
  person tags injected during enrichment (captions and visual features carry
  no label signal), used to demonstrate that tag injection is what the model
  learns from;
* a themed image/caption corpus where captions are drawn from per-theme word
  lists and the whole-image feature encodes the theme, so image-text
  matching is learnable and "hateful := mismatched caption" transfers.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .dataset_io import MemeRecord
from .enrichment import (EnrichedMeme, GENDER_LABELS, RACE_LABELS,
                         attach_attributes_to_persons, FaceAttribute)
from .features import (BoundingBox, ImageRegions, RegionFeature,
                       SyntheticRegionProvider, PERSON_CLASS)
from .inputs import build_sequence, build_vocabulary, Vocabulary

# Races whose presence in any person tag marks the synthetic meme hateful.
SIGNAL_RACES = frozenset({"east_asian", "indian", "middle_eastern"})

_CAPTION_WORDS = (
    "look at this picture of a thing on the table outside today "
    "funny old new big small happy blue green red street house cat dog "
    "coffee morning night rain sun cloud chair window door music"
).split()

_ENTITY_WORDS = ("toast breakfast poster cartoon screenshot landscape portrait "
                 "meme advert snapshot").split()


def hateful_from_tags(person_tags) -> int:
    return int(any(t.race in SIGNAL_RACES for t in person_tags))


def generate_corpus(out_dir, n: int = 200, seed: int = 0,
                    dev_fraction: float = 0.2,
                    provider: SyntheticRegionProvider = None) -> dict:
    """Write train.jsonl, dev.jsonl and fixtures.jsonl under out_dir.

    Face fixtures are placed inside person regions of the synthetic feature
    provider, so enrichment maps them deterministically; the meme label is
    computed from the tags the enrichment pipeline will produce.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    provider = provider or SyntheticRegionProvider(seed=seed)
    rng = np.random.default_rng([seed, 777])

    records: List[dict] = []
    fixtures: List[dict] = []
    nonsignal = sorted(set(RACE_LABELS) - SIGNAL_RACES)
    signal = sorted(SIGNAL_RACES)
    for meme_id in range(n):
        caption = " ".join(rng.choice(_CAPTION_WORDS, size=6))
        regions = provider.get_regions(meme_id)
        person_regions = [r for r in regions.regions
                          if r.det_class == PERSON_CLASS]
        faces = []
        if person_regions:
            host = person_regions[int(rng.integers(len(person_regions)))].box
            # face box = centered sub-box of the host person region
            fw = (host.x2 - host.x1) * 0.4
            fh = (host.y2 - host.y1) * 0.4
            cx, cy = (host.x1 + host.x2) / 2, (host.y1 + host.y2) / 2
            race = (signal[int(rng.integers(len(signal)))]
                    if rng.random() < 0.5
                    else nonsignal[int(rng.integers(len(nonsignal)))])
            gender = GENDER_LABELS[int(rng.integers(len(GENDER_LABELS)))]
            faces.append({
                "box": [cx - fw / 2, cy - fh / 2, cx + fw / 2, cy + fh / 2],
                "race": race, "gender": gender,
                "confidence": round(float(rng.uniform(0.7, 1.0)), 4),
            })
        attrs = [FaceAttribute(BoundingBox(*f["box"]), f["race"], f["gender"],
                               f["confidence"]) for f in faces]
        tags = attach_attributes_to_persons(attrs, regions.regions)
        label = hateful_from_tags(tags)

        n_ents = int(rng.integers(1, 4))
        picks = rng.choice(len(_ENTITY_WORDS), size=n_ents, replace=False)
        entities = sorted(
            ({"description": _ENTITY_WORDS[int(p)],
              "score": round(float(rng.uniform(0.3, 1.0)), 4)} for p in picks),
            key=lambda e: -e["score"])

        records.append({"id": meme_id, "img": f"img/{meme_id:05d}.png",
                        "text": caption, "label": label})
        fixtures.append({"id": meme_id, "entities": entities, "faces": faces})

    n_dev = int(n * dev_fraction)
    paths = {
        "train": out_dir / "train.jsonl",
        "dev": out_dir / "dev.jsonl",
        "fixtures": out_dir / "fixtures.jsonl",
    }
    _write_jsonl(paths["train"], records[:-n_dev] if n_dev else records)
    _write_jsonl(paths["dev"], records[-n_dev:] if n_dev else [])
    _write_jsonl(paths["fixtures"], fixtures)
    return {k: str(v) for k, v in paths.items()}


def _write_jsonl(path: Path, objs: Sequence[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False,
                                separators=(",", ":")) + "\n")


# --- themed image/caption corpus for the ITM experiments ---

THEME_WORDS = (
    ("dog", "puppy", "bark", "leash"),
    ("cake", "frosting", "bake", "sugar"),
    ("ocean", "wave", "sail", "harbor"),
    ("guitar", "chord", "strum", "amp"),
)


def theme_vocabulary() -> Vocabulary:
    return build_vocabulary(" ".join(w for theme in THEME_WORDS for w in theme)
                            .split())


def _theme_regions(image_id: int, theme: int, d_v: int,
                   rng: np.random.Generator) -> ImageRegions:
    signal = np.zeros(d_v)
    signal[theme] = 4.0
    whole = RegionFeature(BoundingBox(0, 0, 64, 64),
                          signal + 0.05 * rng.standard_normal(d_v),
                          "image", 1.0)
    regions = [
        RegionFeature(BoundingBox(4.0 * k, 4.0 * k, 4.0 * k + 16, 4.0 * k + 16),
                      rng.standard_normal(d_v), "object",
                      float(1.0 - 0.1 * k))
        for k in range(2)
    ]
    return ImageRegions(image_id=image_id, whole_image=whole, regions=regions)


def _caption(theme: int, rng: np.random.Generator) -> str:
    words = THEME_WORDS[theme]
    return " ".join(words[int(i)] for i in rng.integers(len(words), size=3))


def make_itm_corpus(n_images: int, vocab: Vocabulary, seed: int = 0,
                    d_v: int = 64, max_len: int = 64, id_offset: int = 0
                    ) -> Tuple[List[dict], List[int], List[int]]:
    """Matched/mismatched (example, label) pairs over themed images.

    For every image: one example pairing it with its own themed caption
    (label 1 = match) and one pairing it with a caption from a different
    theme (label 0 = mismatch). Returns (examples, labels, ids); ids are
    unique per example so the same corpus doubles as a hateful-memes set
    with hateful := mismatch.
    """
    rng = np.random.default_rng([seed, 4242])
    n_themes = len(THEME_WORDS)
    examples, labels, ids = [], [], []
    for i in range(n_images):
        image_id = id_offset + i
        theme = image_id % n_themes
        regions = _theme_regions(image_id, theme, d_v, rng)
        other = (theme + 1 + int(rng.integers(n_themes - 1))) % n_themes
        for k, (cap_theme, match) in enumerate(((theme, 1), (other, 0))):
            record = MemeRecord(id=2 * image_id + k, img="synthetic",
                                text=_caption(cap_theme, rng),
                                label=1 - match)  # hateful := mismatched
            meme = EnrichedMeme(record=record)
            seq = build_sequence(meme, regions, vocab, max_len)
            examples.append({
                "token_ids": seq.token_ids,
                "segment_ids": seq.segment_ids,
                "position_ids": seq.position_ids,
                "visual_index": seq.visual_index,
                "attention_mask": seq.attention_mask,
                "features": regions.feature_table(),
            })
            labels.append(match)
            ids.append(record.id)
    return examples, labels, ids
