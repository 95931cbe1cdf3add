import numpy as np
import pytest

from memeclf.dataset_io import MemeRecord
from memeclf.enrichment import EnrichedMeme, EntityTag, PersonTag
from memeclf.features import BoundingBox, ImageRegions, RegionFeature
from memeclf.inputs import Vocabulary, build_vocabulary


def make_regions(image_id, n_regions, d_v=8, classes=None, rng=None):
    rng = rng or np.random.default_rng(image_id)
    classes = classes or ["object"] * n_regions
    whole = RegionFeature(BoundingBox(0, 0, 64, 64),
                          rng.standard_normal(d_v), "image", 1.0)
    regions = [
        RegionFeature(BoundingBox(2.0 * k, 2.0 * k, 2.0 * k + 10, 2.0 * k + 10),
                      rng.standard_normal(d_v), classes[k],
                      float(1.0 - 0.05 * k))
        for k in range(n_regions)
    ]
    return ImageRegions(image_id=image_id, whole_image=whole, regions=regions)


def make_random_example(rng, vocab_size, max_len, d_v, n_rows):
    """Random encoded example with a real-token prefix and padded suffix."""
    real = int(rng.integers(2, max_len + 1))
    token_ids = rng.integers(0, vocab_size, size=max_len)
    visual_index = rng.integers(0, n_rows, size=max_len)
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:real] = 1
    return {
        "token_ids": token_ids.astype(np.int64),
        "segment_ids": rng.integers(0, 4, size=max_len).astype(np.int64),
        "position_ids": np.arange(max_len, dtype=np.int64),
        "visual_index": visual_index.astype(np.int64),
        "attention_mask": mask,
        "features": rng.standard_normal((n_rows, d_v)),
    }


@pytest.fixture
def small_vocab() -> Vocabulary:
    return build_vocabulary(["a b hello world toast breakfast cat dog"])


@pytest.fixture
def simple_meme(small_vocab):
    record = MemeRecord(1, "img/1.png", "a b", 0)
    return EnrichedMeme(
        record=record,
        entities=[EntityTag("toast", 0.9)],
        person_tags=[PersonTag(1, "white", "male")],
    )
