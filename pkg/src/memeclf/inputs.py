"""Tokenization and assembly of the extended tag-token input sequence.

Layout per meme:

    [CLS] caption [SEP] entity tags (separated by [SEP]) [SEP]
    person tags ("<race> <gender>", separated by [SEP]) [IMG]
    one region token per image region [END] [PAD]...

Every token carries a visual-feature index: 0 selects the whole-image
feature, k >= 1 selects region k. Caption and entity tokens link to the
whole image; person-tag tokens link to their assigned person region; region
tokens link to themselves.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .enrichment import EnrichedMeme, GENDER_LABELS, RACE_LABELS
from .features import ImageRegions

PAD, UNK, CLS, SEP, IMG, END = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[IMG]", "[END]"
RESERVED = (PAD, UNK, CLS, SEP, IMG, END)

DEFAULT_MAX_LEN = 64

# Segment ids by span type.
SEG_CAPTION, SEG_ENTITY, SEG_PERSON, SEG_IMAGE = 0, 1, 2, 3
NUM_SEGMENTS = 4

_TOKEN_RE = re.compile(r"[^a-z0-9_\s]+")


class SequenceConfigError(ValueError):
    pass


def split_words(text: str) -> List[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _TOKEN_RE.sub(" ", text.lower()).split()


class Vocabulary:
    """Token-to-id mapping with a fixed reserved block at ids 0..5."""

    def __init__(self, tokens: Sequence[str]):
        self._token_to_id: Dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self._token_to_id:
                raise ValueError(f"duplicate or reserved token {tok!r}")
            self._token_to_id[tok] = len(self._token_to_id)
        self._id_to_token = {i: t for t, i in self._token_to_id.items()}

    def __len__(self) -> int:
        return len(self._token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        return self._token_to_id.get(token, self._token_to_id[UNK])

    def token(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    def save(self, path) -> None:
        # One token per line; line number + reserved block size = id.
        tokens = [self._id_to_token[i]
                  for i in range(len(RESERVED), len(self._token_to_id))]
        Path(path).write_text("\n".join(tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln])

    def content_hash(self) -> str:
        body = "\n".join(self._id_to_token[i]
                         for i in range(len(self._token_to_id)))
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


def build_vocabulary(texts: Iterable[str],
                     extra_tokens: Iterable[str] = ()) -> Vocabulary:
    """Vocabulary over training captions/tags plus the closed tag label sets."""
    seen = set()
    for text in texts:
        seen.update(split_words(text))
    seen.update(RACE_LABELS)
    seen.update(GENDER_LABELS)
    seen.update(extra_tokens)
    return Vocabulary(sorted(seen))


def tokenize(text: str, vocab: Vocabulary) -> List[int]:
    return [vocab.id(w) for w in split_words(text)]


@dataclass(frozen=True)
class InputSequence:
    token_ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    visual_index: np.ndarray
    attention_mask: np.ndarray

    def __post_init__(self):
        arrays = (self.token_ids, self.segment_ids, self.position_ids,
                  self.visual_index, self.attention_mask)
        lengths = {a.shape for a in arrays}
        if len(lengths) != 1:
            raise ValueError(f"inconsistent vector lengths: {lengths}")

    def __len__(self) -> int:
        return len(self.token_ids)


def encode_examples(memes: Sequence[EnrichedMeme], provider,
                    vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN):
    """Build model-ready examples for a split: sequence vectors plus the
    per-meme visual feature table (row 0 = whole image).

    Returns (examples, ids, labels); labels use -1 for unlabeled memes.
    """
    examples, ids, labels = [], [], []
    for meme in memes:
        regions = provider.get_regions(meme.record.id)
        seq = build_sequence(meme, regions, vocab, max_len)
        examples.append({
            "token_ids": seq.token_ids,
            "segment_ids": seq.segment_ids,
            "position_ids": seq.position_ids,
            "visual_index": seq.visual_index,
            "attention_mask": seq.attention_mask,
            "features": regions.feature_table(),
        })
        ids.append(meme.record.id)
        labels.append(-1 if meme.record.label is None else meme.record.label)
    return examples, ids, labels


def build_sequence(meme: EnrichedMeme, regions: ImageRegions,
                   vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN
                   ) -> InputSequence:
    """Assemble the padded token/segment/position/visual-index vectors.

    When over budget, lowest-score entity tags are dropped first, then excess
    regions, then the caption tail, and person tags only as a last resort;
    [CLS], block-bounding separators, [IMG] and [END] always survive.
    """
    if max_len < 4:
        raise SequenceConfigError(
            f"max_len {max_len} cannot hold the [CLS]/[SEP]/[IMG]/[END] skeleton")

    caption = tokenize(meme.record.text, vocab)
    entities = [tokenize(t.description, vocab) for t in meme.entities]
    entities = [e for e in entities if e]
    persons = [(vocab.id(t.race), vocab.id(t.gender), t.person_region_index + 1)
               for t in meme.person_tags]
    n_regions = len(regions.regions)

    def total_len() -> int:
        n = 1 + len(caption) + 1                       # [CLS] caption [SEP]
        if entities:
            n += sum(len(e) for e in entities) + len(entities)  # seps + trailing
        if persons:
            n += 3 * len(persons) - 1                  # race gender + seps between
        n += 1 + n_regions + 1                         # [IMG] regions [END]
        return n

    while total_len() > max_len:
        if entities:
            entities.pop()
        elif n_regions > 0:
            n_regions -= 1
        elif caption:
            caption.pop()
        elif persons:
            persons.pop()
        else:
            raise SequenceConfigError(
                f"max_len {max_len} too small for the structural skeleton")

    tok: List[int] = []
    seg: List[int] = []
    vis: List[int] = []

    def emit(token_id: int, segment: int, visual: int = 0) -> None:
        tok.append(token_id)
        seg.append(segment)
        vis.append(visual)

    emit(vocab.id(CLS), SEG_CAPTION)
    for t in caption:
        emit(t, SEG_CAPTION)
    emit(vocab.id(SEP), SEG_CAPTION)

    if entities:
        for i, ent in enumerate(entities):
            if i > 0:
                emit(vocab.id(SEP), SEG_ENTITY)
            for t in ent:
                emit(t, SEG_ENTITY)
        emit(vocab.id(SEP), SEG_ENTITY)

    for i, (race_id, gender_id, visual) in enumerate(persons):
        if i > 0:
            emit(vocab.id(SEP), SEG_PERSON)
        emit(race_id, SEG_PERSON, visual)
        emit(gender_id, SEG_PERSON, visual)

    emit(vocab.id(IMG), SEG_IMAGE)
    for k in range(1, n_regions + 1):
        emit(vocab.id(IMG), SEG_IMAGE, k)
    emit(vocab.id(END), SEG_IMAGE)

    real = len(tok)
    assert real <= max_len
    pad_id = vocab.id(PAD)
    tok += [pad_id] * (max_len - real)
    seg += [SEG_CAPTION] * (max_len - real)
    vis += [0] * (max_len - real)
    mask = [1] * real + [0] * (max_len - real)

    return InputSequence(
        token_ids=np.asarray(tok, dtype=np.int64),
        segment_ids=np.asarray(seg, dtype=np.int64),
        position_ids=np.arange(max_len, dtype=np.int64),
        visual_index=np.asarray(vis, dtype=np.int64),
        attention_mask=np.asarray(mask, dtype=np.int64),
    )
