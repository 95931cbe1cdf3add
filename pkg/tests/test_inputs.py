import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memeclf.dataset_io import MemeRecord
from memeclf.enrichment import (EnrichedMeme, EntityTag, PersonTag,
                                GENDER_LABELS, RACE_LABELS)
from memeclf.inputs import (CLS, END, IMG, PAD, SEP, UNK, SequenceConfigError,
                            SEG_CAPTION, SEG_ENTITY, SEG_IMAGE, SEG_PERSON,
                            Vocabulary, build_sequence, build_vocabulary,
                            split_words, tokenize)

from conftest import make_regions


class TestTokenize:
    def test_known_words(self, small_vocab):
        ids = tokenize("Hello world", small_vocab)
        assert ids == [small_vocab.id("hello"), small_vocab.id("world")]
        assert small_vocab.id(UNK) not in ids

    def test_empty_string(self, small_vocab):
        assert tokenize("", small_vocab) == []

    def test_oov_maps_to_unk(self, small_vocab):
        assert tokenize("zzzqqq", small_vocab) == [small_vocab.id(UNK)]

    def test_punctuation_stripped_and_lowercased(self, small_vocab):
        assert tokenize("HELLO, world!!", small_vocab) == \
            tokenize("hello world", small_vocab)

    def test_split_words(self):
        assert split_words("A dog's day... off!") == ["a", "dog", "s", "day", "off"]


class TestVocabulary:
    def test_reserved_ids_stable_and_distinct(self, small_vocab):
        ids = [small_vocab.id(t) for t in (PAD, UNK, CLS, SEP, IMG, END)]
        assert ids == [0, 1, 2, 3, 4, 5]

    def test_injective(self, small_vocab):
        all_ids = [small_vocab.id(small_vocab.token(i))
                   for i in range(len(small_vocab))]
        assert len(set(all_ids)) == len(small_vocab)

    def test_tag_labels_always_present(self, small_vocab):
        for label in RACE_LABELS + GENDER_LABELS:
            assert label in small_vocab

    def test_save_load_round_trip(self, tmp_path, small_vocab):
        path = tmp_path / "vocab.txt"
        small_vocab.save(path)
        loaded = Vocabulary.load(path)
        assert len(loaded) == len(small_vocab)
        assert loaded.content_hash() == small_vocab.content_hash()
        assert loaded.id("hello") == small_vocab.id("hello")


class TestBuildSequence:
    def test_hand_assembled_layout(self, small_vocab, simple_meme):
        # caption "a b", entity "toast", person tag on region index 1,
        # 3 regions, L=20; layout derived by hand from the block order
        v = small_vocab
        regions = make_regions(1, 3)
        seq = build_sequence(simple_meme, regions, v, max_len=20)
        expected_tokens = [
            v.id(CLS), v.id("a"), v.id("b"), v.id(SEP),
            v.id("toast"), v.id(SEP),
            v.id("white"), v.id("male"),
            v.id(IMG), v.id(IMG), v.id(IMG), v.id(IMG), v.id(END),
        ] + [v.id(PAD)] * 7
        assert seq.token_ids.tolist() == expected_tokens
        assert seq.visual_index.tolist() == \
            [0, 0, 0, 0, 0, 0, 2, 2, 0, 1, 2, 3, 0] + [0] * 7
        assert seq.segment_ids.tolist() == \
            [SEG_CAPTION] * 4 + [SEG_ENTITY] * 2 + [SEG_PERSON] * 2 \
            + [SEG_IMAGE] * 5 + [SEG_CAPTION] * 7
        assert seq.attention_mask.tolist() == [1] * 13 + [0] * 7
        assert seq.position_ids.tolist() == list(range(20))

    def test_no_tags_degenerate_layout(self, small_vocab):
        v = small_vocab
        meme = EnrichedMeme(record=MemeRecord(2, "x.png", "hello world", 0))
        regions = make_regions(2, 2)
        seq = build_sequence(meme, regions, v, max_len=12)
        real = [v.id(CLS), v.id("hello"), v.id("world"), v.id(SEP),
                v.id(IMG), v.id(IMG), v.id(IMG), v.id(END)]
        assert seq.token_ids.tolist()[:8] == real
        assert all(x == 0 for x in seq.visual_index.tolist()[:4])

    def test_multiple_tags_separated(self, small_vocab):
        v = small_vocab
        meme = EnrichedMeme(
            record=MemeRecord(3, "x.png", "a", 0),
            entities=[EntityTag("toast", 0.9), EntityTag("cat", 0.5)],
            person_tags=[PersonTag(0, "white", "male"),
                         PersonTag(2, "black", "female")],
        )
        seq = build_sequence(meme, make_regions(3, 3), v, max_len=32)
        toks = seq.token_ids.tolist()
        expected_prefix = [
            v.id(CLS), v.id("a"), v.id(SEP),
            v.id("toast"), v.id(SEP), v.id("cat"), v.id(SEP),
            v.id("white"), v.id("male"), v.id(SEP),
            v.id("black"), v.id("female"),
            v.id(IMG),
        ]
        assert toks[:len(expected_prefix)] == expected_prefix
        # person-tag tokens carry their region index + 1
        vis = seq.visual_index.tolist()
        assert vis[7:9] == [1, 1] and vis[10:12] == [3, 3]

    def test_length_always_exact(self, small_vocab, simple_meme):
        for L in (14, 20, 64):
            seq = build_sequence(simple_meme, make_regions(1, 3),
                                 small_vocab, max_len=L)
            assert len(seq) == L

    def test_truncation_drops_entities_first(self, small_vocab):
        v = small_vocab
        meme = EnrichedMeme(
            record=MemeRecord(4, "x.png", "a b", 0),
            entities=[EntityTag("toast", 0.9), EntityTag("breakfast", 0.4)],
            person_tags=[PersonTag(0, "white", "male")],
        )
        regions = make_regions(4, 3)
        full = build_sequence(meme, regions, v, max_len=64)
        tight = build_sequence(meme, regions, v, max_len=14)
        # lowest-score entity ("breakfast") gone, higher one kept
        assert v.id("breakfast") in full.token_ids.tolist()
        assert v.id("breakfast") not in tight.token_ids.tolist()
        assert v.id("toast") in tight.token_ids.tolist()

    def test_truncation_then_regions_then_caption(self, small_vocab):
        v = small_vocab
        meme = EnrichedMeme(record=MemeRecord(5, "x.png", "a b hello world", 0))
        regions = make_regions(5, 4)
        seq = build_sequence(meme, regions, v, max_len=8)
        toks = seq.token_ids.tolist()
        # oracle by length accounting: 1+4+1 caption block + 1+4+1 image
        # block = 12 > 8; dropping all 4 regions gives 8 exactly
        assert toks == [v.id(CLS), v.id("a"), v.id("b"), v.id("hello"),
                        v.id("world"), v.id(SEP), v.id(IMG), v.id(END)]

    def test_structural_tokens_survive_any_budget(self, small_vocab, simple_meme):
        v = small_vocab
        for L in range(4, 30):
            seq = build_sequence(simple_meme, make_regions(1, 5), v, max_len=L)
            toks = seq.token_ids.tolist()
            assert toks[0] == v.id(CLS)
            assert v.id(IMG) in toks and v.id(END) in toks

    def test_too_small_budget_fatal(self, small_vocab, simple_meme):
        with pytest.raises(SequenceConfigError):
            build_sequence(simple_meme, make_regions(1, 2), small_vocab,
                           max_len=3)

    def test_determinism(self, small_vocab, simple_meme):
        regions = make_regions(1, 3)
        a = build_sequence(simple_meme, regions, small_vocab, 20)
        b = build_sequence(simple_meme, regions, small_vocab, 20)
        np.testing.assert_array_equal(a.token_ids, b.token_ids)
        np.testing.assert_array_equal(a.visual_index, b.visual_index)

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_random_memes_keep_invariants(self, data):
        vocab = build_vocabulary(["alpha beta gamma delta epsilon"])
        n_regions = data.draw(st.integers(0, 6))
        caption = " ".join(data.draw(
            st.lists(st.sampled_from(["alpha", "beta", "gamma"]), max_size=10)))
        entities = [EntityTag(w, s)
                    for w, s in data.draw(st.lists(st.tuples(
                        st.sampled_from(["delta", "epsilon"]),
                        st.floats(0.1, 1.0)), max_size=3))]
        person_tags = [
            PersonTag(data.draw(st.integers(0, max(n_regions - 1, 0))),
                      data.draw(st.sampled_from(RACE_LABELS)),
                      data.draw(st.sampled_from(GENDER_LABELS)))
            for _ in range(data.draw(st.integers(0, 2)))
            if n_regions > 0
        ]
        meme = EnrichedMeme(MemeRecord(1, "x.png", caption or "alpha", 0),
                            entities, person_tags)
        regions = make_regions(1, n_regions)
        L = data.draw(st.integers(8, 48))
        seq = build_sequence(meme, regions, vocab, max_len=L)
        assert len(seq) == L
        mask = seq.attention_mask.tolist()
        assert mask == sorted(mask, reverse=True)  # padding is a suffix
        # visual_index stays within the feature table
        assert seq.visual_index.max() <= n_regions
        # person-tag tokens carry region index + 1 wherever they survived
        for tag in person_tags:
            race_id = vocab.id(tag.race)
            positions = [i for i, t in enumerate(seq.token_ids.tolist())
                         if t == race_id and seq.segment_ids[i] == SEG_PERSON]
            for pos in positions:
                assert seq.visual_index[pos] >= 1
