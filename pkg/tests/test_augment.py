"""
Unit tests for cross-target augmentation.
"""
import pytest

from src.augment import (
    DEFAULT_SEP,
    AugmentMode,
    additional_pair_triplets,
    augment_synthetic,
    external_candidate_triplets,
    make_quadruples,
    quadruples_per_direction,
    split_candidate,
)
from src.corpus import Corpus, Origin
from src.exceptions import ConfigurationError, DataError
from src.translators import CipherTranslator

from .conftest import EN, HI, MR, make_triplet

EXTERNAL = {HI: MR, MR: HI}


@pytest.fixture
def translator():
    return CipherTranslator([(EN, HI), (EN, MR)], seed=3)


class TestQuadruples:
    """Test cases for quadruple sampling."""

    def test_sampling_without_replacement(self, small_corpus, translator):
        quads = make_quadruples(small_corpus, translator, 4, seed=1, external_langs=EXTERNAL)
        assert sorted(q.index for q in quads) == [0, 1, 2, 3]
        for quad in quads:
            triplet = small_corpus.triplets[quad.index]
            assert quad.post_edit == triplet.post_edit
            assert quad.external_lang == EXTERNAL[triplet.target_lang]

    def test_seeded(self, small_corpus, translator):
        first = make_quadruples(small_corpus, translator, 2, seed=9, external_langs=EXTERNAL)
        second = make_quadruples(small_corpus, translator, 2, seed=9, external_langs=EXTERNAL)
        assert first == second

    def test_too_many_requested(self, small_corpus, translator):
        with pytest.raises(ValueError):
            make_quadruples(small_corpus, translator, 5, seed=1, external_langs=EXTERNAL)

    def test_missing_external_language(self, small_corpus, translator):
        with pytest.raises(ConfigurationError):
            make_quadruples(small_corpus, translator, 1, seed=1, external_langs={HI: MR})

    def test_failures_draw_from_the_rest_of_the_pool(self, small_corpus):
        translator = CipherTranslator([(EN, HI), (EN, MR)], fail_on={"a"})
        quads = make_quadruples(small_corpus, translator, 3, seed=2, external_langs=EXTERNAL)
        assert len(quads) == 3
        assert 0 not in {q.index for q in quads}

    def test_equal_counts_per_direction(self, small_corpus, translator):
        quads = quadruples_per_direction(small_corpus, translator, 2, seed=4, external_langs=EXTERNAL)
        assert sorted(q.target_lang for q in quads) == [HI, HI, MR, MR]
        for quad in quads:
            assert small_corpus.triplets[quad.index].target_lang == quad.target_lang


class TestAugmentation:
    """Test cases for the two augmentation schemes."""

    def test_additional_pairs(self, small_corpus, translator):
        quads = make_quadruples(small_corpus, translator, 2, seed=1, external_langs=EXTERNAL)
        extra = additional_pair_triplets(quads)
        for quad, triplet in zip(quads, extra):
            assert triplet.source == quad.external_translation
            assert triplet.source_lang == quad.external_lang
            assert triplet.origin is Origin.AUGMENTED_PAIR

    def test_candidate_round_trip(self, small_corpus, translator):
        quads = make_quadruples(small_corpus, translator, 2, seed=1, external_langs=EXTERNAL)
        candidates = external_candidate_triplets(quads)
        for quad, triplet in zip(quads, candidates):
            assert triplet.translation.count(DEFAULT_SEP) == 1
            assert split_candidate(triplet.translation) == (quad.translation, quad.external_translation)

    def test_separator_in_data_rejected(self, translator):
        corpus = Corpus([make_triplet("a", f"x {DEFAULT_SEP}", "x")])
        quads = make_quadruples(corpus, translator, 1, seed=1, external_langs=EXTERNAL)
        with pytest.raises(DataError):
            external_candidate_triplets(quads)

    def test_split_candidate_needs_one_separator(self):
        with pytest.raises(DataError):
            split_candidate(("x", "y"))

    def test_pairs_append(self, small_corpus, translator):
        quads = make_quadruples(small_corpus, translator, 3, seed=1, external_langs=EXTERNAL)
        augmented = augment_synthetic(small_corpus, quads, AugmentMode.PAIRS)
        assert len(augmented) == len(small_corpus) + 3
        assert augmented.triplets[:4] == small_corpus.triplets

    def test_candidates_replace_sampled(self, small_corpus, translator):
        original = small_corpus.triplets
        quads = make_quadruples(small_corpus, translator, 2, seed=1, external_langs=EXTERNAL)
        augmented = augment_synthetic(small_corpus, quads, "candidates")
        assert len(augmented) == len(small_corpus)
        sampled = {q.index for q in quads}
        for index, triplet in enumerate(augmented):
            if index in sampled:
                assert triplet.origin is Origin.AUGMENTED_CANDIDATE
            else:
                assert triplet == original[index]
        assert small_corpus.triplets == original

    def test_unknown_mode(self, small_corpus):
        with pytest.raises(ConfigurationError):
            augment_synthetic(small_corpus, [], "triples")
