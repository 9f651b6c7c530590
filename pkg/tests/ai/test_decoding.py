"""
Unit tests for greedy and beam-search decoding.
"""
import pytest

from src.ai.decoding import beam_search, decode_corpus, greedy_decode
from src.corpus import Corpus


class TestDecoding:
    """Test cases for decoding an untrained tiny model."""

    def test_beam_one_equals_greedy(self, ape_model, vocab, authentic):
        for triplet in authentic.triplets[:5]:
            greedy = greedy_decode(ape_model, vocab, [triplet.source], [triplet.translation], max_len=12)[0]
            beam = beam_search(ape_model, vocab, triplet.source, triplet.translation, beam=1, max_len=12)
            assert beam == greedy

    def test_nmt_beam_one_equals_greedy(self, nmt_model, vocab, authentic):
        source = authentic.triplets[0].source
        assert beam_search(nmt_model, vocab, source, beam=1, max_len=10) == \
            greedy_decode(nmt_model, vocab, [source], max_len=10)[0]

    def test_outputs_never_contain_reserved_tokens(self, ape_model, vocab, authentic):
        reserved = set(vocab.lang_ids) | {vocab.sep, "<pad>", "<s>"}
        for triplet in authentic.triplets[:3]:
            output = beam_search(ape_model, vocab, triplet.source, triplet.translation, beam=3, max_len=12)
            assert not reserved & set(output)

    def test_length_cap(self, ape_model, vocab, authentic):
        triplet = authentic.triplets[0]
        output = greedy_decode(ape_model, vocab, [triplet.source], [triplet.translation], max_len=3)[0]
        assert len(output) <= 3

    def test_decode_corpus_greedy_path(self, ape_model, vocab, authentic):
        corpus = Corpus(authentic.triplets[:4])
        outputs = decode_corpus(ape_model, vocab, corpus, beam=1, max_len=8, batch_size=4)
        assert len(outputs) == 4
        singles = [decode_corpus(ape_model, vocab, Corpus([t]), beam=3, max_len=8)[0] for t in corpus]
        assert len(singles) == 4

    def test_invalid_beam(self, ape_model, vocab, authentic):
        triplet = authentic.triplets[0]
        with pytest.raises(ValueError):
            beam_search(ape_model, vocab, triplet.source, triplet.translation, beam=0)
