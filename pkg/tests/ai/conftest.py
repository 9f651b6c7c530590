"""
Shared test fixtures for the neural components.
"""
import pytest
import torch

from src.ai.config import ModelConfig
from src.ai.model import ApeModel, add_translation_encoder, attach_qe_heads, collate_batch
from src.ai.vocab import Vocabulary
from src.settings import DEFAULT_LANG_IDS
from src.toy import load_toy_corpora


def tiny_config(vocab, **overrides):
    """A model small enough to train on CPU in seconds."""
    values = dict(vocab_size=len(vocab), embed_dim=16, ff_dim=32, encoder_layers=2, decoder_layers=2,
                  heads=2, max_len=64, adapter_dim=8, dropout=0.0)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture(scope="session")
def toy_data(toy_root):
    """Both toy pairs loaded from the session corpora."""
    return load_toy_corpora(toy_root)


@pytest.fixture(scope="session")
def vocab(toy_data):
    """Joint vocabulary trained on every toy split."""
    sentences = []
    for pair in toy_data.pairs.values():
        for parallel in pair.parallel_train + pair.parallel_dev:
            sentences.extend([parallel.source, parallel.reference])
        for corpus in (pair.synthetic, pair.synthetic_dev, pair.authentic_train, pair.authentic_dev, pair.test):
            for triplet in corpus:
                sentences.extend([triplet.source, triplet.translation, triplet.post_edit])
    return Vocabulary.train(sentences, DEFAULT_LANG_IDS, vocab_size=400)


@pytest.fixture
def model_config(vocab):
    return tiny_config(vocab)


@pytest.fixture
def nmt_model(model_config):
    torch.manual_seed(0)
    return ApeModel(model_config)


@pytest.fixture
def ape_model(nmt_model):
    return add_translation_encoder(nmt_model)


@pytest.fixture
def qe_model(ape_model):
    torch.manual_seed(1)
    return attach_qe_heads(ape_model)


@pytest.fixture
def authentic(toy_data):
    """Annotated en-hi authentic training triplets."""
    return toy_data.pairs["en-hi"].authentic_train


@pytest.fixture
def qe_batch(vocab, authentic, model_config):
    """Four annotated triplets, at least one with DA."""
    indices = list(range(4))
    triplets = [authentic.triplets[i] for i in indices]
    return collate_batch(vocab, [t.source for t in triplets], [t.post_edit for t in triplets],
                         [t.translation for t in triplets], [authentic.annotation(i) for i in indices],
                         max_len=model_config.max_len)
