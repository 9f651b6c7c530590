"""
Shared test fixtures for the corpus, metric and harness tests.
"""
import pytest

from src.corpus import ApeTriplet, Corpus, Origin, QeAnnotation
from src.toy import build_toy_corpora

HI = "hin_Deva"
MR = "mar_Deva"
EN = "eng_Latn"

SMALL_TOY_SIZES = {
    "parallel-train": 40,
    "parallel-dev": 8,
    "synthetic": 60,
    "synthetic-dev": 8,
    "authentic-train": 24,
    "authentic-dev": 8,
    "test": 10,
}


def make_triplet(source, mt, pe, target=HI, source_lang=EN, domain="news", origin=Origin.SYNTHETIC):
    """Build a triplet from space-separated strings."""
    return ApeTriplet(tuple(source.split()), tuple(mt.split()), tuple(pe.split()),
                      target, source_lang, domain, origin)


@pytest.fixture
def small_corpus():
    """Four synthetic triplets over two target languages."""
    return Corpus([
        make_triplet("a b c", "x y z", "x y w"),
        make_triplet("d e", "p q", "p q", target=MR),
        make_triplet("f g h", "r s t", "r t s"),
        make_triplet("i j", "u v", "u k", target=MR),
    ])


@pytest.fixture
def annotated_corpus():
    """Authentic triplets with one masked DA score."""
    corpus = Corpus([
        make_triplet("a b", "x y", "x y", origin=Origin.AUTHENTIC, domain="news"),
        make_triplet("c d", "p q", "p r", target=MR, origin=Origin.AUTHENTIC, domain="health"),
        make_triplet("e f", "s t u", "s t", origin=Origin.AUTHENTIC, domain="tourism"),
    ])
    return corpus.with_annotations([
        QeAnnotation(90.0, True, ("OK", "OK")),
        QeAnnotation(None, False, ("OK", "BAD")),
        QeAnnotation(60.0, True, ("OK", "OK", "BAD")),
    ])


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    """Small toy corpora written once per session."""
    root = tmp_path_factory.mktemp("toy")
    build_toy_corpora(root, seed=17, sizes=SMALL_TOY_SIZES)
    return root
