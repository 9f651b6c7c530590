"""
Seeded toy bilingual APE corpora.

One toy source language translates into two related toy target languages.
Both targets share word stems and differ only in their suffix and clause-final
particle, so a model has to follow the LangId to pick the right surface forms.
A toy MT system makes systematic mistakes (wrong-language suffixes, missed
reordering, dropped particles, duplicated words) which the post-edit fixes.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union
import hashlib
import json
import logging

import numpy as np

from .corpus import (
    ApeTriplet, Corpus, LangId, Origin, ParallelPair, Tokens, build_synthetic_triplets, load_corpus_dir,
    load_parallel, save_corpus, save_parallel,
)
from .exceptions import TranslatorError
from .qe import attach_da
from .ter import ter
from .translators import ExternalTranslator
from .validation import validate_probability

logger = logging.getLogger(__name__)

SOURCE_LANG = "eng_Latn"
TOY_PAIRS: Dict[str, Tuple[LangId, LangId]] = {
    "en-hi": (SOURCE_LANG, "hin_Deva"),
    "en-mr": (SOURCE_LANG, "mar_Deva"),
}
PAIR_DOMAINS: Dict[str, Tuple[str, ...]] = {
    "en-hi": ("news", "tourism", "law"),
    "en-mr": ("news", "tourism", "health"),
}
DEFAULT_GROUPING: Dict[str, str] = {
    "news": "news",
    "tourism": "tourism",
    "health": "general",
    "law": "general",
}
TOY_SIZES: Dict[str, int] = {
    "parallel-train": 800,
    "parallel-dev": 80,
    "synthetic": 1200,
    "synthetic-dev": 80,
    "authentic-train": 300,
    "authentic-dev": 60,
    "test": 100,
}
AUTHENTIC_SPLITS = ("authentic-train", "authentic-dev", "test")
SYNTHETIC_SPLITS = ("synthetic", "synthetic-dev")
MANIFEST = "toy.json"

_CONSONANTS = "bdgklmnprstv"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class ToyLanguage:
    code: LangId
    suffix: str
    particle: str


TOY_LANGUAGES: Dict[LangId, ToyLanguage] = {
    "hin_Deva": ToyLanguage("hin_Deva", "ka", "hai"),
    "mar_Deva": ToyLanguage("mar_Deva", "ru", "ahe"),
}


@dataclass(frozen=True)
class ToyNoise:
    """Per-sentence error rates of the toy MT system."""
    wrong_suffix: float = 0.25
    missed_reorder: float = 0.3
    dropped_particle: float = 0.15
    duplicate: float = 0.1

    def scaled(self, factor: float) -> 'ToyNoise':
        return ToyNoise(*(min(1.0, rate * factor) for rate in
                          (self.wrong_suffix, self.missed_reorder, self.dropped_particle, self.duplicate)))


@dataclass
class ToyLexicon:
    """Source stems grouped by domain, plus the clause-initial verbs."""
    verbs: List[str]
    common: List[str]
    domains: Dict[str, List[str]]

    @classmethod
    def generate(cls, seed: int, per_domain: int = 16, verbs: int = 8, common: int = 8) -> 'ToyLexicon':
        rng = np.random.default_rng(seed)
        syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
        stems = sorted({a + b for a in syllables for b in syllables})
        order = rng.permutation(len(stems))
        pool = iter(stems[i] for i in order)
        domain_names = sorted({d for domains in PAIR_DOMAINS.values() for d in domains})
        return cls(
            verbs=[next(pool) for _ in range(verbs)],
            common=[next(pool) for _ in range(common)],
            domains={name: [next(pool) for _ in range(per_domain)] for name in domain_names},
        )

    @property
    def stems(self) -> List[str]:
        return self.verbs + self.common + [s for name in sorted(self.domains) for s in self.domains[name]]

    def to_dict(self) -> Dict[str, Any]:
        return {"verbs": self.verbs, "common": self.common, "domains": self.domains}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ToyLexicon':
        return cls(list(data["verbs"]), list(data["common"]), {k: list(v) for k, v in data["domains"].items()})


def reference_translation(source: Sequence[str], language: ToyLanguage) -> Tokens:
    """Objects first, then the verb, then the clause-final particle."""
    words = [w + language.suffix for w in source]
    return tuple(words[1:] + words[:1] + [language.particle])


def language_vocabulary(lexicon: ToyLexicon, code: LangId) -> Set[str]:
    """Every surface word of one toy target language."""
    language = TOY_LANGUAGES[code]
    return {stem + language.suffix for stem in lexicon.stems} | {language.particle}


def _sentence_seed(seed: int, text: str) -> List[int]:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return [seed, int.from_bytes(digest, "little")]


class ToyMtTranslator(ExternalTranslator):
    """The toy MT system: reference translation plus seeded systematic errors.

    Output depends only on (seed, sentence, direction), so repeated or
    concurrent calls agree.
    """

    def __init__(self, seed: int = 17, noise: Optional[ToyNoise] = None, max_workers: int = 1):
        super().__init__([TOY_PAIRS[pair] for pair in TOY_PAIRS], max_workers=max_workers)
        self.seed = seed
        self.noise = noise or ToyNoise()

    def translate(self, sentence: Sequence[str], source_lang: LangId, target_lang: LangId) -> Tokens:
        if not self.supports(source_lang, target_lang):
            raise TranslatorError(f"Unsupported direction {source_lang}->{target_lang}")
        if not sentence:
            raise TranslatorError("Empty sentence")
        language = TOY_LANGUAGES[target_lang]
        other = next(l for code, l in TOY_LANGUAGES.items() if code != target_lang)
        rng = np.random.default_rng(_sentence_seed(self.seed, f"{target_lang}|{' '.join(sentence)}"))

        words = [w + (other.suffix if rng.random() < self.noise.wrong_suffix else language.suffix)
                 for w in sentence]
        if rng.random() >= self.noise.missed_reorder:
            words = words[1:] + words[:1]
        if rng.random() >= self.noise.dropped_particle:
            words.append(language.particle)
        if rng.random() < self.noise.duplicate:
            position = int(rng.integers(len(words)))
            words.insert(position, words[position])
        return tuple(words)


class _SentenceSampler:
    """Draws source sentences that never repeat within one pair."""

    def __init__(self, lexicon: ToyLexicon, rng: np.random.Generator, min_len: int = 3, max_len: int = 6):
        self.lexicon = lexicon
        self.rng = rng
        self.min_len = min_len
        self.max_len = max_len
        self.seen: Set[Tokens] = set()

    def draw(self, domains: Sequence[str]) -> Tuple[Tokens, str]:
        while True:
            domain = domains[int(self.rng.integers(len(domains)))]
            vocabulary = self.lexicon.common + self.lexicon.domains[domain]
            length = int(self.rng.integers(self.min_len, self.max_len + 1))
            verb = self.lexicon.verbs[int(self.rng.integers(len(self.lexicon.verbs)))]
            objects = [vocabulary[int(i)] for i in self.rng.integers(len(vocabulary), size=length - 1)]
            sentence = (verb, *objects)
            if sentence not in self.seen:
                self.seen.add(sentence)
                return sentence, domain


def _authentic_corpus(sentences: Sequence[Tuple[Tokens, str]], source_lang: LangId, target_lang: LangId,
                      translator: ToyMtTranslator, rng: np.random.Generator, na_rate: float) -> Corpus:
    language = TOY_LANGUAGES[target_lang]
    triplets = []
    da_table: Dict[int, float] = {}
    for index, (source, domain) in enumerate(sentences):
        mt = translator.translate(source, source_lang, target_lang)
        pe = reference_translation(source, language)
        triplets.append(ApeTriplet(source, mt, pe, target_lang, source_lang, domain, Origin.AUTHENTIC))
        score, _ = ter(mt, pe)
        if rng.random() >= na_rate:
            da_table[index] = round(float(np.clip(100.0 * (1.0 - score) + rng.normal(0.0, 5.0), 0.0, 100.0)), 1)
    return attach_da(Corpus(triplets), da_table, (0.0, 100.0))


def build_toy_corpora(out_dir: Union[str, Path], seed: int = 17,
                      sizes: Optional[Mapping[str, int]] = None,
                      noise: Optional[ToyNoise] = None, na_rate: float = 0.2) -> Dict[str, Any]:
    """Write the toy corpora for both pairs under ``out_dir``.

    Layout per pair: ``parallel/{train,dev}.{src,ref}`` and one
    :func:`save_corpus` directory per triplet split. Synthetic triplets come
    from the toy MT system through :func:`build_synthetic_triplets`;
    authentic ones carry domains, DA scores (some masked) and word tags.

    Returns:
        The toy manifest written to ``toy.json``
    """
    out_dir = Path(out_dir)
    validate_probability(na_rate, "na_rate")
    sizes = {**TOY_SIZES, **(sizes or {})}
    lexicon = ToyLexicon.generate(seed)
    translator = ToyMtTranslator(seed, noise)
    authentic_translator = ToyMtTranslator(seed + 1, (noise or ToyNoise()).scaled(0.8))
    manifest: Dict[str, Any] = {
        "seed": seed, "sizes": sizes, "pairs": {}, "grouping": DEFAULT_GROUPING,
        "lexicon": lexicon.to_dict(), "noise": vars(translator.noise),
    }

    for offset, (pair, (source_lang, target_lang)) in enumerate(sorted(TOY_PAIRS.items())):
        rng = np.random.default_rng([seed, offset])
        sampler = _SentenceSampler(lexicon, rng)
        pair_dir = out_dir / pair
        all_domains = sorted(lexicon.domains)
        language = TOY_LANGUAGES[target_lang]

        for split in ("train", "dev"):
            count = sizes[f"parallel-{split}"]
            pairs = [ParallelPair(s, reference_translation(s, language), source_lang, target_lang)
                     for s, _ in (sampler.draw(all_domains) for _ in range(count))]
            save_parallel(pairs, pair_dir / "parallel", split)

        counts: Dict[str, int] = {}
        for split in SYNTHETIC_SPLITS:
            pairs = [ParallelPair(s, reference_translation(s, language), source_lang, target_lang)
                     for s, _ in (sampler.draw(all_domains) for _ in range(sizes[split]))]
            corpus = build_synthetic_triplets(pairs, translator)
            counts[split] = save_corpus(corpus, pair_dir / split)["total"]
        for split in AUTHENTIC_SPLITS:
            sentences = [sampler.draw(PAIR_DOMAINS[pair]) for _ in range(sizes[split])]
            corpus = _authentic_corpus(sentences, source_lang, target_lang, authentic_translator, rng, na_rate)
            counts[split] = save_corpus(corpus, pair_dir / split)["total"]

        manifest["pairs"][pair] = {"source_lang": source_lang, "target_lang": target_lang,
                                   "domains": list(PAIR_DOMAINS[pair]), "counts": counts}
        logger.info(f"Toy pair {pair}: {counts}")

    with open(out_dir / MANIFEST, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    return manifest


@dataclass
class ToyPair:
    """Every split of one toy pair, as loaded from disk."""
    name: str
    source_lang: LangId
    target_lang: LangId
    parallel_train: List[ParallelPair]
    parallel_dev: List[ParallelPair]
    synthetic: Corpus
    synthetic_dev: Corpus
    authentic_train: Corpus
    authentic_dev: Corpus
    test: Corpus


@dataclass
class ToyData:
    root: Path
    manifest: Dict[str, Any]
    pairs: Dict[str, ToyPair] = field(default_factory=dict)

    @property
    def lexicon(self) -> ToyLexicon:
        return ToyLexicon.from_dict(self.manifest["lexicon"])

    @property
    def grouping(self) -> Dict[str, str]:
        return dict(self.manifest["grouping"])

    def translator(self) -> ToyMtTranslator:
        return ToyMtTranslator(self.manifest["seed"], ToyNoise(**self.manifest["noise"]))


def load_toy_corpora(root: Union[str, Path], pairs: Optional[Iterable[str]] = None) -> ToyData:
    """Load corpora written by :func:`build_toy_corpora`."""
    root = Path(root)
    with open(root / MANIFEST, encoding="utf-8") as f:
        manifest = json.load(f)
    data = ToyData(root, manifest)
    for name in pairs or sorted(manifest["pairs"]):
        info = manifest["pairs"][name]
        source_lang, target_lang = info["source_lang"], info["target_lang"]
        pair_dir = root / name
        data.pairs[name] = ToyPair(
            name, source_lang, target_lang,
            load_parallel(pair_dir / "parallel" / "train.src", pair_dir / "parallel" / "train.ref",
                          source_lang, target_lang),
            load_parallel(pair_dir / "parallel" / "dev.src", pair_dir / "parallel" / "dev.ref",
                          source_lang, target_lang),
            *(load_corpus_dir(pair_dir / split) for split in SYNTHETIC_SPLITS + AUTHENTIC_SPLITS),
        )
    return data


def language_consistency(outputs: Sequence[Sequence[str]], target_langs: Sequence[LangId],
                         lexicon: ToyLexicon) -> float:
    """Share of outputs whose every word belongs to the requested toy language."""
    if len(outputs) != len(target_langs):
        raise ValueError("outputs and target languages differ in length")
    if not outputs:
        return 1.0
    vocabularies = {code: language_vocabulary(lexicon, code) for code in set(target_langs)}
    consistent = sum(
        1 for output, code in zip(outputs, target_langs)
        if output and all(word in vocabularies[code] for word in output)
    )
    return consistent / len(outputs)
