"""
Cross-target data augmentation for synthetic APE corpora.

Sampled triplets are extended with a translation of their source into the
other target language (a quadruple). Quadruples then yield either extra
training directions (additional pairs) or a second translation candidate
appended after the separator token (external candidates).
"""
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from .corpus import ApeTriplet, Corpus, LangId, Origin, QeAnnotation, Tokens
from .exceptions import ConfigurationError, DataError, RecordError
from .validation import validate_reserved_token, validate_tokens

logger = logging.getLogger(__name__)

DEFAULT_SEP = "<sep>"


class AugmentMode(str, Enum):
    PAIRS = "pairs"
    CANDIDATES = "candidates"


@dataclass(frozen=True)
class ApeQuadruple:
    """A triplet extended with an external translation of its source."""
    source: Tokens
    external_translation: Tokens
    translation: Tokens
    post_edit: Tokens
    langs: Tuple[LangId, LangId, LangId]
    domain: str = "unknown"
    index: Optional[int] = None

    def __post_init__(self):
        for name in ('source', 'external_translation', 'translation', 'post_edit'):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            validate_tokens(getattr(self, name), name.replace('_', ' '))
        object.__setattr__(self, 'langs', tuple(self.langs))
        if self.external_lang == self.target_lang:
            raise RecordError(f"External language must differ from target language {self.target_lang}")

    @property
    def source_lang(self) -> LangId:
        return self.langs[0]

    @property
    def external_lang(self) -> LangId:
        return self.langs[1]

    @property
    def target_lang(self) -> LangId:
        return self.langs[2]


def make_quadruples(corpus: Corpus, translator, n: int, seed: int,
                    external_langs: Mapping[LangId, LangId]) -> List[ApeQuadruple]:
    """Sample ``n`` triplets without replacement and add external translations.

    Args:
        corpus: Synthetic corpus to sample from
        translator: ExternalTranslator for source_lang -> external language
        n: Number of quadruples
        seed: Sampling seed
        external_langs: Map from a triplet's target language to the cross-target language

    Returns:
        Quadruples in sampling order; fewer than ``n`` only if the pool is exhausted
        by translator failures
    """
    if n < 0 or n > len(corpus):
        raise ValueError(f"Cannot sample {n} quadruples from {len(corpus)} triplets")
    for triplet in corpus:
        if triplet.target_lang not in external_langs:
            raise ConfigurationError(f"No external language declared for target {triplet.target_lang}")
        external = external_langs[triplet.target_lang]
        if not translator.supports(triplet.source_lang, external):
            raise ConfigurationError(f"Translator does not support {triplet.source_lang}->{external}")

    order = [int(i) for i in np.random.default_rng(seed).permutation(len(corpus))]
    chosen: List[ApeQuadruple] = []
    cursor = 0
    while len(chosen) < n and cursor < len(order):
        take = order[cursor:cursor + (n - len(chosen))]
        cursor += len(take)
        batch = [corpus.triplets[i] for i in take]
        externals = translator.translate_batch(
            [(t.unprefixed_source(), t.source_lang, external_langs[t.target_lang]) for t in batch]
        )
        for index, triplet, external in zip(take, batch, externals):
            if not external:
                continue
            chosen.append(ApeQuadruple(
                source=triplet.unprefixed_source(),
                external_translation=external,
                translation=triplet.translation,
                post_edit=triplet.post_edit,
                langs=(triplet.source_lang, external_langs[triplet.target_lang], triplet.target_lang),
                domain=triplet.domain,
                index=index,
            ))
    if len(chosen) < n:
        logger.warning(f"Only {len(chosen)} of {n} quadruples built; translator failures exhausted the pool")
    return chosen


def quadruples_per_direction(corpus: Corpus, translator, n_per_direction: int, seed: int,
                             external_langs: Mapping[LangId, LangId]) -> List[ApeQuadruple]:
    """Equal-sized quadruple samples for every target language in the corpus."""
    by_target: Dict[LangId, List[int]] = {}
    for index, triplet in enumerate(corpus):
        by_target.setdefault(triplet.target_lang, []).append(index)

    quads: List[ApeQuadruple] = []
    for offset, target in enumerate(sorted(by_target)):
        indices = by_target[target]
        sub = corpus.select(indices)
        for quad in make_quadruples(sub, translator, n_per_direction, seed + offset, external_langs):
            quads.append(ApeQuadruple(
                quad.source, quad.external_translation, quad.translation, quad.post_edit,
                quad.langs, quad.domain, indices[quad.index],
            ))
    counts = Counter(f"{q.external_lang}-{q.target_lang}" for q in quads)
    if len(set(counts.values())) > 1:
        raise DataError(f"Unequal per-direction augmentation counts: {dict(counts)}")
    return quads


def additional_pair_triplets(quads: Sequence[ApeQuadruple]) -> Corpus:
    """One (external translation, translation, post-edit) triplet per quadruple."""
    triplets = [
        ApeTriplet(
            source=quad.external_translation,
            translation=quad.translation,
            post_edit=quad.post_edit,
            target_lang=quad.target_lang,
            source_lang=quad.external_lang,
            domain=quad.domain,
            origin=Origin.AUGMENTED_PAIR,
        )
        for quad in quads
    ]
    return Corpus(triplets, None, {"augmentation": AugmentMode.PAIRS.value, "quadruples": len(quads)})


def external_candidate_triplets(quads: Sequence[ApeQuadruple], sep: str = DEFAULT_SEP) -> Corpus:
    """One (source, translation <sep> external translation, post-edit) triplet per quadruple."""
    triplets = []
    for quad in quads:
        for name in ('source', 'external_translation', 'translation', 'post_edit'):
            validate_reserved_token(getattr(quad, name), sep, name.replace('_', ' '))
        triplets.append(ApeTriplet(
            source=quad.source,
            translation=quad.translation + (sep,) + quad.external_translation,
            post_edit=quad.post_edit,
            target_lang=quad.target_lang,
            source_lang=quad.source_lang,
            domain=quad.domain,
            origin=Origin.AUGMENTED_CANDIDATE,
        ))
    return Corpus(triplets, None, {"augmentation": AugmentMode.CANDIDATES.value, "quadruples": len(quads),
                                   "sep": sep})


def split_candidate(translation: Sequence[str], sep: str = DEFAULT_SEP) -> Tuple[Tokens, Tokens]:
    """Recover (translation, external translation) from a candidate sequence."""
    tokens = tuple(translation)
    if tokens.count(sep) != 1:
        raise DataError(f"Expected exactly one {sep!r} in candidate, found {tokens.count(sep)}")
    cut = tokens.index(sep)
    return tokens[:cut], tokens[cut + 1:]


def augment_synthetic(corpus: Corpus, quads: Sequence[ApeQuadruple],
                      mode: Union[str, AugmentMode], sep: str = DEFAULT_SEP) -> Corpus:
    """Apply one augmentation scheme to a synthetic corpus.

    ``pairs`` appends the additional-pair triplets. ``candidates`` replaces
    each sampled triplet with its external-candidate version. The input
    corpus is never modified.
    """
    try:
        mode = AugmentMode(mode)
    except ValueError:
        raise ConfigurationError(f"Unknown augmentation mode: {mode}")

    if mode is AugmentMode.PAIRS:
        extra = additional_pair_triplets(quads)
        triplets = corpus.triplets + extra.triplets
        annotations = None
        if corpus.annotations is not None:
            annotations = corpus.annotations + (QeAnnotation(),) * len(extra)
        return Corpus(triplets, annotations, {**corpus.provenance, **extra.provenance})

    candidates = external_candidate_triplets(quads, sep)
    replaced: List[ApeTriplet] = list(corpus.triplets)
    for quad, triplet in zip(quads, candidates.triplets):
        if quad.index is None:
            raise DataError("Candidate augmentation needs quadruples sampled from this corpus")
        replaced[quad.index] = triplet
    annotations = corpus.annotations
    if annotations is not None:
        cleared = list(annotations)
        for quad in quads:
            cleared[quad.index] = QeAnnotation(cleared[quad.index].da_score, cleared[quad.index].da_available)
        annotations = tuple(cleared)
    return Corpus(replaced, annotations, {**corpus.provenance, **candidates.provenance})
