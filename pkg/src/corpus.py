"""
APE corpus data model and corpus operations.

A corpus is an ordered, immutable sequence of triplets (source, machine
translation, post-edit) with optional index-aligned QE annotations. Files on
disk are line-aligned UTF-8 text: ``.src``, ``.mt``, ``.pe``, ``.meta`` and,
for annotated corpora, ``.da`` and ``.tags``, plus ``manifest.json``.
"""
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union
import json
import logging
import unicodedata

import numpy as np
import regex

from .exceptions import (
    AlignmentError,
    ConfigurationError,
    CorpusIOError,
    DataError,
    RecordError,
)
from .settings import DEFAULT_LANG_IDS
from .validation import validate_lang_id, validate_tokens

logger = logging.getLogger(__name__)

LangId = str
Tokens = Tuple[str, ...]

OK = "OK"
BAD = "BAD"
NA = "NA"
FILE_SUFFIXES = ("src", "mt", "pe", "meta")

_PUNCT = regex.compile(r"([\p{Ps}\p{Pe}\p{Pi}\p{Pf}\p{Po}])")


class Origin(str, Enum):
    SYNTHETIC = "synthetic"
    AUTHENTIC = "authentic"
    AUGMENTED_PAIR = "augmented-pair"
    AUGMENTED_CANDIDATE = "augmented-candidate"


class LangIdMode(str, Enum):
    NONE = "none"
    ONLY_AUTHENTIC = "only-authentic"
    ALL = "all"


def normalize_text(text: str) -> str:
    """NFC-normalize and detach punctuation."""
    text = unicodedata.normalize("NFC", text)
    return _PUNCT.sub(r" \1 ", text)


def tokenize(text: str) -> Tokens:
    """Whitespace tokens after normalization."""
    return tuple(normalize_text(text).split())


@dataclass(frozen=True)
class ApeTriplet:
    """One APE training unit."""
    source: Tokens
    translation: Tokens
    post_edit: Tokens
    target_lang: LangId
    source_lang: LangId
    domain: str = "unknown"
    origin: Origin = Origin.SYNTHETIC

    def __post_init__(self):
        object.__setattr__(self, 'source', tuple(self.source))
        object.__setattr__(self, 'translation', tuple(self.translation))
        object.__setattr__(self, 'post_edit', tuple(self.post_edit))
        object.__setattr__(self, 'origin', Origin(self.origin))
        validate_tokens(self.source, "source")
        validate_tokens(self.translation, "translation")
        validate_tokens(self.post_edit, "post-edit")
        if self.source_lang == self.target_lang:
            raise RecordError(f"Cross-lingual triplet needs distinct languages, got {self.source_lang}")

    @property
    def pair(self) -> str:
        return f"{self.source_lang}-{self.target_lang}"

    def unprefixed_source(self) -> Tokens:
        """Source without a leading target LangId token."""
        if self.source and self.source[0] == self.target_lang:
            return self.source[1:]
        return self.source


@dataclass(frozen=True)
class QeAnnotation:
    """Sentence DA score with availability mask, plus OK/BAD tags per MT token."""
    da_score: Optional[float] = None
    da_available: bool = False
    word_tags: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.word_tags is not None:
            object.__setattr__(self, 'word_tags', tuple(self.word_tags))
            bad = set(self.word_tags) - {OK, BAD}
            if bad:
                raise RecordError(f"Unknown word tags: {sorted(bad)}")
        if not self.da_available and self.da_score is not None:
            raise RecordError("DA score given for an instance marked unavailable")
        if self.da_available and self.da_score is None:
            raise RecordError("DA marked available without a score")


@dataclass(frozen=True)
class ParallelPair:
    """Generic parallel-data unit."""
    source: Tokens
    reference: Tokens
    source_lang: LangId
    target_lang: LangId

    def __post_init__(self):
        object.__setattr__(self, 'source', tuple(self.source))
        object.__setattr__(self, 'reference', tuple(self.reference))
        validate_tokens(self.source, "source")
        validate_tokens(self.reference, "reference")


@dataclass(frozen=True)
class CorpusMeta:
    """Default per-line metadata for files that carry none."""
    source_lang: LangId
    target_lang: LangId
    domain: str = "unknown"
    origin: Origin = Origin.AUTHENTIC


def manifest_key(triplet: ApeTriplet) -> str:
    return f"{triplet.pair}|{triplet.domain}|{triplet.origin.value}"


@dataclass(frozen=True)
class Corpus:
    """Ordered triplets with optional index-aligned annotations."""
    triplets: Tuple[ApeTriplet, ...] = ()
    annotations: Optional[Tuple[QeAnnotation, ...]] = None
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'triplets', tuple(self.triplets))
        if self.annotations is not None:
            object.__setattr__(self, 'annotations', tuple(self.annotations))
            if len(self.annotations) != len(self.triplets):
                raise AlignmentError(
                    f"{len(self.annotations)} annotations for {len(self.triplets)} triplets"
                )
            for index, (triplet, annotation) in enumerate(zip(self.triplets, self.annotations)):
                if annotation.word_tags is not None and len(annotation.word_tags) != len(triplet.translation):
                    raise AlignmentError(
                        f"Triplet {index}: {len(annotation.word_tags)} tags for "
                        f"{len(triplet.translation)} MT tokens"
                    )

    def __len__(self) -> int:
        return len(self.triplets)

    def __iter__(self) -> Iterator[ApeTriplet]:
        return iter(self.triplets)

    @property
    def manifest(self) -> Dict[str, int]:
        """Triplet counts per (language pair, domain, origin)."""
        return dict(sorted(Counter(manifest_key(t) for t in self.triplets).items()))

    @property
    def has_annotations(self) -> bool:
        return self.annotations is not None

    def annotation(self, index: int) -> QeAnnotation:
        if self.annotations is None:
            return QeAnnotation()
        return self.annotations[index]

    def select(self, indices: Sequence[int], **provenance: Any) -> 'Corpus':
        """Sub-corpus of the given indices, in the given order."""
        triplets = [self.triplets[i] for i in indices]
        annotations = None
        if self.annotations is not None:
            annotations = [self.annotations[i] for i in indices]
        return Corpus(triplets, annotations, {**self.provenance, **provenance})

    def with_annotations(self, annotations: Sequence[QeAnnotation], **provenance: Any) -> 'Corpus':
        return Corpus(self.triplets, tuple(annotations), {**self.provenance, **provenance})

    def with_provenance(self, **provenance: Any) -> 'Corpus':
        return Corpus(self.triplets, self.annotations, {**self.provenance, **provenance})


def _read_lines(path: Path) -> List[str]:
    try:
        with open(path, encoding="utf-8") as f:
            return [line.rstrip("\n").rstrip("\r") for line in f]
    except OSError as e:
        raise CorpusIOError(f"Failed to read {path}: {str(e)}", path=str(path))


def _check_line_counts(files: Mapping[Path, List[str]], reference: Path) -> None:
    expected = len(files[reference])
    for path, lines in files.items():
        if len(lines) != expected:
            raise AlignmentError(
                f"{path} has {len(lines)} lines, expected {expected} (from {reference})",
                path=str(path),
            )


def _tokens_or_error(line: str, path: Path, line_number: int) -> Tokens:
    tokens = tokenize(line)
    if not tokens:
        raise RecordError(f"Empty line {line_number} in {path}", line_number=line_number, path=str(path))
    return tokens


def _parse_da(value: str, path: Path, line_number: int) -> QeAnnotation:
    if value.strip() == NA:
        return QeAnnotation()
    try:
        return QeAnnotation(da_score=float(value), da_available=True)
    except ValueError:
        raise RecordError(f"Invalid DA value {value!r}", line_number=line_number, path=str(path))


def load_corpus(source_path: Union[str, Path], mt_path: Union[str, Path], pe_path: Union[str, Path],
                meta: Optional[CorpusMeta] = None, meta_path: Optional[Union[str, Path]] = None,
                da_path: Optional[Union[str, Path]] = None,
                tags_path: Optional[Union[str, Path]] = None) -> Corpus:
    """Load line-aligned source/MT/post-edit files into a corpus.

    Args:
        source_path: File with one source sentence per line
        mt_path: File with one machine translation per line
        pe_path: File with one post-edit per line
        meta: Language pair, domain and origin applied to every line
        meta_path: Optional per-line ``src_lang<TAB>tgt_lang<TAB>domain<TAB>origin`` file
        da_path: Optional DA file (score or ``NA`` per line)
        tags_path: Optional OK/BAD tags file

    Returns:
        Corpus with one triplet per line
    """
    paths = [Path(source_path), Path(mt_path), Path(pe_path)]
    extra = [Path(p) for p in (meta_path, da_path, tags_path) if p is not None]
    with ThreadPoolExecutor(max_workers=4) as pool:
        contents = list(pool.map(_read_lines, paths + extra))
    files = dict(zip(paths + extra, contents))
    _check_line_counts(files, paths[0])

    meta_lines = files[Path(meta_path)] if meta_path is not None else None
    if meta is None and meta_lines is None:
        raise ConfigurationError("load_corpus needs either meta or a per-line meta file")

    triplets = []
    src_lines, mt_lines, pe_lines = contents[:3]
    for index, (src, mt, pe) in enumerate(zip(src_lines, mt_lines, pe_lines)):
        line_number = index + 1
        if meta_lines is not None:
            fields = meta_lines[index].split("\t")
            if len(fields) != 4:
                raise RecordError(f"Malformed meta line {line_number}", line_number=line_number,
                                  path=str(meta_path))
            source_lang, target_lang, domain, origin = fields
        else:
            source_lang, target_lang, domain, origin = (
                meta.source_lang, meta.target_lang, meta.domain, meta.origin
            )
        triplets.append(ApeTriplet(
            source=_tokens_or_error(src, paths[0], line_number),
            translation=_tokens_or_error(mt, paths[1], line_number),
            post_edit=_tokens_or_error(pe, paths[2], line_number),
            target_lang=target_lang,
            source_lang=source_lang,
            domain=domain,
            origin=Origin(origin),
        ))

    annotations = None
    if da_path is not None or tags_path is not None:
        annotations = []
        for index in range(len(triplets)):
            annotation = QeAnnotation()
            if da_path is not None:
                annotation = _parse_da(files[Path(da_path)][index], Path(da_path), index + 1)
            if tags_path is not None:
                tags = tuple(files[Path(tags_path)][index].split())
                annotation = replace(annotation, word_tags=tags or None)
            annotations.append(annotation)

    corpus = Corpus(triplets, annotations, {"source": str(paths[0])})
    logger.info(f"Loaded {len(corpus)} triplets from {paths[0]}")
    return corpus


def load_corpus_dir(directory: Union[str, Path], stem: str = "corpus") -> Corpus:
    """Load a corpus written by :func:`save_corpus`."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    provenance: Dict[str, Any] = {}
    if manifest_path.exists():
        with open(manifest_path, encoding="utf-8") as f:
            provenance = json.load(f).get("provenance", {})
    da_path = directory / f"{stem}.da"
    tags_path = directory / f"{stem}.tags"
    corpus = load_corpus(
        directory / f"{stem}.src", directory / f"{stem}.mt", directory / f"{stem}.pe",
        meta_path=directory / f"{stem}.meta",
        da_path=da_path if da_path.exists() else None,
        tags_path=tags_path if tags_path.exists() else None,
    )
    return corpus.with_provenance(**provenance)


def load_parallel(source_path: Union[str, Path], reference_path: Union[str, Path],
                  source_lang: LangId, target_lang: LangId) -> List[ParallelPair]:
    """Load line-aligned parallel files."""
    source_path, reference_path = Path(source_path), Path(reference_path)
    files = {source_path: _read_lines(source_path), reference_path: _read_lines(reference_path)}
    _check_line_counts(files, source_path)
    pairs = []
    for index, (src, ref) in enumerate(zip(files[source_path], files[reference_path])):
        pairs.append(ParallelPair(
            source=_tokens_or_error(src, source_path, index + 1),
            reference=_tokens_or_error(ref, reference_path, index + 1),
            source_lang=source_lang,
            target_lang=target_lang,
        ))
    return pairs


def save_parallel(pairs: Sequence[ParallelPair], directory: Union[str, Path], stem: str) -> None:
    """Write parallel pairs as ``<stem>.src`` / ``<stem>.ref``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_lines(directory / f"{stem}.src", [" ".join(p.source) for p in pairs])
    _write_lines(directory / f"{stem}.ref", [" ".join(p.reference) for p in pairs])


def build_synthetic_triplets(pairs: Sequence[ParallelPair], translator) -> Corpus:
    """Build (source, MT(source), reference) triplets from parallel data.

    Sentences the translator fails on are skipped with a warning.

    Args:
        pairs: Parallel pairs; the reference plays the post-edit role
        translator: An ExternalTranslator

    Returns:
        Corpus of synthetic triplets
    """
    directions = {(p.source_lang, p.target_lang) for p in pairs}
    for direction in directions:
        if not translator.supports(*direction):
            raise ConfigurationError(f"Translator does not support {direction[0]}->{direction[1]}")

    translations = translator.translate_batch(
        [(p.source, p.source_lang, p.target_lang) for p in pairs]
    )
    triplets = []
    for index, (pair, translation) in enumerate(zip(pairs, translations)):
        if not translation:
            logger.warning(f"Translator failed on pair {index}; skipping")
            continue
        triplets.append(ApeTriplet(
            source=pair.source,
            translation=translation,
            post_edit=pair.reference,
            target_lang=pair.target_lang,
            source_lang=pair.source_lang,
            domain="unknown",
            origin=Origin.SYNTHETIC,
        ))
    if pairs and not triplets:
        raise DataError("Translator failed on every sentence; synthetic corpus is empty")
    logger.info(f"Built {len(triplets)} synthetic triplets from {len(pairs)} pairs")
    return Corpus(triplets, None, {"built_from_pairs": len(pairs), "skipped": len(pairs) - len(triplets)})


def merge_multilingual(corpora: Sequence[Corpus], seed: int) -> Corpus:
    """Concatenate corpora and apply a seeded uniform permutation."""
    if not corpora:
        raise ValueError("merge_multilingual needs at least one corpus")
    triplets: List[ApeTriplet] = []
    annotations: List[QeAnnotation] = []
    any_annotated = any(c.has_annotations for c in corpora)
    for corpus in corpora:
        triplets.extend(corpus.triplets)
        if any_annotated:
            annotations.extend(corpus.annotations or [QeAnnotation()] * len(corpus))

    order = np.random.default_rng(seed).permutation(len(triplets))
    merged_triplets = [triplets[i] for i in order]
    merged_annotations = [annotations[i] for i in order] if any_annotated else None
    provenance = {"merged_from": [len(c) for c in corpora], "merge_seed": seed}
    return Corpus(merged_triplets, merged_annotations, provenance)


def prefix_langid(corpus: Corpus, mode: Union[str, LangIdMode],
                  valid_codes: Optional[Iterable[str]] = None) -> Corpus:
    """Prepend the target LangId token to selected sources.

    Args:
        corpus: Input corpus
        mode: ``none``, ``only-authentic`` or ``all``
        valid_codes: Closed set of LangIds (defaults to the built-in set)

    Returns:
        Corpus with prefixed sources; already-prefixed sources are untouched
    """
    try:
        mode = LangIdMode(mode)
    except ValueError:
        raise ConfigurationError(f"Unknown LangId mode: {mode}")
    if mode is LangIdMode.NONE:
        return corpus

    codes = list(valid_codes) if valid_codes is not None else DEFAULT_LANG_IDS
    triplets = []
    for triplet in corpus.triplets:
        validate_lang_id(triplet.target_lang, codes)
        selected = mode is LangIdMode.ALL or triplet.origin is Origin.AUTHENTIC
        if selected and triplet.source[0] != triplet.target_lang:
            triplet = replace(triplet, source=(triplet.target_lang,) + triplet.source)
        triplets.append(triplet)
    return Corpus(triplets, corpus.annotations, {**corpus.provenance, "langid_mode": mode.value})


def prefix_parallel(pairs: Sequence[ParallelPair], valid_codes: Optional[Iterable[str]] = None) -> List[ParallelPair]:
    """Prepend the target LangId token to every parallel source (idempotent)."""
    codes = list(valid_codes) if valid_codes is not None else DEFAULT_LANG_IDS
    prefixed = []
    for pair in pairs:
        validate_lang_id(pair.target_lang, codes)
        if pair.source[0] != pair.target_lang:
            pair = replace(pair, source=(pair.target_lang,) + pair.source)
        prefixed.append(pair)
    return prefixed


def do_nothing_ter(corpus: Corpus) -> float:
    """Corpus-level TER between translations and post-edits."""
    from .metrics import ter_corpus
    return ter_corpus([t.translation for t in corpus], [t.post_edit for t in corpus])


def partition_cts_phases(synthetic: Corpus, threshold_ter: Optional[float] = None) -> Tuple[Corpus, Corpus]:
    """Split synthetic data into the two curriculum phases.

    Phase 1 holds triplets whose TER(translation, post-edit) is above the
    threshold, phase 2 those at or below it. The threshold defaults to the
    corpus-level Do-Nothing TER.
    """
    from .ter import ter

    if threshold_ter is None:
        threshold_ter = do_nothing_ter(synthetic) if len(synthetic) else 0.0
    if threshold_ter < 0:
        raise ValueError(f"threshold_ter must be >= 0, got {threshold_ter}")

    phase1, phase2 = [], []
    for index, triplet in enumerate(synthetic.triplets):
        score, _ = ter(triplet.translation, triplet.post_edit)
        (phase1 if score > threshold_ter else phase2).append(index)
    logger.info(
        f"CTS split at TER {threshold_ter:.4f}: {len(phase1)} phase-1 / {len(phase2)} phase-2 triplets"
    )
    return (
        synthetic.select(phase1, cts_phase=1, cts_threshold=threshold_ter),
        synthetic.select(phase2, cts_phase=2, cts_threshold=threshold_ter),
    )


def split_by_domain(corpus: Corpus, grouping: Mapping[str, str],
                    default_group: Optional[str] = None) -> Dict[str, Corpus]:
    """Partition a corpus into domain groups.

    Every declared group gets an entry, possibly empty.
    """
    groups: Dict[str, List[int]] = {group: [] for group in grouping.values()}
    if default_group is not None:
        groups.setdefault(default_group, [])
    for index, triplet in enumerate(corpus.triplets):
        group = grouping.get(triplet.domain, default_group)
        if group is None:
            raise ConfigurationError(f"Domain {triplet.domain!r} is not covered by the grouping")
        groups[group].append(index)
    return {group: corpus.select(indices, domain_group=group) for group, indices in groups.items()}


def split_ids_disjoint(train: Sequence[Corpus], *evaluation: Corpus) -> None:
    """Raise DataError if an evaluation triplet also occurs in training data."""
    def key(t: ApeTriplet) -> Tuple[Tokens, Tokens, Tokens]:
        return (t.unprefixed_source(), t.translation, t.post_edit)

    seen = {key(t) for corpus in train for t in corpus}
    for corpus in evaluation:
        overlap = [t for t in corpus if key(t) in seen]
        if overlap:
            raise DataError(f"{len(overlap)} evaluation triplets also occur in training data")


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    try:
        with open(path, 'w', encoding="utf-8") as f:
            for line in lines:
                f.write(line + "\n")
    except OSError as e:
        raise CorpusIOError(f"Failed to write {path}: {str(e)}", path=str(path))


def save_corpus(corpus: Corpus, directory: Union[str, Path], stem: str = "corpus") -> Dict[str, Any]:
    """Write a corpus as line-aligned files plus manifest.json.

    Returns:
        The manifest summary that was written
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CorpusIOError(f"Cannot create {directory}: {str(e)}", path=str(directory))

    files = {
        "src": [" ".join(t.source) for t in corpus],
        "mt": [" ".join(t.translation) for t in corpus],
        "pe": [" ".join(t.post_edit) for t in corpus],
        "meta": [f"{t.source_lang}\t{t.target_lang}\t{t.domain}\t{t.origin.value}" for t in corpus],
    }
    if corpus.annotations is not None:
        files["da"] = [
            repr(float(a.da_score)) if a.da_available else NA for a in corpus.annotations
        ]
        files["tags"] = [" ".join(a.word_tags or ()) for a in corpus.annotations]
    for suffix, lines in files.items():
        _write_lines(directory / f"{stem}.{suffix}", lines)

    manifest = {
        "total": len(corpus),
        "counts": corpus.manifest,
        "files": [f"{stem}.{suffix}" for suffix in files],
        "annotated": corpus.has_annotations,
        "provenance": corpus.provenance,
    }
    manifest_path = directory / "manifest.json"
    try:
        with open(manifest_path, 'w', encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, ensure_ascii=False, default=str)
    except OSError as e:
        raise CorpusIOError(f"Failed to write {manifest_path}: {str(e)}", path=str(manifest_path))
    return manifest
