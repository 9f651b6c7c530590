"""
Quality-estimation annotation: OK/BAD word tags and sentence DA scores.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd

from .corpus import BAD, OK, Corpus, QeAnnotation, Tokens
from .exceptions import CorpusIOError, RecordError
from .ter import MATCH, ter
from .validation import validate_da_score, validate_tokens

logger = logging.getLogger(__name__)


class DaScheme(str, Enum):
    IDENTITY = "identity"
    ZSCORE = "zscore"
    MINMAX = "minmax"


def word_tags(mt: Sequence[str], pe: Sequence[str]) -> Tokens:
    """One OK/BAD tag per MT token from the TER alignment of MT against the post-edit."""
    validate_tokens(mt, "translation")
    validate_tokens(pe, "post-edit")
    _, trace = ter(mt, pe)
    tags: List[Optional[str]] = [None] * len(mt)
    for link in trace.alignment:
        if link.hyp is not None:
            tags[link.hyp] = OK if link.kind == MATCH else BAD
    return tuple(tags)


def attach_da(corpus: Corpus, da_table: Mapping[int, float],
              da_range: Tuple[float, float] = (0.0, 100.0)) -> Corpus:
    """Annotate every triplet with word tags and, where the table has its index, a DA score.

    Args:
        corpus: Corpus to annotate
        da_table: Map from line index to DA score
        da_range: Declared score range for this dataset

    Returns:
        Annotated corpus; indices missing from the table are masked
    """
    for index in da_table:
        if not 0 <= index < len(corpus):
            raise RecordError(f"DA table index {index} outside corpus of {len(corpus)}", line_number=index)
    annotations = []
    for index, triplet in enumerate(corpus):
        tags = word_tags(triplet.translation, triplet.post_edit)
        if index in da_table:
            score = da_table[index]
            validate_da_score(score, da_range, index)
            annotations.append(QeAnnotation(float(score), True, tags))
        else:
            annotations.append(QeAnnotation(None, False, tags))
    logger.info(f"Attached DA to {len(da_table)} of {len(corpus)} triplets")
    return corpus.with_annotations(annotations, da_range=list(da_range))


def normalize_da(annotations: Sequence[QeAnnotation],
                 scheme: Union[str, DaScheme]) -> Tuple[List[QeAnnotation], Dict[str, Any]]:
    """Normalize the available DA scores; masked entries are left as they are.

    ``zscore`` uses the population standard deviation. Degenerate inputs
    (fewer than two scores, zero spread) fall back to identity.

    Returns:
        Tuple of (annotations, normalization record for the manifest)
    """
    scheme = DaScheme(scheme)
    available = np.array([a.da_score for a in annotations if a.da_available], dtype=np.float64)
    record: Dict[str, Any] = {"scheme": scheme.value}
    if scheme is DaScheme.IDENTITY:
        return list(annotations), record

    if len(available) < 2:
        logger.warning(f"{scheme.value} needs at least 2 DA scores, got {len(available)}; using identity")
        return list(annotations), {"scheme": DaScheme.IDENTITY.value, "requested": scheme.value}

    if scheme is DaScheme.ZSCORE:
        center, spread = float(available.mean()), float(available.std())
    else:
        center, spread = float(available.min()), float(available.max() - available.min())
    if spread == 0.0:
        logger.warning(f"Degenerate DA spread for {scheme.value}; using identity")
        return list(annotations), {"scheme": DaScheme.IDENTITY.value, "requested": scheme.value}

    record.update({"center": center, "scale": spread})
    normalized = [
        QeAnnotation((a.da_score - center) / spread, True, a.word_tags) if a.da_available else a
        for a in annotations
    ]
    return normalized, record


def annotate_corpus(corpus: Corpus, da_table: Mapping[int, float],
                    da_range: Tuple[float, float] = (0.0, 100.0),
                    scheme: Union[str, DaScheme] = DaScheme.IDENTITY) -> Tuple[Corpus, Dict[str, Any]]:
    """Attach word tags and DA scores, then normalize the scores."""
    annotated = attach_da(corpus, da_table, da_range)
    annotations, record = normalize_da(annotated.annotations, scheme)
    return annotated.with_annotations(annotations, da_normalization=record), record


def read_da_table(path: Union[str, Path]) -> Dict[int, float]:
    """Read an ``index<TAB>score`` file; ``NA`` scores are skipped."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep="\t", header=None, names=["line", "score"],
                            dtype={"line": "Int64", "score": str}, keep_default_na=False)
    except (OSError, pd.errors.ParserError, ValueError) as e:
        raise CorpusIOError(f"Cannot read DA table {path}: {str(e)}", path=str(path))

    table: Dict[int, float] = {}
    for row_number, row in enumerate(frame.itertuples(index=False), 1):
        if row.score.strip() == "NA":
            continue
        try:
            table[int(row.line)] = float(row.score)
        except (TypeError, ValueError):
            raise RecordError(f"Invalid DA row {row_number}", line_number=row_number, path=str(path))
    return table
