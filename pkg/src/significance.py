"""
Paired approximate randomization test on corpus TER.
"""
from typing import Sequence, Tuple
import logging

import numpy as np

from .exceptions import AlignmentError

logger = logging.getLogger(__name__)

TEST_NAME = "paired approximate randomization (sign-flip) on corpus TER"
_CHUNK = 2000


def _corpus_ter(edits: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    return edits.sum(axis=-1) / lengths.sum(axis=-1)


def significance_test(scores_a: Sequence[Tuple[int, int]], scores_b: Sequence[Tuple[int, int]],
                      trials: int = 10000, seed: int = 17) -> float:
    """Estimate the p-value of the corpus TER difference between two systems.

    Each resampling swaps the two systems' sentence tallies with probability
    one half; the p-value is the fraction of resamplings whose absolute TER
    difference is at least the observed one.

    Args:
        scores_a: Per-sentence (edits, ref_len) of system A
        scores_b: Per-sentence (edits, ref_len) of system B, same sentences
        trials: Number of resamplings (at least 1000)
        seed: Seed for the resampling generator

    Returns:
        p-value in [0, 1]
    """
    if len(scores_a) != len(scores_b):
        raise AlignmentError(f"Systems scored on {len(scores_a)} and {len(scores_b)} sentences")
    if trials < 1000:
        raise ValueError(f"At least 1000 trials required, got {trials}")
    if not scores_a:
        raise ValueError("Significance test needs at least one sentence")

    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    observed = abs(_corpus_ter(a[:, 0], a[:, 1]) - _corpus_ter(b[:, 0], b[:, 1]))

    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < trials:
        size = min(_CHUNK, trials - done)
        swap = rng.random((size, len(a))) < 0.5
        edits_a = np.where(swap, b[:, 0], a[:, 0])
        edits_b = np.where(swap, a[:, 0], b[:, 0])
        lens_a = np.where(swap, b[:, 1], a[:, 1])
        lens_b = np.where(swap, a[:, 1], b[:, 1])
        delta = np.abs(_corpus_ter(edits_a, lens_a) - _corpus_ter(edits_b, lens_b))
        # tolerance absorbs float noise when the observed delta is zero
        hits += int(np.count_nonzero(delta >= observed - 1e-12))
        done += size

    p_value = hits / trials
    logger.debug(f"Randomization test: observed |dTER|={observed:.6f}, p={p_value:.4f}")
    return p_value
