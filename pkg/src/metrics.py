"""
Corpus-level TER and BLEU.
"""
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple
import math

from .exceptions import AlignmentError
from .ter import ter

NGRAM_ORDER = 4
BLEU_SMOOTHING = "add-one on n>=2 precisions with zero matches"


@dataclass
class MetricReport:
    """Corpus scores for one system; ``ter`` is a fraction, ``bleu`` is 0-100."""
    ter: float
    bleu: float
    sentence_ters: List[float] = field(default_factory=list)
    sentence_edits: List[Tuple[int, int]] = field(default_factory=list)
    bleu_smoothing: str = BLEU_SMOOTHING

    @property
    def ter_percent(self) -> float:
        return 100.0 * self.ter

    def as_dict(self) -> Dict[str, float]:
        return {'TER': round(self.ter_percent, 2), 'BLEU': round(self.bleu, 2)}


def _check_aligned(hyps: Sequence, refs: Sequence) -> None:
    if len(hyps) != len(refs):
        raise AlignmentError(f"{len(hyps)} hypotheses but {len(refs)} references")


def sentence_stats(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> List[Tuple[int, int]]:
    """Per-sentence (edits, reference length) tallies."""
    _check_aligned(hyps, refs)
    stats = []
    for hyp, ref in zip(hyps, refs):
        _, trace = ter(hyp, ref)
        stats.append((trace.num_edits, trace.ref_len))
    return stats


def ter_from_stats(stats: Sequence[Tuple[int, int]]) -> float:
    """Micro-averaged TER from (edits, ref_len) tallies."""
    total_ref = sum(length for _, length in stats)
    if total_ref == 0:
        raise ValueError("Corpus TER needs at least one reference token")
    return sum(edits for edits, _ in stats) / total_ref


def ter_corpus(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> float:
    """Total edits divided by total reference tokens."""
    return ter_from_stats(sentence_stats(hyps, refs))


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> float:
    """Corpus BLEU (single reference, up to 4-grams).

    Modified n-gram precisions are combined by geometric mean. Precisions of
    order 2 and above that have zero matches are add-one smoothed; a zero
    unigram precision yields 0.

    Args:
        hyps: Tokenized hypotheses
        refs: Tokenized references

    Returns:
        BLEU on a 0-100 scale
    """
    _check_aligned(hyps, refs)
    if not hyps:
        raise ValueError("BLEU needs a non-empty corpus")

    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    sys_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        sys_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, NGRAM_ORDER + 1):
            hyp_counts = _ngrams(hyp, n)
            ref_counts = _ngrams(ref, n)
            correct[n - 1] += sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
            total[n - 1] += max(len(hyp) - n + 1, 0)

    if sys_len == 0 or correct[0] == 0:
        return 0.0

    log_precision = 0.0
    for n in range(NGRAM_ORDER):
        if correct[n] == 0:
            precision = 1.0 / (total[n] + 1)
        else:
            precision = correct[n] / total[n]
        log_precision += math.log(precision)

    brevity_penalty = 1.0
    if sys_len < ref_len:
        brevity_penalty = math.exp(1 - ref_len / sys_len)
    return 100.0 * brevity_penalty * math.exp(log_precision / NGRAM_ORDER)


def evaluate_system(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> MetricReport:
    """Corpus TER, BLEU and per-sentence TER for one system."""
    stats = sentence_stats(hyps, refs)
    return MetricReport(
        ter=ter_from_stats(stats),
        bleu=bleu(hyps, refs),
        sentence_ters=[edits / length for edits, length in stats],
        sentence_edits=stats,
    )
