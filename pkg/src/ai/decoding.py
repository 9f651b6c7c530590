"""
Greedy and beam-search decoding.
"""
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
import torch
import torch.nn.functional as F
from tqdm import tqdm

from ..corpus import Corpus, Tokens
from .model import ApeModel, SharedRepresentation, collate_batch
from .vocab import Vocabulary

logger = logging.getLogger(__name__)


def _banned_ids(vocab: Vocabulary) -> List[int]:
    return [vocab.pad_id, vocab.bos_id, vocab.sep_id] + vocab.lang_id_ids


def _step_log_probs(model: ApeModel, ys: torch.Tensor, shared: SharedRepresentation,
                    banned: List[int]) -> torch.Tensor:
    logits = model.decode(ys, shared)[:, -1, :]
    log_probs = F.log_softmax(logits, dim=-1)
    log_probs[:, banned] = float("-inf")
    return log_probs


def _length_cap(model: ApeModel, max_len: int) -> int:
    return min(max_len, model.config.max_len - 1)


def greedy_decode(model: ApeModel, vocab: Vocabulary, sources: Sequence[Sequence[str]],
                  translations: Optional[Sequence[Sequence[str]]] = None,
                  max_len: int = 64) -> List[Tokens]:
    """Batched argmax decoding; ties go to the lowest token id."""
    model.eval()
    device = next(model.parameters()).device
    batch = collate_batch(vocab, sources, translations=translations,
                          max_len=model.config.max_len).to(device)
    banned = _banned_ids(vocab)
    with torch.no_grad():
        shared = model.encode(batch)
        size = batch.size
        ys = torch.full((size, 1), vocab.bos_id, dtype=torch.long, device=device)
        finished = torch.zeros(size, dtype=torch.bool, device=device)
        for _ in range(_length_cap(model, max_len)):
            next_ids = _step_log_probs(model, ys, shared, banned).argmax(dim=-1)
            next_ids = torch.where(finished, torch.full_like(next_ids, vocab.pad_id), next_ids)
            ys = torch.cat([ys, next_ids.unsqueeze(1)], dim=1)
            finished |= next_ids == vocab.eos_id
            if bool(finished.all()):
                break
    return [vocab.decode(row[1:].tolist()) for row in ys]


def beam_search(model: ApeModel, vocab: Vocabulary, source: Sequence[str],
                translation: Optional[Sequence[str]] = None, beam: int = 5, max_len: int = 64,
                length_penalty: float = 1.0) -> Tokens:
    """Length-normalised beam search for one sentence.

    Hypotheses are ranked by cumulative log-probability; ties fall to the
    lower token id, then the lower beam rank. A hypothesis ending in
    end-of-sequence is scored by log-probability divided by
    ``length ** length_penalty``. The best finished hypothesis wins, or the
    best unfinished one if none finished within ``max_len``.
    """
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")
    model.eval()
    device = next(model.parameters()).device
    batch = collate_batch(vocab, [source], translations=[translation] if translation is not None else None,
                          max_len=model.config.max_len).to(device)
    banned = _banned_ids(vocab)
    cap = _length_cap(model, max_len)

    active: List[Tuple[List[int], float]] = [([], 0.0)]
    finished: List[Tuple[float, List[int]]] = []
    with torch.no_grad():
        shared = model.encode(batch)
        for _ in range(cap):
            n = len(active)
            ys = torch.tensor([[vocab.bos_id] + tokens for tokens, _ in active], dtype=torch.long, device=device)
            expanded = SharedRepresentation(shared.states.expand(n, -1, -1), shared.mask.expand(n, -1),
                                            shared.source_len)
            log_probs = _step_log_probs(model, ys, expanded, banned).double().cpu().numpy()
            totals = np.array([score for _, score in active])[:, None] + log_probs
            vocab_size = log_probs.shape[1]
            beam_index = np.repeat(np.arange(n), vocab_size)
            token_index = np.tile(np.arange(vocab_size), n)
            order = np.lexsort((beam_index, token_index, -log_probs.reshape(-1), -totals.reshape(-1)))

            next_active: List[Tuple[List[int], float]] = []
            for rank, flat in enumerate(order[:2 * beam]):
                total = float(totals.reshape(-1)[flat])
                if total == float("-inf"):
                    break
                tokens = active[beam_index[flat]][0]
                token = int(token_index[flat])
                if token == vocab.eos_id:
                    if rank < beam:
                        length = len(tokens) + 1
                        finished.append((total / length ** length_penalty, tokens))
                    continue
                next_active.append((tokens + [token], total))
                if len(next_active) == beam:
                    break
            if len(finished) >= beam or not next_active:
                break
            active = next_active

    if finished:
        best = max(range(len(finished)), key=lambda i: (finished[i][0], -i))
        return vocab.decode(finished[best][1])
    best_tokens, _ = max(active, key=lambda item: item[1] / max(len(item[0]), 1) ** length_penalty)
    return vocab.decode(best_tokens)


def decode_corpus(model: ApeModel, vocab: Vocabulary, corpus: Corpus, beam: int = 5, max_len: int = 64,
                  length_penalty: float = 1.0, batch_size: int = 64, use_translation: bool = True,
                  progress: bool = False) -> List[Tokens]:
    """Post-edit every triplet; beam 1 runs batched greedy decoding."""
    sources = [t.source for t in corpus]
    translations = [t.translation for t in corpus] if use_translation else None
    if beam == 1:
        outputs: List[Tokens] = []
        for start in tqdm(range(0, len(sources), batch_size), disable=not progress, desc="decode"):
            outputs.extend(greedy_decode(
                model, vocab, sources[start:start + batch_size],
                translations[start:start + batch_size] if translations is not None else None,
                max_len,
            ))
        return outputs
    return [
        beam_search(model, vocab, source, translations[i] if translations is not None else None,
                    beam, max_len, length_penalty)
        for i, source in enumerate(tqdm(sources, disable=not progress, desc="decode"))
    ]
