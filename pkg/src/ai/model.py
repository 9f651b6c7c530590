"""
Dual-encoder, single-decoder post-editing model with QE heads.

The model starts in ``nmt`` mode (source encoder and decoder only). Adding
the translation encoder switches it to ``ape`` mode: both encoders' final
states are concatenated along the sequence axis and passed through one
fusion layer, the shared representation. The decoder cross-attends to it
and the QE heads read from it.
"""
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence, Tuple
import copy
import logging
import math

import torch
import torch.nn as nn
from torch.nn.utils.rnn import pad_sequence

from ..corpus import BAD, QeAnnotation
from ..exceptions import DataError, ModeError
from .adapters import Adapter
from .config import ModelConfig

logger = logging.getLogger(__name__)

NMT = "nmt"
APE = "ape"
QE_HEAD_PREFIXES = ("sentence_head.", "word_head.")


@dataclass
class Batch:
    """Padded id tensors; every ``*_mask`` is True on real positions."""
    source_ids: torch.Tensor
    source_mask: torch.Tensor
    translation_ids: Optional[torch.Tensor] = None
    translation_mask: Optional[torch.Tensor] = None
    target_in: Optional[torch.Tensor] = None
    target_out: Optional[torch.Tensor] = None
    target_mask: Optional[torch.Tensor] = None
    da_targets: Optional[torch.Tensor] = None
    da_mask: Optional[torch.Tensor] = None
    word_tags: Optional[torch.Tensor] = None
    word_mask: Optional[torch.Tensor] = None

    @property
    def size(self) -> int:
        return self.source_ids.size(0)

    def to(self, device) -> 'Batch':
        return Batch(**{
            f.name: getattr(self, f.name).to(device) if getattr(self, f.name) is not None else None
            for f in fields(self)
        })


@dataclass
class SharedRepresentation:
    """Fused encoder states; positions from ``source_len`` on belong to the translation."""
    states: torch.Tensor
    mask: torch.Tensor
    source_len: int


def _fit(ids: List[int], limit: int, strict: bool, what: str) -> List[int]:
    if len(ids) > limit:
        if strict:
            raise DataError(f"{what} of {len(ids)} subwords exceeds max_len {limit}")
        return ids[:limit]
    return ids


def _pad(rows: Sequence[Sequence], padding_value, dtype) -> torch.Tensor:
    return pad_sequence([torch.tensor(row, dtype=dtype) for row in rows], batch_first=True,
                        padding_value=padding_value)


def collate_batch(vocab, sources: Sequence[Sequence[str]], targets: Optional[Sequence[Sequence[str]]] = None,
                  translations: Optional[Sequence[Sequence[str]]] = None,
                  annotations: Optional[Sequence[QeAnnotation]] = None,
                  max_len: int = 128, strict: bool = False) -> Batch:
    """Encode tokenized sentences into a padded Batch.

    Word tags are broadcast to every subword of their word; DA targets of
    masked instances are stored as 0.0.
    """
    pad = vocab.pad_id
    source_rows = [_fit(vocab.encode(s)[0], max_len, strict, "source") for s in sources]
    batch = Batch(
        source_ids=_pad(source_rows, pad, torch.long),
        source_mask=_pad([[True] * len(r) for r in source_rows], False, torch.bool),
    )

    if translations is not None:
        translation_rows, tag_rows, tag_mask_rows = [], [], []
        for index, translation in enumerate(translations):
            ids, word_index = vocab.encode(translation)
            ids = _fit(ids, max_len, strict, "translation")
            word_index = word_index[:len(ids)]
            translation_rows.append(ids)
            annotation = annotations[index] if annotations is not None else None
            if annotation is not None and annotation.word_tags is not None:
                tag_rows.append([int(annotation.word_tags[w] == BAD) for w in word_index])
                tag_mask_rows.append([True] * len(ids))
            else:
                tag_rows.append([0] * len(ids))
                tag_mask_rows.append([False] * len(ids))
        batch.translation_ids = _pad(translation_rows, pad, torch.long)
        batch.translation_mask = _pad([[True] * len(r) for r in translation_rows], False, torch.bool)
        batch.word_tags = _pad(tag_rows, 0, torch.long)
        batch.word_mask = _pad(tag_mask_rows, False, torch.bool)

    if targets is not None:
        target_rows = [_fit(vocab.encode(t)[0], max_len - 1, strict, "target") for t in targets]
        batch.target_in = _pad([[vocab.bos_id] + r for r in target_rows], pad, torch.long)
        batch.target_out = _pad([r + [vocab.eos_id] for r in target_rows], pad, torch.long)
        batch.target_mask = _pad([[True] * (len(r) + 1) for r in target_rows], False, torch.bool)

    n = len(sources)
    if annotations is not None:
        batch.da_targets = torch.tensor(
            [a.da_score if a.da_available else 0.0 for a in annotations], dtype=torch.float32
        )
        batch.da_mask = torch.tensor([a.da_available for a in annotations], dtype=torch.bool)
    else:
        batch.da_targets = torch.zeros(n, dtype=torch.float32)
        batch.da_mask = torch.zeros(n, dtype=torch.bool)
    return batch


class DecoderBlock(nn.Module):
    """One pre-norm decoder layer with an optional adapter on its output."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.layer = nn.TransformerDecoderLayer(
            config.embed_dim, config.heads, config.ff_dim, config.dropout,
            batch_first=True, norm_first=True,
        )
        self.adapter: Optional[Adapter] = None

    def forward(self, x, memory, causal_mask, memory_padding):
        x = self.layer(x, memory, tgt_mask=causal_mask, memory_key_padding_mask=memory_padding)
        if self.adapter is not None:
            x = self.adapter(x)
        return x


def _encoder(config: ModelConfig, layers: int) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        config.embed_dim, config.heads, config.ff_dim, config.dropout,
        batch_first=True, norm_first=True,
    )
    return nn.TransformerEncoder(layer, layers, norm=nn.LayerNorm(config.embed_dim),
                                 enable_nested_tensor=False)


class ApeModel(nn.Module):
    """Source encoder, optional translation encoder and fusion layer, decoder, QE heads."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.mode = NMT
        self.adapter_dim: Optional[int] = None
        d = config.embed_dim
        self.embed = nn.Embedding(config.vocab_size, d, padding_idx=config.pad_id)
        self.positions = nn.Embedding(config.max_len, d)
        self.source_encoder = _encoder(config, config.encoder_layers)
        self.translation_encoder: Optional[nn.TransformerEncoder] = None
        self.segments: Optional[nn.Embedding] = None
        self.fusion: Optional[nn.TransformerEncoder] = None
        self.decoder_blocks = nn.ModuleList([DecoderBlock(config) for _ in range(config.decoder_layers)])
        self.decoder_norm = nn.LayerNorm(d)
        self.generator = nn.Linear(d, config.vocab_size)
        self.sentence_head: Optional[nn.Module] = None
        self.word_head: Optional[nn.Module] = None
        self.dropout = nn.Dropout(config.dropout)

    @property
    def has_qe_heads(self) -> bool:
        return self.sentence_head is not None and self.word_head is not None

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        length = ids.size(1)
        if length > self.config.max_len:
            raise ValueError(f"Sequence length {length} exceeds max_len {self.config.max_len}")
        positions = torch.arange(length, device=ids.device)
        x = self.embed(ids) * math.sqrt(self.config.embed_dim) + self.positions(positions)
        return self.dropout(x)

    def encode(self, batch: Batch) -> SharedRepresentation:
        """Encoder side: source states in NMT mode, fused states in APE mode."""
        source = self.source_encoder(self._embed(batch.source_ids),
                                     src_key_padding_mask=~batch.source_mask)
        if self.mode == NMT:
            return SharedRepresentation(source, batch.source_mask, source.size(1))
        if batch.translation_ids is None:
            raise ModeError("APE-mode encoding needs translation ids")
        translation = self.translation_encoder(self._embed(batch.translation_ids),
                                               src_key_padding_mask=~batch.translation_mask)
        source = source + self.segments.weight[0]
        translation = translation + self.segments.weight[1]
        states = torch.cat([source, translation], dim=1)
        mask = torch.cat([batch.source_mask, batch.translation_mask], dim=1)
        fused = self.fusion(states, src_key_padding_mask=~mask)
        return SharedRepresentation(fused, mask, source.size(1))

    def decode(self, target_in: torch.Tensor, shared: SharedRepresentation) -> torch.Tensor:
        """Teacher-forced token logits ``[batch, target_len, vocab]``."""
        length = target_in.size(1)
        causal = torch.triu(torch.ones(length, length, dtype=torch.bool, device=target_in.device), 1)
        x = self._embed(target_in)
        for block in self.decoder_blocks:
            x = block(x, shared.states, causal, ~shared.mask)
        return self.generator(self.decoder_norm(x))

    def forward(self, batch: Batch) -> torch.Tensor:
        return self.decode(batch.target_in, self.encode(batch))

    def shared_parameter_names(self) -> List[str]:
        """Trainable parameters every task's loss depends on."""
        prefixes = ("embed.", "positions.", "source_encoder.", "translation_encoder.", "segments.", "fusion.")
        return [name for name, p in self.named_parameters() if p.requires_grad and name.startswith(prefixes)]


def forward_nmt(model: ApeModel, batch: Batch) -> torch.Tensor:
    """Token logits of the single-encoder model."""
    if model.mode != NMT:
        raise ModeError("forward_nmt needs an NMT-mode model")
    return model(batch)


def forward_ape(model: ApeModel, batch: Batch) -> Tuple[torch.Tensor, SharedRepresentation]:
    """Token logits plus the shared representation for the QE heads."""
    if model.mode != APE:
        raise ModeError("forward_ape needs an APE-mode model")
    shared = model.encode(batch)
    return model.decode(batch.target_in, shared), shared


def qe_forward(model: ApeModel, shared: SharedRepresentation) -> Tuple[torch.Tensor, torch.Tensor]:
    """Sentence DA predictions ``[batch]`` and word logits ``[batch, translation_len, 2]``."""
    if model.mode != APE or not model.has_qe_heads:
        raise ModeError("QE heads are not attached")
    weights = shared.mask.unsqueeze(-1).to(shared.states.dtype)
    pooled = (shared.states * weights).sum(dim=1) / weights.sum(dim=1).clamp(min=1.0)
    da = model.sentence_head(pooled).squeeze(-1)
    word_logits = model.word_head(shared.states[:, shared.source_len:, :])
    return da, word_logits


def add_translation_encoder(nmt_model: ApeModel) -> ApeModel:
    """Copy of the NMT model with a translation encoder initialised from the source encoder."""
    if nmt_model.mode != NMT:
        raise ModeError("Translation encoder already present")
    model = copy.deepcopy(nmt_model)
    config = model.config
    reference = next(model.parameters())
    model.translation_encoder = copy.deepcopy(model.source_encoder)
    model.segments = nn.Embedding(2, config.embed_dim).to(device=reference.device, dtype=reference.dtype)
    nn.init.normal_(model.segments.weight, std=0.02)
    model.fusion = _encoder(config, 1).to(device=reference.device, dtype=reference.dtype)
    model.mode = APE
    return model


def attach_qe_heads(model: ApeModel) -> ApeModel:
    """Add the sentence regression head and the word OK/BAD head."""
    if model.mode != APE:
        raise ModeError("QE heads need an APE-mode model")
    if model.has_qe_heads:
        return model
    d = model.config.embed_dim
    reference = next(model.parameters())
    model.sentence_head = nn.Sequential(nn.Linear(d, d), nn.Tanh(), nn.Linear(d, 1)).to(
        device=reference.device, dtype=reference.dtype)
    model.word_head = nn.Linear(d, 2).to(device=reference.device, dtype=reference.dtype)
    return model


def count_parameters(model: nn.Module, trainable_only: bool = False) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad or not trainable_only)
