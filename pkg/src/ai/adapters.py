"""
Bottleneck adapters for decoder-only domain adaptation.
"""
from typing import List, Sequence
import logging

import torch
import torch.nn as nn

from ..exceptions import ModeError

logger = logging.getLogger(__name__)

ADAPTER_KEY = "adapter"


class Adapter(nn.Module):
    """Down-project, ReLU, up-project, residual.

    The up-projection starts at zero so the block is the identity at insertion.
    """

    def __init__(self, hidden_size: int, adapter_dim: int = 512, dropout: float = 0.0):
        super().__init__()
        if adapter_dim < 1:
            raise ValueError(f"adapter_dim must be positive, got {adapter_dim}")
        self.down_proj = nn.Linear(hidden_size, adapter_dim)
        self.up_proj = nn.Linear(adapter_dim, hidden_size)
        self.dropout = nn.Dropout(dropout)
        nn.init.zeros_(self.up_proj.weight)
        nn.init.zeros_(self.up_proj.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.dropout(self.up_proj(torch.relu(self.down_proj(x))))


def has_adapters(model: nn.Module) -> bool:
    return any(block.adapter is not None for block in model.decoder_blocks)


def adapter_parameter_names(model: nn.Module) -> List[str]:
    return [name for name, _ in model.named_parameters() if f".{ADAPTER_KEY}." in name]


def insert_adapters(model: nn.Module, adapter_dim: int = None) -> nn.Module:
    """Add one adapter after every decoder block.

    Raises:
        ModeError: If the model is not in APE mode or already has adapters
    """
    if model.mode != "ape":
        raise ModeError("Adapters can only be inserted into an APE-mode model")
    if has_adapters(model):
        raise ModeError("Adapters are already inserted")
    adapter_dim = adapter_dim or model.config.adapter_dim
    reference = next(model.parameters())
    for block in model.decoder_blocks:
        block.adapter = Adapter(model.config.embed_dim, adapter_dim, model.config.dropout).to(
            device=reference.device, dtype=reference.dtype
        )
    model.adapter_dim = adapter_dim
    logger.info(f"Inserted {len(model.decoder_blocks)} adapters of size {adapter_dim}")
    return model


def freeze_except_adapters(model: nn.Module, keep: Sequence[str] = ()) -> nn.Module:
    """Mark only adapter parameters trainable.

    Args:
        model: APE model with adapters
        keep: Name prefixes of further modules left trainable (e.g. QE heads)
    """
    if not has_adapters(model):
        raise ModeError("Model has no adapters to train")
    prefixes = tuple(keep)
    for name, parameter in model.named_parameters():
        parameter.requires_grad_(f".{ADAPTER_KEY}." in name or name.startswith(prefixes))
    return model


def unfreeze_all(model: nn.Module) -> nn.Module:
    for parameter in model.parameters():
        parameter.requires_grad_(True)
    return model
