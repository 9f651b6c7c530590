"""
Self-describing safetensors checkpoints.

Tensors are stored under their state-dict names; the header metadata holds
the format id, model config, vocabulary, mode flags and provenance.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union
import json
import logging

import torch
from safetensors import safe_open
from safetensors.torch import load_file, save_file

from ..exceptions import CheckpointError
from .adapters import insert_adapters
from .config import ModelConfig
from .model import APE, ApeModel, add_translation_encoder, attach_qe_heads
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

FORMAT_ID = "mape-ckpt/1"


@dataclass
class LoadReport:
    """Outcome of a partial parameter load."""
    loaded: List[str] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)
    unexpected: List[str] = field(default_factory=list)
    mismatched: List[str] = field(default_factory=list)


def save_checkpoint(model: ApeModel, vocab: Vocabulary, path: Union[str, Path],
                    meta: Optional[Dict[str, Any]] = None) -> Path:
    """Write model parameters, config, vocabulary and metadata to one file."""
    path = Path(path)
    state = {name: tensor.detach().cpu().contiguous() for name, tensor in model.state_dict().items()}
    metadata = {
        "format": FORMAT_ID,
        "config": model.config.model_dump_json(),
        "vocab": vocab.to_json(),
        "mode": model.mode,
        "qe_heads": "1" if model.has_qe_heads else "0",
        "adapter_dim": str(model.adapter_dim or ""),
        "meta": json.dumps(meta or {}, default=str),
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_file(state, str(path), metadata=metadata)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"Failed to write checkpoint: {str(e)}", path=str(path))
    return path


def read_metadata(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    try:
        with safe_open(str(path), framework="pt") as f:
            metadata = f.metadata() or {}
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint: {str(e)}", path=str(path))
    if metadata.get("format") != FORMAT_ID:
        raise CheckpointError(f"Unsupported checkpoint format {metadata.get('format')!r}", path=str(path))
    return metadata


def _read_tensors(path: Path) -> Dict[str, torch.Tensor]:
    try:
        return load_file(str(path))
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint tensors: {str(e)}", path=str(path))


def load_checkpoint(path: Union[str, Path]) -> Tuple[ApeModel, Vocabulary, Dict[str, Any]]:
    """Rebuild the model in its saved mode and load every parameter.

    Building the skeleton does not disturb the global torch RNG.
    """
    path = Path(path)
    metadata = read_metadata(path)
    config = ModelConfig.model_validate_json(metadata["config"])
    vocab = Vocabulary.from_json(metadata["vocab"])
    tensors = _read_tensors(path)

    with torch.random.fork_rng(devices=[]):
        model = ApeModel(config)
        if metadata["mode"] == APE:
            model = add_translation_encoder(model)
            if metadata.get("qe_heads") == "1":
                attach_qe_heads(model)
            if metadata.get("adapter_dim"):
                insert_adapters(model, int(metadata["adapter_dim"]))
    dtype = next(iter(tensors.values())).dtype
    model.to(dtype=dtype)
    try:
        model.load_state_dict(tensors, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint does not match its own config: {str(e)}", path=str(path))
    return model, vocab, json.loads(metadata.get("meta") or "{}")


def init_from_checkpoint(model: ApeModel, path: Union[str, Path], strict: bool = True) -> LoadReport:
    """Copy every parameter whose name and shape match the checkpoint.

    Raises:
        CheckpointError: Under ``strict`` when shapes disagree, listing the parameters
    """
    path = Path(path)
    read_metadata(path)
    tensors = _read_tensors(path)
    report = LoadReport()
    own = model.state_dict()
    for name, tensor in own.items():
        if name not in tensors:
            report.missing.append(name)
        elif tensors[name].shape != tensor.shape:
            report.mismatched.append(name)
        else:
            report.loaded.append(name)
    report.unexpected = [name for name in tensors if name not in own]

    if report.mismatched and strict:
        raise CheckpointError(f"Incompatible parameter shapes: {', '.join(report.mismatched)}",
                              path=str(path), parameters=report.mismatched)
    with torch.no_grad():
        for name in report.loaded:
            own[name].copy_(tensors[name].to(dtype=own[name].dtype))
    if report.mismatched or report.missing:
        logger.warning(
            f"Partial load from {path}: {len(report.mismatched)} mismatched, "
            f"{len(report.missing)} missing parameters left at init"
        )
    return report


def load_external_encoder_weights(model: ApeModel, path: Union[str, Path],
                                  target: str = "source_encoder") -> LoadReport:
    """Load a safetensors file of encoder weights (names relative to the encoder)."""
    path = Path(path)
    tensors = _read_tensors(path)
    encoder = getattr(model, target, None)
    if encoder is None:
        raise CheckpointError(f"Model has no {target}", path=str(path))
    report = LoadReport()
    own = encoder.state_dict()
    for name, tensor in own.items():
        if name not in tensors:
            report.missing.append(name)
        elif tensors[name].shape != tensor.shape:
            report.mismatched.append(name)
        else:
            report.loaded.append(name)
    report.unexpected = [name for name in tensors if name not in own]
    with torch.no_grad():
        for name in report.loaded:
            own[name].copy_(tensors[name].to(dtype=own[name].dtype))
    logger.info(f"Loaded {len(report.loaded)} external tensors into {target}")
    return report
