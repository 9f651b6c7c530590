"""
Task losses and per-task gradient collection.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple
import math

import torch
import torch.nn.functional as F

from ..exceptions import ModeError, SolverError
from .model import APE, ApeModel, Batch, forward_ape, qe_forward

TASKS = ("ape", "sent", "word")


def ape_loss(logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor,
             reduction: str = "sum") -> torch.Tensor:
    """Token cross-entropy over unmasked target positions (``sum`` or per-token ``mean``)."""
    if logits.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise ValueError(f"Shape mismatch: logits {tuple(logits.shape)}, targets {tuple(targets.shape)}, "
                         f"mask {tuple(mask.shape)}")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("APE loss needs at least one unmasked target position")
    token_losses = F.cross_entropy(logits.reshape(-1, logits.size(-1)), targets.reshape(-1), reduction="none")
    total = (token_losses * mask.reshape(-1).to(token_losses.dtype)).sum()
    if reduction == "sum":
        return total
    if reduction == "mean":
        return total / count
    raise ValueError(f"Unknown reduction: {reduction}")


def sent_qe_loss(pred: torch.Tensor, target: torch.Tensor, available_mask: torch.Tensor) -> torch.Tensor:
    """Mean squared DA error over available instances; exactly zero when none are."""
    if pred.shape != target.shape or target.shape != available_mask.shape:
        raise ValueError("Sentence QE prediction, target and mask shapes differ")
    diff = torch.where(available_mask, pred - target.to(pred.dtype), torch.zeros_like(pred))
    return (diff * diff).sum() / available_mask.sum().clamp(min=1).to(pred.dtype)


def word_qe_loss(word_logits: torch.Tensor, tags: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """OK/BAD cross-entropy averaged over unmasked translation tokens."""
    if word_logits.shape[:-1] != tags.shape or tags.shape != mask.shape or word_logits.size(-1) != 2:
        raise ValueError(f"Word logits {tuple(word_logits.shape)} do not match tags {tuple(tags.shape)}")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("Word QE loss needs at least one unmasked token")
    token_losses = F.cross_entropy(word_logits.reshape(-1, 2), tags.reshape(-1), reduction="none")
    return (token_losses * mask.reshape(-1).to(token_losses.dtype)).sum() / count


@dataclass
class TaskLosses:
    ape: torch.Tensor
    sent: torch.Tensor
    word: torch.Tensor

    def as_dict(self) -> Dict[str, float]:
        return {task: float(getattr(self, task).detach()) for task in TASKS}


def ls_combine(losses: TaskLosses) -> torch.Tensor:
    """Unweighted sum of the three task losses."""
    for task in TASKS:
        value = getattr(losses, task)
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise ValueError(f"Non-finite {task} loss: {float(value)}")
    return losses.sent + losses.word + losses.ape


def compute_task_losses(model: ApeModel, batch: Batch, reduction: str = "sum") -> TaskLosses:
    """All three losses from one APE forward pass.

    Batches without a single tagged translation token get a zero word loss.
    """
    if model.mode != APE or not model.has_qe_heads:
        raise ModeError("Multitask losses need an APE model with QE heads")
    logits, shared = forward_ape(model, batch)
    da_pred, word_logits = qe_forward(model, shared)
    word = word_logits.sum() * 0.0
    if bool(batch.word_mask.any()):
        word = word_qe_loss(word_logits, batch.word_tags, batch.word_mask)
    return TaskLosses(
        ape=ape_loss(logits, batch.target_out, batch.target_mask, reduction),
        sent=sent_qe_loss(da_pred, batch.da_targets, batch.da_mask),
        word=word,
    )


@dataclass
class TaskGradients:
    """Per-task gradients; ``matrix`` rows cover the shared parameters in ``shared_names`` order."""
    tasks: Tuple[str, ...]
    matrix: torch.Tensor
    shared_names: List[str]
    specific: Dict[str, Dict[str, torch.Tensor]] = field(default_factory=dict)
    losses: Optional[TaskLosses] = None

    @property
    def dim(self) -> int:
        return self.matrix.size(1)


def collect_task_gradients(model: ApeModel, batch: Batch, reduction: str = "sum") -> TaskGradients:
    """One backward pass per task over every trainable parameter.

    Shared-parameter gradients are flattened into one row per task; the
    gradients of task-specific parameters are kept per parameter.
    """
    losses = compute_task_losses(model, batch, reduction)
    named = [(name, p) for name, p in model.named_parameters() if p.requires_grad]
    shared = set(model.shared_parameter_names())
    shared_names = [name for name, _ in named if name in shared]
    params = [p for _, p in named]

    rows = []
    specific: Dict[str, Dict[str, torch.Tensor]] = {}
    for position, task in enumerate(TASKS):
        grads = torch.autograd.grad(getattr(losses, task), params,
                                    retain_graph=position < len(TASKS) - 1, allow_unused=True)
        flat, own = [], {}
        for (name, p), grad in zip(named, grads):
            grad = torch.zeros_like(p) if grad is None else grad
            if not torch.isfinite(grad).all():
                raise SolverError(f"Non-finite gradient for task {task} at {name}")
            if name in shared:
                flat.append(grad.reshape(-1))
            else:
                own[name] = grad
        rows.append(torch.cat(flat) if flat else params[0].new_zeros(0))
        specific[task] = own
    return TaskGradients(TASKS, torch.stack(rows), shared_names, specific, losses)


def finite_difference(loss_fn, parameter: torch.Tensor, index: int, eps: float = 1e-6) -> float:
    """Central difference of ``loss_fn()`` along one parameter entry."""
    flat = parameter.data.view(-1)
    original = flat[index].item()
    flat[index] = original + eps
    plus = float(loss_fn())
    flat[index] = original - eps
    minus = float(loss_fn())
    flat[index] = original
    if not math.isfinite(plus) or not math.isfinite(minus):
        raise ValueError("Non-finite loss during finite differencing")
    return (plus - minus) / (2 * eps)
