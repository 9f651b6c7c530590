"""
Nash bargaining combination of task gradients.

With task gradients as the columns of G, the bargaining weights are the
positive solution of ``G^T G alpha = 1 / alpha``. That point is the unique
minimiser of the strictly convex ``0.5 a^T M a - sum(log a)`` (M = G^T G),
which is solved here with a damped Newton iteration that keeps every
iterate positive.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import torch

from ..exceptions import SolverError

logger = logging.getLogger(__name__)

CONVERGED = "converged"
DEGRADED = "degraded"
FALLBACK = "fallback"
EMPTY = "empty"


@dataclass
class NashSolution:
    """Task weights (zero for dropped tasks) and solver diagnostics."""
    alpha: np.ndarray
    residual: float
    iterations: int
    status: str = CONVERGED
    dropped: List[int] = field(default_factory=list)

    @property
    def degraded(self) -> bool:
        return self.status != CONVERGED

    def as_record(self) -> dict:
        return {
            "alpha": [float(a) for a in self.alpha],
            "residual": self.residual,
            "iterations": self.iterations,
            "status": self.status,
            "dropped": list(self.dropped),
        }


def _objective(gram: np.ndarray, alpha: np.ndarray) -> float:
    return 0.5 * float(alpha @ gram @ alpha) - float(np.log(alpha).sum())


def residual(gram: np.ndarray, alpha: np.ndarray) -> float:
    return float(np.max(np.abs(gram @ alpha - 1.0 / alpha)))


def balance(gram: np.ndarray, alpha: np.ndarray) -> float:
    """Scale-free residual ``max |alpha_i (G alpha)_i - 1|``; zero at the bargaining point."""
    with np.errstate(over="ignore", invalid="ignore"):
        value = np.max(np.abs(alpha * (gram @ alpha) - 1.0))
    return float(value) if np.isfinite(value) else float("inf")


def solve_nash(gram: np.ndarray, tol: float = 1e-8, max_iters: int = 200) -> NashSolution:
    """Solve ``gram @ alpha = 1 / alpha`` for alpha > 0.

    Starts from the inverse gradient norms scaled to their best common
    multiple, then takes Newton steps, halving each step until the iterate
    stays positive and the objective decreases. Gradient sets without a
    positive solution (cancelling or opposed tasks) get uniform weights and
    status ``fallback``.
    """
    gram = np.asarray(gram, dtype=np.float64)
    k = gram.shape[0]
    if gram.shape != (k, k) or not np.all(np.isfinite(gram)):
        raise SolverError(f"Invalid Gram matrix of shape {gram.shape}")
    total = float(gram.sum())
    if total <= 0.0:
        # cancelling gradients: no positive alpha satisfies the system
        logger.warning("Gram matrix has no positive mass; using uniform task weights")
        return NashSolution(np.full(k, 1.0 / k), float("nan"), 0, FALLBACK)
    diagonal = np.diag(gram)
    start = 1.0 / np.sqrt(diagonal) if np.all(diagonal > 0) else np.ones(k)
    curvature = float(start @ gram @ start)
    if curvature > 0.0:
        alpha = start * np.sqrt(k / curvature)
    else:
        alpha = np.full(k, np.sqrt(k / total))

    value = _objective(gram, alpha)
    iterations = 0
    res = residual(gram, alpha)
    while res > tol and iterations < max_iters:
        gradient = gram @ alpha - 1.0 / alpha
        hessian = gram + np.diag(1.0 / alpha ** 2)
        try:
            step = -np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        accepted = False
        for _ in range(60):
            candidate = alpha + t * step
            if np.all(candidate > 0):
                candidate_value = _objective(gram, candidate)
                if candidate_value <= value + 1e-4 * t * float(gradient @ step):
                    accepted = True
                    break
            t *= 0.5
        iterations += 1
        if not accepted:
            break
        alpha, value = candidate, candidate_value
        res = residual(gram, alpha)

    status = CONVERGED if res <= tol else DEGRADED
    if not np.all(np.isfinite(alpha)) or not np.all(alpha > 0) or balance(gram, alpha) > 0.5:
        logger.warning(f"Nash solve found no positive bargaining point after {iterations} iterations; "
                       f"using uniform task weights")
        return NashSolution(np.full(k, 1.0 / k), float("nan"), iterations, FALLBACK)
    return NashSolution(alpha, res, iterations, status)


def nash_combine(grads: Union[torch.Tensor, np.ndarray, Sequence], tol: float = 1e-8,
                 max_iters: int = 200) -> Tuple[torch.Tensor, NashSolution]:
    """Combine task gradients into one update direction.

    Args:
        grads: ``[k, d]`` task gradients (a TaskGradients matrix, array or list of vectors)
        tol: Residual tolerance
        max_iters: Newton iteration cap

    Returns:
        Tuple of (``sum_i alpha_i g_i``, solution). Zero gradients are dropped
        with alpha 0; if every gradient is zero the update is zero.
    """
    if hasattr(grads, "matrix"):
        grads = grads.matrix
    if isinstance(grads, torch.Tensor):
        matrix = grads.detach()
    elif isinstance(grads, np.ndarray):
        matrix = torch.from_numpy(grads)
    else:
        matrix = torch.stack([torch.as_tensor(g) for g in grads])
    if matrix.dim() != 2 or matrix.size(0) < 1:
        raise SolverError(f"Expected a [tasks, dim] gradient matrix, got shape {tuple(matrix.shape)}")
    if not torch.isfinite(matrix).all():
        raise SolverError("Task gradients contain non-finite entries")

    k = matrix.size(0)
    norms = matrix.double().norm(dim=1)
    active = [i for i in range(k) if norms[i] > 0]
    dropped = [i for i in range(k) if norms[i] == 0]
    if dropped:
        logger.warning(f"Dropping zero gradients of tasks {dropped} for this step")
    alpha = np.zeros(k)
    if not active:
        return torch.zeros_like(matrix[0]), NashSolution(alpha, 0.0, 0, EMPTY, dropped)

    sub = matrix[active].double()
    gram = (sub @ sub.T).cpu().numpy()
    solution = solve_nash(gram, tol, max_iters)
    if solution.status == DEGRADED:
        logger.warning(f"Nash solve stopped at residual {solution.residual:.3e} after "
                       f"{solution.iterations} iterations")
    alpha[active] = solution.alpha
    weights = torch.as_tensor(solution.alpha, dtype=torch.float64, device=matrix.device)
    update = (weights.unsqueeze(1) * sub).sum(dim=0).to(matrix.dtype)
    return update, NashSolution(alpha, solution.residual, solution.iterations, solution.status, dropped)


def ls_direction(grads: Union[torch.Tensor, np.ndarray]) -> torch.Tensor:
    """Linear-scalarization update: plain sum of the task gradients."""
    matrix = grads.matrix if hasattr(grads, "matrix") else torch.as_tensor(grads)
    return matrix.sum(dim=0)
