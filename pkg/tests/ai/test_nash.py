"""
Unit tests for the Nash bargaining solver.
"""
import numpy as np
import pytest
import torch

from src.ai.nash import CONVERGED, EMPTY, FALLBACK, ls_direction, nash_combine, residual, solve_nash
from src.exceptions import SolverError


def random_gradients(rng, k=None, d=None):
    k = k or int(rng.integers(2, 4))
    d = d or int(rng.integers(5, 21))
    scales = rng.uniform(0.1, 10.0, size=(k, 1))
    return torch.from_numpy(rng.normal(size=(k, d)) * scales)


class TestSolveNash:
    """Test cases for the bargaining weights."""

    def test_random_instances_satisfy_fixed_point(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            grads = random_gradients(rng)
            _, solution = nash_combine(grads)
            gram = (grads @ grads.T).numpy()
            assert np.all(solution.alpha > 0)
            assert np.allclose(gram @ solution.alpha, 1.0 / solution.alpha, rtol=1e-6, atol=1e-9)

    def test_orthogonal_closed_form(self):
        grads = torch.tensor([[2.0, 0.0], [0.0, 0.5]], dtype=torch.float64)
        update, solution = nash_combine(grads)
        assert solution.status == CONVERGED
        assert solution.alpha == pytest.approx([0.5, 2.0])
        assert update.tolist() == pytest.approx([1.0, 1.0])

    def test_identical_gradients_closed_form(self):
        g = torch.tensor([3.0, 4.0], dtype=torch.float64)
        _, solution = nash_combine(torch.stack([g, g]))
        expected = 1.0 / (5.0 * np.sqrt(2.0))
        assert solution.alpha == pytest.approx([expected, expected])

    def test_residual_reported(self):
        gram = np.array([[2.0, 0.5], [0.5, 1.0]])
        solution = solve_nash(gram)
        assert solution.residual == pytest.approx(residual(gram, solution.alpha))
        assert solution.residual <= 1e-8

    def test_invalid_gram(self):
        with pytest.raises(SolverError):
            solve_nash(np.array([[np.nan, 0.0], [0.0, 1.0]]))
        with pytest.raises(SolverError):
            solve_nash(np.ones((2, 3)))

    def test_massless_gram_falls_back_to_uniform(self):
        solution = solve_nash(np.zeros((2, 2)))
        assert solution.status == FALLBACK
        assert solution.alpha.tolist() == [0.5, 0.5]
        assert np.isnan(solution.residual)


class TestNashCombine:
    """Test cases for the combined update direction."""

    def test_invariant_to_gradient_rescaling(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            grads = random_gradients(rng)
            scales = torch.from_numpy(rng.uniform(0.01, 100.0, size=(grads.size(0), 1)))
            update, _ = nash_combine(grads)
            rescaled, _ = nash_combine(grads * scales)
            assert torch.allclose(update, rescaled, rtol=1e-5, atol=1e-8)

    def test_linear_scalarization_is_not_invariant(self):
        rng = np.random.default_rng(2)
        grads = random_gradients(rng, k=3, d=10)
        scales = torch.tensor([[100.0], [1.0], [1.0]], dtype=torch.float64)
        assert not torch.allclose(ls_direction(grads), ls_direction(grads * scales))
        nash_update, _ = nash_combine(grads)
        nash_rescaled, _ = nash_combine(grads * scales)
        assert torch.allclose(nash_update, nash_rescaled, rtol=1e-5, atol=1e-8)

    def test_zero_gradient_is_dropped(self):
        grads = torch.tensor([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]], dtype=torch.float64)
        update, solution = nash_combine(grads)
        assert solution.dropped == [1]
        assert solution.alpha[1] == 0.0
        assert solution.alpha[[0, 2]] == pytest.approx([1.0, 0.5])
        assert update.tolist() == pytest.approx([1.0, 1.0])

    def test_all_zero(self):
        update, solution = nash_combine(torch.zeros(3, 4))
        assert solution.status == EMPTY
        assert torch.equal(update, torch.zeros(4))

    def test_cancelling_gradients_fall_back_to_uniform(self):
        grads = torch.tensor([[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]])
        update, solution = nash_combine(grads)
        assert solution.status == FALLBACK
        assert solution.degraded
        assert solution.alpha.tolist() == [0.5, 0.5]
        assert torch.equal(update, torch.zeros(3))

    def test_opposed_gradients_without_bargaining_point(self):
        """g2 = -2 g1 has positive Gram mass but no positive solution."""
        grads = torch.tensor([[1.0, 0.0], [-2.0, 0.0]], dtype=torch.float64)
        update, solution = nash_combine(grads)
        assert solution.status == FALLBACK
        assert solution.alpha.tolist() == [0.5, 0.5]
        assert update.tolist() == pytest.approx([-0.5, 0.0])

    def test_non_finite_input(self):
        with pytest.raises(SolverError):
            nash_combine(torch.tensor([[1.0, float("inf")], [0.0, 1.0]]))

    def test_accepts_numpy_and_lists(self):
        update_np, _ = nash_combine(np.array([[2.0, 0.0], [0.0, 0.5]]))
        update_list, _ = nash_combine([torch.tensor([2.0, 0.0]), torch.tensor([0.0, 0.5])])
        assert update_np.tolist() == pytest.approx([1.0, 1.0])
        assert update_list.tolist() == pytest.approx([1.0, 1.0])

    def test_record(self):
        _, solution = nash_combine(torch.tensor([[2.0, 0.0], [0.0, 0.5]]))
        record = solution.as_record()
        assert set(record) == {"alpha", "residual", "iterations", "status", "dropped"}
        assert not solution.degraded
