"""
Unit tests for the paired randomization test.
"""
import numpy as np
import pytest

from src.exceptions import AlignmentError
from src.significance import significance_test


class TestSignificance:
    """Test cases for significance_test."""

    def test_identical_systems_are_insignificant(self):
        stats = [(1, 5), (0, 4), (2, 6)] * 10
        assert significance_test(stats, stats, trials=1000) == 1.0

    def test_large_difference_is_significant(self):
        a = [(0, 10)] * 50
        b = [(5, 10)] * 50
        assert significance_test(a, b, trials=2000) < 0.05

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(3)
        a = [(int(e), 8) for e in rng.integers(0, 4, size=40)]
        b = [(int(e), 8) for e in rng.integers(0, 5, size=40)]
        assert significance_test(a, b, seed=5) == significance_test(a, b, seed=5)

    def test_p_value_in_unit_interval(self):
        a = [(1, 4), (2, 4), (0, 4)]
        b = [(2, 4), (1, 4), (1, 4)]
        assert 0.0 <= significance_test(a, b) <= 1.0

    def test_misaligned_raises(self):
        with pytest.raises(AlignmentError):
            significance_test([(1, 2)], [(1, 2), (0, 2)])

    def test_too_few_trials_raises(self):
        with pytest.raises(ValueError):
            significance_test([(1, 2)], [(0, 2)], trials=10)
