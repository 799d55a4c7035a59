import math

import numpy as np
import pytest
from unittest.mock import patch

from dfsblock.errors import CapacityError, ModelError, SynthesisDegeneracyError
from dfsblock.services.synthesis import (
    circle_distance,
    continued_fraction,
    convergents,
    search_bound,
    synthesize_z_power,
)

THETA = math.pi / math.sqrt(5)


def brute_force(target: float, theta: float, epsilon: float, limit: int = 1_000_000) -> int:
    n = np.arange(1, limit + 1, dtype=np.int64)
    dist = np.abs(np.remainder(n * theta - target + np.pi, 2 * np.pi) - np.pi)
    return int(n[np.argmax(dist < epsilon)])


def test_continued_fraction_of_golden_ratio():
    golden = (1 + math.sqrt(5)) / 2
    assert list(continued_fraction(golden, 10)) == [1] * 10


def test_convergents_approach_value():
    p, q = list(convergents(math.pi, 4))[-1]
    assert (p, q) == (355, 113)


def test_target_equal_to_unit():
    result = synthesize_z_power(THETA, THETA, 1e-3)
    assert result.power == 1
    assert result.error == pytest.approx(0.0, abs=1e-15)


def test_quarter_turn_matches_exhaustive_search():
    result = synthesize_z_power(math.pi / 2, THETA, 1e-3)
    assert result.error < 1e-3
    assert result.power == brute_force(math.pi / 2, THETA, 1e-3)
    assert circle_distance(result.power * THETA, math.pi / 2) < 1e-3


def test_random_targets_by_direct_multiplication():
    rng = np.random.default_rng(7)
    unit = np.diag([np.exp(-1j * THETA), np.exp(1j * THETA)])
    for target in rng.uniform(-math.pi, math.pi, 20):
        result = synthesize_z_power(float(target), THETA, 1e-3)
        achieved = -np.angle(np.linalg.matrix_power(unit, result.power)[0, 0])
        assert circle_distance(float(achieved), float(target)) < 1e-3


@pytest.mark.parametrize("target", [-2.5, -0.4, 0.9, 2.2, 3.0])
def test_halving_epsilon_never_lowers_power(target):
    coarse = synthesize_z_power(target, THETA, 1e-2)
    fine = synthesize_z_power(target, THETA, 5e-3)
    assert fine.power >= coarse.power


def test_search_bound_covers_the_circle():
    bound = search_bound(THETA, 1e-3, 10 ** 9)
    n = np.arange(1, bound + 1)
    points = np.sort(np.remainder(n * THETA, 2 * np.pi))
    gaps = np.diff(np.concatenate([points, [points[0] + 2 * np.pi]]))
    assert gaps.max() < 2e-3


def test_rational_angle_rejected():
    with pytest.raises(SynthesisDegeneracyError):
        synthesize_z_power(0.3, math.pi * 3 / 10, 1e-3)
    with pytest.raises(SynthesisDegeneracyError):
        synthesize_z_power(0.3, math.pi / 2, 1e-3)


def test_non_positive_epsilon_rejected():
    with pytest.raises(ModelError):
        synthesize_z_power(0.3, THETA, 0.0)


def test_power_cap():
    with patch("dfsblock.config.SYNTHESIS_POWER_CAP", 100):
        with pytest.raises(CapacityError):
            synthesize_z_power(0.3, THETA, 1e-6)
