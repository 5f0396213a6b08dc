import numpy as np
import pytest

from coldelta.errors import DimensionError, UndefinedStatisticError
from coldelta.metrics import r_squared, r_squared_or_none
from oracles import r2_two_pass


def test_perfect():
    t = np.array([1.0, 2.0, 4.0])
    assert r_squared(t, t) == 1.0


def test_mean_prediction_is_zero():
    t = np.array([1.0, 2.0, 6.0])
    assert r_squared(t, np.full(3, 3.0)) == pytest.approx(0.0, abs=1e-15)


def test_constant_truth():
    with pytest.raises(UndefinedStatisticError):
        r_squared(np.ones(4), np.zeros(4))
    assert r_squared_or_none(np.ones(4), np.zeros(4)) is None


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        r_squared(np.ones(3), np.ones(4))


def test_can_be_negative():
    assert r_squared(np.array([0.0, 1.0]), np.array([1.0, 0.0])) < 0


def test_two_pass_oracle(rng):
    for _ in range(20):
        t = rng.standard_normal((3, 7)).astype(np.float32)
        a = (t + 0.3 * rng.standard_normal((3, 7))).astype(np.float32)
        assert abs(r_squared(t, a) - r2_two_pass(t, a)) <= 1e-10
