import math

import pytest
from hypothesis import given, strategies as st

from fastanneal.schedules import (AffinePrecision, ConstantCooling, ConstantPrecision,
                                  LogarithmicCooling, PowerCooling, PowerPrecision, beta_at,
                                  cooling_from_config, n_particles_at, precision_from_config)


def test_power_cooling_values():
    s = PowerCooling(1 / 3)
    assert s.beta(0) == 1.0
    assert s.beta(8) == pytest.approx(2.0)
    assert PowerCooling(0.25, 10.0)(16) == pytest.approx(20.0)


def test_log_cooling_values():
    s = LogarithmicCooling(2.0)
    assert s.beta(0) == pytest.approx(2.0)
    assert s(10) == pytest.approx(2 * math.log(10 + math.e))


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5])
def test_power_cooling_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        PowerCooling(alpha)


def test_invalid_constructors():
    with pytest.raises(ValueError):
        LogarithmicCooling(0.0)
    with pytest.raises(ValueError):
        ConstantCooling(-1.0)
    with pytest.raises(ValueError):
        ConstantPrecision(0)
    with pytest.raises(ValueError):
        AffinePrecision(0.0, 0.0)
    with pytest.raises(ValueError):
        PowerPrecision(0.0, 1.0, 0.0)


def test_negative_index_rejected():
    with pytest.raises(ValueError):
        beta_at(PowerCooling(0.5), -1)
    with pytest.raises(ValueError):
        n_particles_at(ConstantPrecision(5), -1)


def test_benchmark_precision_floor():
    s = AffinePrecision(0.0, 1.0, floor=20)
    assert [s.n_at(n) for n in (0, 1, 19, 20, 21, 4999)] == [20, 20, 20, 20, 21, 4999]


def test_ceil_absorbs_roundoff():
    # 0.1 * 30 = 3.0000000000000004 in binary floating point
    assert AffinePrecision(0.0, 0.1).n_at(30) == 3
    assert AffinePrecision(0.0, 0.1).n_at(31) == 4


def test_power_precision():
    s = PowerPrecision(1.0, 2.0, 0.5)
    assert s.n_at(0) == 1
    assert s.n_at(16) == 9
    assert s.n_at(17) == 10


def test_factories():
    assert cooling_from_config("power", alpha=0.25, scale=10) == PowerCooling(0.25, 10.0)
    assert cooling_from_config("logarithmic", beta0=1) == LogarithmicCooling(1.0)
    assert cooling_from_config("constant", beta=3) == ConstantCooling(3.0)
    assert precision_from_config("none") is None
    assert precision_from_config("affine", n0=0, n1=1, floor=20) == AffinePrecision(0.0, 1.0, 20)
    with pytest.raises(ValueError):
        cooling_from_config("geometric")
    with pytest.raises(ValueError):
        precision_from_config("doubling")


@given(alpha=st.floats(0.01, 0.99), scale=st.floats(0.01, 100), n=st.integers(0, 10**9))
def test_power_cooling_monotone(alpha, scale, n):
    s = PowerCooling(alpha, scale)
    assert s.beta(n + 1) >= s.beta(n) >= scale


@given(beta0=st.floats(0.01, 100), n=st.integers(0, 10**9))
def test_log_cooling_monotone(beta0, n):
    s = LogarithmicCooling(beta0)
    assert s.beta(n + 1) > s.beta(n) >= beta0 * (1 - 1e-15)


@given(n0=st.floats(0, 100), n1=st.floats(0.01, 100), delta=st.floats(0.05, 2),
       floor=st.integers(1, 50), n=st.integers(0, 10**6))
def test_precision_monotone_and_bounded(n0, n1, delta, floor, n):
    for s in (AffinePrecision(n0, n1, floor), PowerPrecision(n0, n1, delta, floor)):
        assert s.n_at(n + 1) >= s.n_at(n) >= floor
        assert isinstance(s.n_at(n), int)
