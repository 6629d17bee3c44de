import math

import numpy as np
import pytest

from dientropy.oracle import MeasurementAngleSet, honest_statistics
from dientropy.scenario import (
    BellFunctional,
    Distribution,
    Scenario,
    bell_value,
    cglmp3,
    chsh,
    classical_bound,
    distribution_constraints,
    get_functional,
    i3322,
)

TSIRELSON_ANGLES = MeasurementAngleSet((0.0, math.pi / 2), (math.pi / 4, -math.pi / 4))


def test_from_name_shape():
    s = Scenario.from_name("2322")
    assert s.shape == (2, 2, 2, 3)
    assert s.alice_inputs == 2 and s.bob_inputs == 3
    assert len(list(s.entries())) == 2 * 3 * 4


@pytest.mark.parametrize("bad", ["222", "22a2", "22222"])
def test_from_name_rejects(bad):
    with pytest.raises(ValueError):
        Scenario.from_name(bad)


def test_generators_drop_final_outcome():
    s = Scenario.from_name("3322")
    assert len(s.alice_generators()) == 3
    assert len(s.generators()) == 6


@pytest.mark.parametrize("f, expected", [(chsh(), 2.0), (cglmp3(), 2.0), (i3322(), 4.0)])
def test_classical_bounds(f, expected):
    assert classical_bound(f) == pytest.approx(expected, abs=1e-12)


def test_get_functional():
    assert get_functional("CHSH").name == "chsh"
    with pytest.raises(ValueError, match="unknown Bell functional"):
        get_functional("mermin")


def test_chsh_of_optimal_qubit_strategy():
    d = honest_statistics("phi+", TSIRELSON_ANGLES)
    assert bell_value(chsh(), d) == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_functional_shape_checked():
    with pytest.raises(ValueError, match="shape"):
        BellFunctional(Scenario.from_name("2222"), np.zeros((2, 2, 3, 2)))


def test_distribution_validation():
    s = Scenario.from_name("2222")
    t = Distribution.uniform(s).table.copy()
    t[0, 0, 1, 1] += 0.1
    with pytest.raises(ValueError, match="sums to"):
        Distribution(s, t)
    t = Distribution.uniform(s).table.copy()
    t[0, 0, 0, 0], t[1, 1, 0, 0] = -0.1, 0.35
    with pytest.raises(ValueError, match="negative"):
        Distribution(s, t)


def test_distribution_constraints_full_2222():
    d = Distribution.uniform(Scenario.from_name("2222"))
    rows = distribution_constraints(d, "full")
    assert len(rows) == 16
    assert all(r.sense == "==" for r in rows)
    assert all(r.threshold == pytest.approx(0.25) for r in rows)


def test_distribution_constraints_full_2422():
    # 4 x 2 settings with 2 x 2 outcomes each: one row per entry
    d = Distribution.uniform(Scenario.from_name("4222"))
    assert len(distribution_constraints(d, "full")) == 32


def test_distribution_constraints_subset_and_chsh():
    d = honest_statistics(("werner", 0.9), TSIRELSON_ANGLES)
    rows = distribution_constraints(d, [(0, 0), (1, 1)])
    assert len(rows) == 8
    (row,) = distribution_constraints(d, "chsh")
    assert row.sense == ">="
    assert row.threshold == pytest.approx(0.9 * 2 * math.sqrt(2), abs=1e-12)
    with pytest.raises(ValueError):
        distribution_constraints(d, "partial")


def test_with_bound_keeps_coefficients():
    f = chsh().with_bound(2.5, ">=")
    assert f.threshold == 2.5 and f.sense == ">=" and f.name == "chsh"
    np.testing.assert_array_equal(f.coefficients, chsh().coefficients)
