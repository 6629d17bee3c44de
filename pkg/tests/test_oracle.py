import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dientropy.oracle import (
    CqState,
    MeasurementAngleSet,
    binary_entropy,
    conditional_entropy_cq,
    dephased_state,
    honest_statistics,
    operator_bounds,
    projector,
    purified_cq_state,
    relative_entropy_eigen,
    relative_entropy_frenkel,
    relative_entropy_truncated,
    werner_state,
)
from helpers import random_cq, random_density

ANGLES = MeasurementAngleSet((0.0, math.pi / 2), (math.pi / 4, -math.pi / 4))


def test_identical_states_have_zero_divergence():
    rho = np.diag([0.7, 0.3])
    assert relative_entropy_eigen(rho, rho) == pytest.approx(0.0, abs=1e-14)
    assert relative_entropy_frenkel(rho, rho) == pytest.approx(0.0, abs=1e-9)


def test_classical_pair():
    rho, sigma = np.diag([0.5, 0.5]), np.diag([0.25, 0.75])
    expected = 0.5 * math.log2(2) + 0.5 * math.log2(0.5 / 0.75)
    assert relative_entropy_eigen(rho, sigma) == pytest.approx(expected, abs=1e-12)
    assert relative_entropy_frenkel(rho, sigma) == pytest.approx(expected, abs=1e-8)


def test_support_violation_is_infinite():
    rho, sigma = np.diag([0.5, 0.5]), np.diag([1.0, 0.0])
    assert relative_entropy_eigen(rho, sigma) == math.inf
    assert relative_entropy_frenkel(rho, sigma) == math.inf


def test_non_hermitian_rejected():
    with pytest.raises(ValueError, match="Hermitian"):
        relative_entropy_eigen(np.array([[0.5, 0.2], [0.0, 0.5]]), np.eye(2) / 2)


def test_truncated_requires_operator_bounds():
    rho, sigma = np.diag([0.9, 0.1]), np.diag([0.5, 0.5])
    with pytest.raises(ValueError, match="upper bound"):
        relative_entropy_truncated(rho, sigma, 0.0, 1.0)
    mu, lam = operator_bounds(rho, sigma)
    assert relative_entropy_truncated(rho, sigma, mu, lam) == pytest.approx(
        relative_entropy_eigen(rho, sigma), abs=1e-8
    )


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_three_representations_agree(seed, d):
    rng = np.random.default_rng(seed)
    rho, sigma = random_density(rng, d), random_density(rng, d)
    exact = relative_entropy_eigen(rho, sigma)
    mu, lam = operator_bounds(rho, sigma)
    assert relative_entropy_frenkel(rho, sigma) == pytest.approx(exact, abs=1e-6)
    assert relative_entropy_truncated(rho, sigma, mu, lam) == pytest.approx(exact, abs=1e-6)


def test_cq_entropy_bounds():
    rng = np.random.default_rng(3)
    for _ in range(20):
        st_ = random_cq(rng, 2, 2)
        h = conditional_entropy_cq(st_)
        assert -1e-9 <= h <= 1 + 1e-9


def test_cq_entropy_of_uncorrelated_uniform_bit():
    eve = random_density(np.random.default_rng(0), 2)
    assert conditional_entropy_cq(CqState([(0.5, eve), (0.5, eve)])) == pytest.approx(1.0, abs=1e-10)


def test_cq_validation():
    with pytest.raises(ValueError):
        CqState([(0.6, np.eye(2) / 2), (0.6, np.eye(2) / 2)])
    with pytest.raises(ValueError):
        CqState([(1.0, np.eye(2))])


def test_binary_entropy():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0
    assert binary_entropy(0.11) == pytest.approx(0.49991596, abs=1e-8)


def test_honest_tsirelson_statistics():
    d = honest_statistics("phi+", ANGLES)
    assert d.scenario.shape == (2, 2, 2, 2)
    # <A0 B0> = cos(pi/4)
    corr = d.table[0, 0, 0, 0] + d.table[1, 1, 0, 0] - d.table[0, 1, 0, 0] - d.table[1, 0, 0, 0]
    assert corr == pytest.approx(math.cos(math.pi / 4), abs=1e-12)


def test_state_families():
    np.testing.assert_allclose(werner_state(0.0), np.eye(4) / 4)
    assert np.trace(dephased_state(0.3)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        werner_state(1.5)
    with pytest.raises(ValueError):
        honest_statistics("ghz", ANGLES)


def test_purified_state_matches_werner_entropy():
    # H(A|E) = H(A) + sum_a p_a S(rho_E^a) - S(rho_E); Eve's marginal shares
    # the spectrum of rho_AB and H(A) = 1 for a Z measurement
    v = 0.9
    st_ = purified_cq_state(werner_state(v), [projector(0.0), np.eye(2) - projector(0.0)])
    lam = [(1 + 3 * v) / 4] + [(1 - v) / 4] * 3
    s_e = -sum(x * math.log2(x) for x in lam)
    assert conditional_entropy_cq(st_) == pytest.approx(1 + _cond_state_entropy(st_) - s_e, abs=1e-9)


def _cond_state_entropy(state):
    total = 0.0
    for w, r in state.blocks:
        ev = np.linalg.eigvalsh(r)
        ev = ev[ev > 1e-14]
        total += w * float(-np.sum(ev * np.log2(ev)))
    return total
