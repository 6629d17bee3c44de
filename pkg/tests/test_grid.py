import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dientropy.grid import GridSpec, coefficients, dense_discretized_bound, make_grid
from dientropy.oracle import relative_entropy_eigen
from helpers import discretized_relative_entropy, random_cq, random_density


def test_uniform_two_nodes():
    np.testing.assert_allclose(make_grid(GridSpec(2, 1.0, 0.5, "uniform")), [0.5, 1.0])


def test_logarithmic_three_nodes():
    np.testing.assert_allclose(make_grid(GridSpec(3, 1.0, 0.25, "logarithmic")), [0.25, 0.5, 1.0])


def test_default_uniform_nodes_are_k_over_r():
    np.testing.assert_allclose(make_grid(GridSpec(8)), np.arange(1, 9) / 8)


def test_custom_passthrough_and_rejections():
    np.testing.assert_array_equal(make_grid(GridSpec(spacing="custom", custom=[0.1, 0.4, 1.0])), [0.1, 0.4, 1.0])
    with pytest.raises(ValueError, match="increasing"):
        make_grid(GridSpec(spacing="custom", custom=[0.4, 0.1, 1.0]))
    with pytest.raises(ValueError, match="lam"):
        make_grid(GridSpec(spacing="custom", custom=[0.1, 0.5]))


@pytest.mark.parametrize("t_min", [1.0, 2.0])
def test_t_min_must_lie_below_lambda(t_min):
    with pytest.raises(ValueError):
        make_grid(GridSpec(4, 1.0, t_min))


def test_coefficients_two_nodes():
    c = coefficients([0.5, 1.0])
    ln2 = math.log(2)
    assert c.alpha[0] == -1.0 and c.beta[0] == 0.5
    assert c.alpha[1] == pytest.approx(-(2 * ln2 - 1), abs=1e-12)
    assert c.beta[1] == pytest.approx(0.193147, abs=1e-6)
    assert c.alpha[2] == pytest.approx(-(1 - ln2), abs=1e-12)
    assert c.beta[2] == pytest.approx(0.306853, abs=1e-6)


def test_coefficients_reject_bad_nodes():
    for nodes in ([0.5], [0.0, 1.0], [0.5, 0.5, 1.0], [-0.1, 1.0]):
        with pytest.raises(ValueError):
            coefficients(nodes)


@settings(max_examples=50)
@given(st.lists(st.floats(1e-4, 1.0), min_size=2, max_size=40, unique=True))
def test_coefficient_identities(raw):
    nodes = sorted(raw)
    if min(np.diff(nodes)) < 1e-9:
        return
    c = coefficients(nodes)
    np.testing.assert_allclose(c.beta[1:], -c.alpha[1:] * c.nodes, rtol=0, atol=1e-12)
    assert np.all(c.alpha <= 1e-15) and np.all(c.beta >= -1e-15)


def test_interior_weight_vanishes_for_close_nodes():
    c = coefficients([1 - 1e-6, 1.0])
    assert abs(c.alpha[1]) < 1e-5 and abs(c.alpha[2]) < 1e-5


def test_equal_states_give_zero():
    sigma = random_density(np.random.default_rng(0), 3)
    for r in (2, 5, 12):
        val = dense_discretized_bound(sigma, sigma, coefficients(make_grid(GridSpec(r))))
        assert -1e-15 <= val <= 1e-12


def test_operator_inequality_checked():
    with pytest.raises(ValueError, match="violated"):
        dense_discretized_bound(np.diag([0.9, 0.1]), np.diag([0.5, 0.5]), coefficients([0.5, 1.0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]), st.sampled_from([2, 3]))
def test_upper_bound_property(seed, alphabet, eve):
    rng = np.random.default_rng(seed)
    state = random_cq(rng, alphabet, eve)
    rho, sigma = state.joint(), state.reference()
    exact = relative_entropy_eigen(rho, sigma)
    for spec in (GridSpec(8), GridSpec(30, spacing="logarithmic")):
        assert discretized_relative_entropy(rho, sigma, spec) >= exact - 1e-9


def test_upper_bound_with_lambda_alphabet():
    # rho_AE <= 1 (x) rho_E = d_A sigma for sigma = (1/d_A) (x) rho_E
    rng = np.random.default_rng(11)
    state = random_cq(rng, 3, 2)
    rho = state.joint()
    sigma = np.kron(np.eye(3) / 3, state.eve_marginal())
    spec = GridSpec(30, lam=3.0, spacing="logarithmic")
    assert discretized_relative_entropy(rho, sigma, spec) >= relative_entropy_eigen(rho, sigma) - 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.99))
def test_refinement_never_increases(seed, new_node):
    rng = np.random.default_rng(seed)
    state = random_cq(rng, 2, 2)
    rho, sigma = state.joint(), state.reference()
    nodes = list(make_grid(GridSpec(6, spacing="logarithmic")))
    if min(abs(new_node - t) for t in nodes) < 1e-6:
        return
    coarse = dense_discretized_bound(rho, sigma, coefficients(nodes))
    fine = dense_discretized_bound(rho, sigma, coefficients(sorted(nodes + [new_node])))
    assert fine <= coarse + 1e-12


def test_gap_shrinks_quadratically():
    rng = np.random.default_rng(5)
    gaps = {r: [] for r in (15, 30, 60, 120)}
    for _ in range(20):
        state = random_cq(rng, 2, 2)
        rho, sigma = state.joint(), state.reference()
        exact = relative_entropy_eigen(rho, sigma)
        for r in gaps:
            gaps[r].append(discretized_relative_entropy(rho, sigma, GridSpec(r, spacing="logarithmic")) - exact)
    worst = {r: max(g) for r, g in gaps.items()}
    assert worst[15] > worst[30] > worst[60] > worst[120]
    # doubling r should cut the gap by about 4 once the grid resolves the kinks
    assert worst[60] / worst[120] > 3.0
    assert worst[120] < 1e-3
