import itertools

import pytest
from hypothesis import given, settings, strategies as st

from dientropy.algebra import (
    IDENTITY,
    Generator,
    Group,
    RelationSet,
    adjoint,
    basis,
    canonicalize,
    parse_pattern,
    poly_mul,
    word_key,
    word_str,
)

A0 = Generator(Group.ALICE, 0, (0,))
A1 = Generator(Group.ALICE, 0, (1,))
A2 = Generator(Group.ALICE, 1, (0,))
B0 = Generator(Group.BOB, 0, (0,))
B1 = Generator(Group.BOB, 1, (0,))
P0 = Generator(Group.EVE, -1, (0,), node=0)
P1 = Generator(Group.EVE, -1, (1,), node=0)

GENS = [A0, A1, A2, B0, B1, P0, P1]
words = st.lists(st.sampled_from(GENS), max_size=6)


def test_idempotent_projector():
    assert canonicalize((A0, A0)) == (A0,)


def test_orthogonal_outcomes_annihilate():
    assert canonicalize((A0, A1)) is None


def test_parties_commute_into_blocks():
    assert canonicalize((P0, B0, A0)) == (A0, B0, P0)
    assert canonicalize((B0, A2, B0, A2)) == (A2, B0)


def test_node_projectors_are_not_orthogonal():
    assert canonicalize((P0, P1)) == (P0, P1)
    assert canonicalize((P0, P1, P0)) == (P0, P1, P0)


def test_commutation_exposes_annihilation():
    assert canonicalize((A0, B0, A1)) is None


def test_unknown_generator_rejected():
    rel = RelationSet([A0, B0])
    with pytest.raises(ValueError, match="unknown generator"):
        canonicalize((A0, A2), rel)


@given(words)
def test_canonicalize_idempotent(w):
    c = canonicalize(w)
    assert c is None or canonicalize(c) == c


@given(words)
def test_adjoint_involution(w):
    c = canonicalize(w)
    assert adjoint(adjoint(c)) == c


@given(words, words)
def test_adjoint_reverses_products(u, v):
    lhs = adjoint(canonicalize(tuple(u) + tuple(v)))
    rhs = canonicalize(tuple(adjoint(canonicalize(v)) or ()) + tuple(adjoint(canonicalize(u)) or ()))
    if canonicalize(u) is None or canonicalize(v) is None:
        assert lhs is None
    else:
        assert lhs == rhs


def test_poly_mul_completeness():
    # (A0 + A1)(A0 + A1) = A0 + A1 since the cross terms vanish
    p = {(A0,): 1.0, (A1,): 1.0}
    assert poly_mul(p, p) == p


def test_word_key_orders_by_length():
    assert sorted([(A0, B0), (B0,), IDENTITY], key=word_key) == [IDENTITY, (B0,), (A0, B0)]


def test_basis_level_one_and_two():
    gens = [A0, A2, B0, B1]
    assert len(basis(gens, 1)) == 5
    lvl2 = basis(gens, 2)
    # 1 + 4 + products: A0A2, A2A0, B0B1, B1B0 and 4 cross terms
    assert len(lvl2) == 1 + 4 + 4 + 4
    assert lvl2[0] == IDENTITY
    assert len(set(lvl2)) == len(lvl2)


def test_basis_pattern_extras():
    gens = [A0, B0, P0]
    extra = basis(gens, 1, ["MNP"])
    assert (A0, B0, P0) in extra
    assert parse_pattern("M*N*P") == parse_pattern("M·N·P") == (Group.ALICE, Group.BOB, Group.EVE)
    with pytest.raises(ValueError):
        parse_pattern("MXQ")


def test_basis_rejects_level_zero():
    with pytest.raises(ValueError):
        basis([A0], 0)


def test_word_str():
    assert word_str(IDENTITY) == "1"
    assert word_str(None) == "0"
    assert word_str((A0, P0)) == "M0|0*P0(0)"


@settings(max_examples=30)
@given(st.integers(1, 3))
def test_basis_words_are_canonical(level):
    for w in basis(GENS, level):
        assert canonicalize(w) == w
        assert len(w) <= level


def test_all_length_two_pairs_covered():
    lvl2 = set(basis([A0, A2, B0], 2))
    for g, h in itertools.product([A0, A2, B0], repeat=2):
        c = canonicalize((g, h))
        if c is not None:
            assert c in lvl2
