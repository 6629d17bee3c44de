"""Noncommutative polynomial optimization problems for entropy bounds.

Objectives are polynomials in the measurement projectors of Alice and Bob
and in Eve's auxiliary projectors; all constants, including the ``1/ln 2``
conversion to bits, are folded in so that the optimum of a joint problem is
directly the entropy bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .algebra import (
    IDENTITY,
    Generator,
    Group,
    Poly,
    RelationSet,
    poly_add,
    poly_mul,
    poly_scale,
)
from .grid import GridCoefficients
from .scenario import BellFunctional, Scenario, functional_poly, projector_poly

__all__ = ["Constraint", "NPOProblem", "one_sided", "two_sided", "min_entropy", "bell_maximization", "MODES"]

LN2 = math.log(2.0)
MODES = ("joint", "per_node")


@dataclass
class Constraint:
    poly: Poly
    sense: str  # ">=", "<=" or "=="
    bound: float
    name: str = ""


@dataclass
class NPOProblem:
    relations: RelationSet
    objective: Poly
    offset: float = 0.0
    sense: str = "min"
    constraints: List[Constraint] = field(default_factory=list)
    mode: str = "joint"
    node: Optional[int] = None
    meta: Dict = field(default_factory=dict)

    def words(self):
        yield from self.objective
        for c in self.constraints:
            yield from c.poly


def _bell_rows(constraints: Sequence[BellFunctional], scenario: Scenario) -> List[Constraint]:
    rows = []
    for f in constraints:
        if f.scenario != scenario:
            raise ValueError(f"constraint {f.name or '?'} belongs to scenario {f.scenario.name}, not {scenario.name}")
        poly, offset = functional_poly(f)
        const = poly.pop(IDENTITY, 0.0)
        rows.append(Constraint(poly, f.sense, f.threshold - offset - const, f.name))
    return rows


def _check_grid(grid: GridCoefficients) -> None:
    if not math.isclose(grid.lam, 1.0, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"cq ordering requires a grid ending at lam = 1, got {grid.lam}")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def node_projector(node: int, label: Tuple[int, ...]) -> Generator:
    return Generator(Group.EVE, -1, tuple(label), node)


def _build(
    scenario: Scenario,
    constraints: Sequence[BellFunctional],
    grid: GridCoefficients,
    labels: List[Tuple[int, ...]],
    key_poly,
    mode: str,
    meta: Dict,
):
    _check_grid(grid)
    _check_mode(mode)
    rows = _bell_rows(constraints, scenario)
    base = scenario.generators()
    offset = (len(labels) - 1) / LN2

    def node_terms(k: int) -> Tuple[Poly, List[Generator]]:
        gens = [node_projector(k, lab) for lab in labels]
        terms = []
        for lab, p in zip(labels, gens):
            pk: Poly = {(p,): 1.0}
            terms.append(poly_scale(poly_mul(key_poly(lab), pk), -grid.alpha[k] / LN2))
            terms.append(poly_scale(pk, -grid.beta[k] / LN2))
        return poly_add(*terms), gens

    if mode == "joint":
        all_terms, all_gens = [], []
        for k in range(len(grid)):
            poly, gens = node_terms(k)
            all_terms.append(poly)
            all_gens += gens
        return NPOProblem(
            RelationSet(base + all_gens), poly_add(*all_terms), offset, "min", rows, "joint", None, dict(meta)
        )
    problems = []
    for k in range(len(grid)):
        poly, gens = node_terms(k)
        problems.append(
            NPOProblem(RelationSet(base + gens), poly, 0.0, "min", list(rows), "per_node", k, dict(meta, offset=offset))
        )
    return problems


def one_sided(
    scenario: Scenario,
    constraints: Sequence[BellFunctional],
    grid: GridCoefficients,
    key_input: int = 0,
    mode: str = "joint",
):
    """Lower bound on ``H(A | X = key_input, E)``.

    Joint mode returns one problem whose optimum is the bound.  Per-node
    mode returns ``r + 1`` problems; the bound is ``meta['offset']`` plus
    the sum of their optima.
    """
    if not 0 <= key_input < scenario.alice_inputs:
        raise ValueError(f"key input {key_input} out of range for {scenario.alice_inputs} Alice inputs")
    n_out = scenario.alice_outcomes[key_input]
    labels = [(a,) for a in range(n_out)]

    def key_poly(lab):
        return projector_poly(Group.ALICE, key_input, lab[0], n_out)

    meta = {"task": "one_sided", "key_input": key_input, "alphabet": n_out}
    return _build(scenario, constraints, grid, labels, key_poly, mode, meta)


def two_sided(
    scenario: Scenario,
    constraints: Sequence[BellFunctional],
    grid: GridCoefficients,
    key_input: int = 0,
    key_input_bob: int = 0,
    mode: str = "joint",
):
    """Lower bound on ``H(AB | X = x, Y = y, E)`` with projectors per outcome pair."""
    if not 0 <= key_input < scenario.alice_inputs:
        raise ValueError(f"key input {key_input} out of range for {scenario.alice_inputs} Alice inputs")
    if not 0 <= key_input_bob < scenario.bob_inputs:
        raise ValueError(f"key input {key_input_bob} out of range for {scenario.bob_inputs} Bob inputs")
    oa = scenario.alice_outcomes[key_input]
    ob = scenario.bob_outcomes[key_input_bob]
    labels = [(a, b) for a in range(oa) for b in range(ob)]

    def key_poly(lab):
        return poly_mul(
            projector_poly(Group.ALICE, key_input, lab[0], oa),
            projector_poly(Group.BOB, key_input_bob, lab[1], ob),
        )

    meta = {"task": "two_sided", "key_input": key_input, "key_input_bob": key_input_bob, "alphabet": oa * ob}
    return _build(scenario, constraints, grid, labels, key_poly, mode, meta)


def min_entropy(scenario: Scenario, constraints: Sequence[BellFunctional], key_input: int = 0) -> NPOProblem:
    """Guessing probability: maximize ``sum_a <M_{a|x} C_a>``.

    Eve's guess is a projective measurement ``C`` commuting with Alice and
    Bob; its last outcome is eliminated like every other measurement.
    ``H_min = -log2(optimum)``.
    """
    if not 0 <= key_input < scenario.alice_inputs:
        raise ValueError(f"key input {key_input} out of range for {scenario.alice_inputs} Alice inputs")
    n_out = scenario.alice_outcomes[key_input]
    guess = [Generator(Group.EVE, 0, (a,)) for a in range(n_out - 1)]
    terms = [
        poly_mul(projector_poly(Group.ALICE, key_input, a, n_out), projector_poly(Group.EVE, 0, a, n_out))
        for a in range(n_out)
    ]
    obj = poly_add(*terms)
    const = obj.pop(IDENTITY, 0.0)
    return NPOProblem(
        RelationSet(scenario.generators() + guess),
        obj,
        const,
        "max",
        _bell_rows(constraints, scenario),
        "joint",
        None,
        {"task": "min_entropy", "key_input": key_input, "alphabet": n_out},
    )


def bell_maximization(f: BellFunctional) -> NPOProblem:
    """Quantum value of ``f`` (upper bound via relaxation)."""
    poly, offset = functional_poly(f)
    const = poly.pop(IDENTITY, 0.0)
    return NPOProblem(
        RelationSet(f.scenario.generators()), poly, offset + const, "max", [], "joint", None, {"task": "max_bell"}
    )
