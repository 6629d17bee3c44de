"""Bell scenarios, Bell functionals and their translation into moment rows."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .algebra import IDENTITY, Generator, Group, Poly, poly_add, poly_mul, poly_scale

__all__ = [
    "Scenario",
    "BellFunctional",
    "Distribution",
    "chsh",
    "cglmp3",
    "i3322",
    "bell_value",
    "functional_poly",
    "distribution_constraints",
    "deterministic_strategies",
    "classical_bound",
    "get_functional",
]


@dataclass(frozen=True)
class Scenario:
    """Two-party input/outcome structure, named ``n_a n_b o_a o_b``."""

    alice_outcomes: Tuple[int, ...]
    bob_outcomes: Tuple[int, ...]

    def __post_init__(self):
        if not self.alice_outcomes or not self.bob_outcomes:
            raise ValueError("each party needs at least one input")
        if min(self.alice_outcomes + self.bob_outcomes) < 1:
            raise ValueError("every input needs at least one outcome")

    @classmethod
    def uniform(cls, alice_inputs: int, bob_inputs: int, alice_outcomes: int, bob_outcomes: int) -> "Scenario":
        return cls((alice_outcomes,) * alice_inputs, (bob_outcomes,) * bob_inputs)

    @classmethod
    def from_name(cls, name: str) -> "Scenario":
        if len(name) != 4 or not name.isdigit():
            raise ValueError(f"scenario name must be four digits n_a n_b o_a o_b, got {name!r}")
        na, nb, oa, ob = (int(ch) for ch in name)
        return cls.uniform(na, nb, oa, ob)

    @property
    def alice_inputs(self) -> int:
        return len(self.alice_outcomes)

    @property
    def bob_inputs(self) -> int:
        return len(self.bob_outcomes)

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        """Array shape ``(a, b, x, y)`` of probability tables."""
        return (max(self.alice_outcomes), max(self.bob_outcomes), self.alice_inputs, self.bob_inputs)

    @property
    def name(self) -> str:
        oa = set(self.alice_outcomes)
        ob = set(self.bob_outcomes)
        if len(oa) == 1 and len(ob) == 1:
            return f"{self.alice_inputs}{self.bob_inputs}{oa.pop()}{ob.pop()}"
        return f"A{list(self.alice_outcomes)}B{list(self.bob_outcomes)}"

    def entries(self):
        """All valid ``(a, b, x, y)`` index tuples."""
        for x, oa in enumerate(self.alice_outcomes):
            for y, ob in enumerate(self.bob_outcomes):
                for a in range(oa):
                    for b in range(ob):
                        yield a, b, x, y

    def alice_generators(self) -> List[Generator]:
        return [Generator(Group.ALICE, x, (a,)) for x, o in enumerate(self.alice_outcomes) for a in range(o - 1)]

    def bob_generators(self) -> List[Generator]:
        return [Generator(Group.BOB, y, (b,)) for y, o in enumerate(self.bob_outcomes) for b in range(o - 1)]

    def generators(self) -> List[Generator]:
        return self.alice_generators() + self.bob_generators()

    def measurement_poly(self, group: Group, outcome: int, setting: int) -> Poly:
        """Projector for ``outcome`` of ``setting``; the last outcome is 1 - rest."""
        outcomes = self.alice_outcomes if group == Group.ALICE else self.bob_outcomes
        if not 0 <= setting < len(outcomes) or not 0 <= outcome < outcomes[setting]:
            raise ValueError(f"no outcome {outcome} for input {setting} of {group.name.lower()}")
        return projector_poly(group, setting, outcome, outcomes[setting])


def projector_poly(group: Group, setting: int, outcome: int, n_outcomes: int) -> Poly:
    if outcome < n_outcomes - 1:
        return {(Generator(group, setting, (outcome,)),): 1.0}
    poly: Poly = {IDENTITY: 1.0}
    for a in range(n_outcomes - 1):
        poly[(Generator(group, setting, (a,)),)] = -1.0
    return poly


@dataclass
class BellFunctional:
    """``sum c[a,b,x,y] p(a,b|x,y) + offset  (sense)  threshold``."""

    scenario: Scenario
    coefficients: np.ndarray
    offset: float = 0.0
    sense: str = ">="
    threshold: float = 0.0
    name: str = ""
    classical: Optional[float] = None

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != self.scenario.shape:
            raise ValueError(f"coefficient table has shape {self.coefficients.shape}, scenario needs {self.scenario.shape}")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be finite")
        if self.sense not in (">=", "<=", "=="):
            raise ValueError(f"unknown sense {self.sense!r}")

    def with_bound(self, threshold: float, sense: Optional[str] = None) -> "BellFunctional":
        return BellFunctional(
            self.scenario, self.coefficients, self.offset, sense or self.sense, float(threshold), self.name, self.classical
        )


@dataclass
class Distribution:
    """Conditional table ``p[a, b, x, y]``."""

    scenario: Scenario
    table: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if self.table.shape != self.scenario.shape:
            raise ValueError(f"table has shape {self.table.shape}, scenario needs {self.scenario.shape}")
        if self.table.min() < -1e-12:
            raise ValueError(f"negative probability {self.table.min():.3g}")
        sums = self.table.sum(axis=(0, 1))
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            x, y = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
            raise ValueError(f"p(.,.|{x},{y}) sums to {sums[x, y]!r}, not 1")

    @classmethod
    def uniform(cls, scenario: Scenario) -> "Distribution":
        table = np.zeros(scenario.shape)
        for a, b, x, y in scenario.entries():
            table[a, b, x, y] = 1.0 / (scenario.alice_outcomes[x] * scenario.bob_outcomes[y])
        return cls(scenario, table)


def _correlator(scenario: Scenario, x: int, y: int) -> np.ndarray:
    c = np.zeros(scenario.shape)
    for a in range(2):
        for b in range(2):
            c[a, b, x, y] = (-1) ** (a + b)
    return c


def _alice_marginal(scenario: Scenario, x: int, y0: int = 0) -> np.ndarray:
    c = np.zeros(scenario.shape)
    for a in range(2):
        c[a, :, x, y0] = (-1) ** a
    return c


def _bob_marginal(scenario: Scenario, y: int, x0: int = 0) -> np.ndarray:
    c = np.zeros(scenario.shape)
    for b in range(2):
        c[:, b, x0, y] = (-1) ** b
    return c


def _require(scenario: Optional[Scenario], name: str, want: str) -> Scenario:
    expected = Scenario.from_name(want)
    if scenario is not None and scenario != expected:
        raise ValueError(f"{name} needs scenario {want}, got {scenario.name}")
    return expected


def chsh(scenario: Optional[Scenario] = None) -> BellFunctional:
    """<A0B0> + <A0B1> + <A1B0> - <A1B1> with A_x = M_{0|x} - M_{1|x}."""
    s = _require(scenario, "CHSH", "2222")
    c = _correlator(s, 0, 0) + _correlator(s, 0, 1) + _correlator(s, 1, 0) - _correlator(s, 1, 1)
    return BellFunctional(s, c, name="chsh", threshold=2.0, classical=2.0)


def cglmp3(scenario: Optional[Scenario] = None) -> BellFunctional:
    """CGLMP expression for d = 3.

    ``P(X = Y + k)`` is the probability that outcome X equals outcome Y
    shifted by k modulo 3; measurement 1, 2 map to inputs 0, 1.
    """
    s = _require(scenario, "CGLMP", "2233")
    d = 3
    c = np.zeros(s.shape)

    def add(first: str, i: int, second: str, j: int, k: int, sign: float):
        # P(first_i = second_j + k)
        x, y = (i, j) if first == "A" else (j, i)
        for v in range(d):
            u = (v + k) % d
            a, b = (u, v) if first == "A" else (v, u)
            c[a, b, x, y] += sign

    add("A", 0, "B", 0, 0, +1)
    add("B", 0, "A", 1, 1, +1)
    add("A", 1, "B", 1, 0, +1)
    add("B", 1, "A", 0, 0, +1)
    add("A", 0, "B", 0, -1, -1)
    add("B", 0, "A", 1, 0, -1)
    add("A", 1, "B", 1, -1, -1)
    add("B", 1, "A", 0, -1, -1)
    return BellFunctional(s, c, name="cglmp3", threshold=2.0, classical=2.0)


def i3322(scenario: Optional[Scenario] = None) -> BellFunctional:
    """Correlator form of I3322; marginals are read at partner input 0."""
    s = _require(scenario, "I3322", "3322")
    E = lambda x, y: _correlator(s, x, y)  # noqa: E731
    c = (
        E(0, 2) + E(1, 2) + E(2, 0) + E(2, 1) + E(0, 1) + E(1, 0) - E(1, 1) - E(0, 0)
        + _alice_marginal(s, 0) - _alice_marginal(s, 1) + _bob_marginal(s, 0) - _bob_marginal(s, 1)
    )
    return BellFunctional(s, c, name="i3322", threshold=4.0, classical=4.0)


_BUILTIN = {"chsh": chsh, "cglmp3": cglmp3, "cglmp": cglmp3, "i3322": i3322}


def get_functional(name: str) -> BellFunctional:
    try:
        return _BUILTIN[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown Bell functional {name!r}; choose from chsh, cglmp3, i3322") from None


def bell_value(f: BellFunctional, d: Distribution | np.ndarray) -> float:
    table = d.table if isinstance(d, Distribution) else np.asarray(d, dtype=float)
    if table.shape != f.coefficients.shape:
        raise ValueError(f"distribution shape {table.shape} does not match functional {f.coefficients.shape}")
    return float(np.sum(f.coefficients * table) + f.offset)


def functional_poly(f: BellFunctional) -> Tuple[Poly, float]:
    """Moment-level polynomial of ``f`` (without offset) and the offset."""
    s = f.scenario
    terms = []
    for a, b, x, y in s.entries():
        coeff = f.coefficients[a, b, x, y]
        if coeff == 0.0:
            continue
        prod = poly_mul(s.measurement_poly(Group.ALICE, a, x), s.measurement_poly(Group.BOB, b, y))
        terms.append(poly_scale(prod, coeff))
    return poly_add(*terms), f.offset


def distribution_constraints(
    d: Distribution,
    which: str | Sequence[Tuple[int, int]] = "full",
) -> List[BellFunctional]:
    """Equality rows fixing the observed probabilities.

    ``which`` is ``"full"``, an explicit list of retained ``(x, y)`` pairs, or
    ``"chsh"`` for a single CHSH-value inequality (2222 tables only).
    """
    s = d.scenario
    if isinstance(which, str) and which == "chsh":
        f = chsh(s)
        return [f.with_bound(bell_value(f, d), ">=")]
    if isinstance(which, str):
        if which != "full":
            raise ValueError(f"unknown constraint selection {which!r}")
        pairs = None
    else:
        pairs = {tuple(p) for p in which}
    rows = []
    for a, b, x, y in s.entries():
        if pairs is not None and (x, y) not in pairs:
            continue
        c = np.zeros(s.shape)
        c[a, b, x, y] = 1.0
        rows.append(BellFunctional(s, c, sense="==", threshold=float(d.table[a, b, x, y]), name=f"p({a}{b}|{x}{y})"))
    return rows


def deterministic_strategies(s: Scenario):
    """Yield every local deterministic table."""
    for alice in itertools.product(*(range(o) for o in s.alice_outcomes)):
        for bob in itertools.product(*(range(o) for o in s.bob_outcomes)):
            table = np.zeros(s.shape)
            for x, a in enumerate(alice):
                for y, b in enumerate(bob):
                    table[a, b, x, y] = 1.0
            yield table


def classical_bound(f: BellFunctional) -> float:
    """Maximum of ``f`` over deterministic local strategies (brute force)."""
    return max(bell_value(f, t) for t in deterministic_strategies(f.scenario))
