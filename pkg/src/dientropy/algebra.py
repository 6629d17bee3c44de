"""Free *-algebra over Hermitian projector generators.

Words are tuples of :class:`Generator`.  The relations handled here are the
ones every operator in a device-independent model obeys:

* operators of different parties (Alice, Bob, Eve) commute,
* every generator is an idempotent Hermitian projector,
* projectors belonging to the same projective measurement but to different
  outcomes are orthogonal.

Completeness of a measurement is structural: the final outcome of every
measurement has no generator and is expanded as ``1 - sum(others)`` (see
:func:`measurement_poly` in :mod:`dientropy.scenario`).
"""

from __future__ import annotations

import itertools
from enum import IntEnum
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

__all__ = [
    "Group",
    "Generator",
    "Word",
    "Poly",
    "IDENTITY",
    "RelationSet",
    "canonicalize",
    "adjoint",
    "word_key",
    "basis",
    "parse_pattern",
    "poly_mul",
    "poly_add",
    "poly_scale",
    "poly_from_word",
    "word_str",
]


class Group(IntEnum):
    ALICE = 0
    BOB = 1
    EVE = 2


class Generator(NamedTuple):
    """A projector symbol.

    ``input >= 0`` marks a member of a projective measurement with that
    setting; members with equal input and different outcome annihilate.
    Eve's node projectors use ``input = -1`` and therefore never annihilate
    each other.  ``outcome`` is a tuple so that pair labels ``(a, b)`` and
    single labels ``(a,)`` share one ordering.
    """

    group: Group
    input: int
    outcome: Tuple[int, ...]
    node: int = -1

    def __str__(self) -> str:
        label = ",".join(str(o) for o in self.outcome)
        if self.group == Group.ALICE:
            return f"M{label}|{self.input}"
        if self.group == Group.BOB:
            return f"N{label}|{self.input}"
        if self.input >= 0:
            return f"C{label}"
        return f"P{self.node}({label})"


Word = Tuple[Generator, ...]
Poly = Dict[Word, float]

IDENTITY: Word = ()


def word_str(word: Optional[Word]) -> str:
    if word is None:
        return "0"
    if not word:
        return "1"
    return "*".join(str(g) for g in word)


class RelationSet:
    """Generator set of a problem together with the relations it induces.

    The relations themselves are uniform (see module docstring); the set is
    kept so that words can be validated against the scenario.
    """

    def __init__(self, generators: Iterable[Generator]):
        self.generators: Tuple[Generator, ...] = tuple(sorted(set(generators)))
        self._known = frozenset(self.generators)

    def __contains__(self, g: Generator) -> bool:
        return g in self._known

    def __len__(self) -> int:
        return len(self.generators)

    def by_group(self, group: Group) -> List[Generator]:
        return [g for g in self.generators if g.group == group]

    def orthogonal(self, g: Generator, h: Generator) -> bool:
        return g.group == h.group and g.input >= 0 and g.input == h.input and g.outcome != h.outcome

    def commute(self, g: Generator, h: Generator) -> bool:
        return g.group != h.group or g == h

    def validate(self, word: Iterable[Generator]) -> None:
        for g in word:
            if g not in self._known:
                raise ValueError(f"unknown generator {g!s}")


def canonicalize(word: Iterable[Generator], relations: Optional[RelationSet] = None) -> Optional[Word]:
    """Normal form of ``word``, or ``None`` for the zero element.

    Generators are stably sorted into party blocks, then inside each block
    adjacent repeats collapse and adjacent orthogonal pairs annihilate.  All
    rewrite rules shorten the word, so a single stack pass per block reaches
    the fixed point.
    """
    word = tuple(word)
    if relations is not None:
        relations.validate(word)
    blocks: Tuple[List[Generator], ...] = ([], [], [])
    for g in word:
        blocks[g.group].append(g)
    out: List[Generator] = []
    for block in blocks:
        start = len(out)
        for g in block:
            if len(out) > start:
                top = out[-1]
                if top == g:
                    continue
                if top.input >= 0 and top.input == g.input and top.outcome != g.outcome:
                    return None
            out.append(g)
    return tuple(out)


def adjoint(word: Optional[Word]) -> Optional[Word]:
    """Hermitian conjugate: reversal followed by canonicalization."""
    if word is None:
        return None
    return canonicalize(reversed(word))


def word_key(word: Word) -> Tuple[int, Word]:
    """Total order on words: shorter first, then lexicographic."""
    return (len(word), word)


def poly_from_word(word: Optional[Word], coeff: float = 1.0) -> Poly:
    return {} if word is None else {word: coeff}


def poly_add(*polys: Poly) -> Poly:
    out: Poly = {}
    for p in polys:
        for w, c in p.items():
            out[w] = out.get(w, 0.0) + c
    return {w: c for w, c in out.items() if c != 0.0}


def poly_scale(p: Poly, s: float) -> Poly:
    return {w: s * c for w, c in p.items()} if s != 0.0 else {}


def poly_mul(*polys: Poly) -> Poly:
    out: Poly = {IDENTITY: 1.0}
    for p in polys:
        acc: Poly = {}
        for (w1, c1), (w2, c2) in itertools.product(out.items(), p.items()):
            w = canonicalize(w1 + w2)
            if w is None:
                continue
            acc[w] = acc.get(w, 0.0) + c1 * c2
        out = {w: c for w, c in acc.items() if c != 0.0}
    return out


_PATTERN_GROUPS = {"M": Group.ALICE, "A": Group.ALICE, "N": Group.BOB, "B": Group.BOB, "P": Group.EVE, "E": Group.EVE, "C": Group.EVE}


def parse_pattern(pattern: str | Sequence[Group]) -> Tuple[Group, ...]:
    """``"M*N*P"``, ``"M·N·P"`` and ``"MNP"`` all mean Alice·Bob·Eve."""
    if not isinstance(pattern, str):
        return tuple(Group(g) for g in pattern)
    letters = [ch for ch in pattern.upper() if ch.isalpha()]
    try:
        return tuple(_PATTERN_GROUPS[ch] for ch in letters)
    except KeyError as exc:
        raise ValueError(f"bad monomial pattern {pattern!r}") from exc


def basis(
    generators: Iterable[Generator],
    level: int,
    extra_patterns: Sequence[str | Sequence[Group]] = (),
) -> List[Word]:
    """Canonical nonzero words of length <= level, then pattern extras.

    The identity comes first; the level part is sorted by :func:`word_key`
    and the extras follow in generation order, skipping duplicates.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    gens = sorted(set(generators))
    seen = {IDENTITY}
    frontier: List[Word] = [IDENTITY]
    for length in range(1, level + 1):
        nxt = set()
        for w in frontier:
            for g in gens:
                c = canonicalize(w + (g,))
                if c is not None and len(c) == length and c not in seen:
                    nxt.add(c)
        seen.update(nxt)
        frontier = sorted(nxt, key=word_key)
    words = sorted(seen, key=word_key)

    by_group = {grp: [g for g in gens if g.group == grp] for grp in Group}
    for pattern in extra_patterns:
        groups = parse_pattern(pattern)
        for combo in itertools.product(*(by_group[grp] for grp in groups)):
            c = canonicalize(combo)
            if c is not None and c not in seen:
                seen.add(c)
                words.append(c)
    return words
