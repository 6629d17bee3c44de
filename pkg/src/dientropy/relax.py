"""Moment-matrix relaxations of :class:`~dientropy.npo.NPOProblem` and the
sparse SDPA interchange format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .algebra import IDENTITY, Word, adjoint, basis, canonicalize, word_key, word_str
from .npo import NPOProblem, bell_maximization
from .scenario import BellFunctional, Scenario

__all__ = [
    "MissingMoment",
    "MomentProblem",
    "SDPInstance",
    "SDPAData",
    "moment_matrix",
    "to_sdp",
    "to_sdpa_data",
    "export_sdpa",
    "read_sdpa",
    "max_bell",
    "DEFAULT_EXTRAS",
]

DEFAULT_EXTRAS = ("MNP",)


class MissingMoment(ValueError):
    """A problem word does not occur as an entry of the moment matrix."""

    def __init__(self, word: Word):
        super().__init__(f"word {word_str(word)} is not in the span of the moment matrix; raise the level or add extras")
        self.word = word


@dataclass
class Row:
    coeffs: Dict[int, float]
    sense: str
    bound: float
    name: str = ""


@dataclass
class MomentProblem:
    """Moment matrix over ``basis`` with entries given as moment ids.

    ``matrix[i, j]`` is the id of ``adjoint(b_i) * b_j`` (``-1`` for zero);
    id 0 is the identity.  ``conj[i, j]`` marks entries equal to the complex
    conjugate of their id's moment; with ``real=True`` moments of ``w`` and
    ``w^*`` are identified and the matrix is real symmetric.
    """

    basis: List[Word]
    keys: List[Word]
    index: Dict[Word, int]
    matrix: np.ndarray
    conj: np.ndarray
    self_adjoint: np.ndarray
    objective: Dict[int, float]
    offset: float
    sense: str
    rows: List[Row]
    real: bool = True
    completions: List[Word] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def n_moments(self) -> int:
        return len(self.keys)

    def evaluate(self, moments: Dict[Word, complex]) -> Tuple[np.ndarray, float]:
        """Matrix and objective for explicit moment values (test helper)."""
        m = self.size
        out = np.zeros((m, m), dtype=complex)
        for i in range(m):
            for j in range(m):
                k = self.matrix[i, j]
                if k >= 0:
                    v = moments[self.keys[k]]
                    out[i, j] = np.conj(v) if self.conj[i, j] else v
        obj = self.offset + sum(c * np.real(moments[self.keys[k]]) for k, c in self.objective.items())
        return out, float(obj)


def _key(word: Word) -> Tuple[Word, bool]:
    adj = adjoint(word)
    if word_key(adj) < word_key(word):
        return adj, True
    return word, False


def _entry_words(words: Sequence[Word]):
    adjs = [adjoint(w) for w in words]
    m = len(words)
    table = {}
    for i in range(m):
        for j in range(i, m):
            table[i, j] = canonicalize(adjs[i] + words[j])
    return table


def _complete(missing: Word, present: set) -> List[Word]:
    """Fewest basis words making ``missing`` an entry ``adjoint(u) * v``."""
    best = None
    for cut in range(len(missing) + 1):
        left = adjoint(missing[:cut])
        right = missing[cut:]
        need = [w for w in dict.fromkeys((left, right)) if w not in present]
        rank = (len(need), max(len(left), len(right)), cut)
        if best is None or rank < best[0]:
            best = (rank, need)
    return best[1]


def moment_matrix(
    problem: NPOProblem,
    level: int = 2,
    extra_patterns: Sequence = (),
    real: bool = True,
    complete: bool = True,
) -> MomentProblem:
    """Relax ``problem`` at ``level`` with extra monomial patterns.

    Problem words missing from the matrix are added through the shortest
    completing monomials (``complete=True``) or reported as
    :class:`MissingMoment`.
    """
    words = basis(problem.relations.generators, level, extra_patterns)
    completions: List[Word] = []
    while True:
        table = _entry_words(words)
        entry_keys = {_key(w)[0] for w in table.values() if w is not None}
        missing = None
        for w in problem.words():
            if _key(w)[0] not in entry_keys:
                missing = w
                break
        if missing is None:
            break
        if not complete:
            raise MissingMoment(missing)
        add = _complete(missing, set(words))
        if not add:
            raise MissingMoment(missing)
        words = words + add
        completions += add

    keys: List[Word] = [IDENTITY]
    index: Dict[Word, int] = {IDENTITY: 0}
    m = len(words)
    mat = np.full((m, m), -1, dtype=np.int64)
    conj = np.zeros((m, m), dtype=bool)
    for (i, j), w in table.items():
        if w is None:
            continue
        key, flipped = _key(w)
        k = index.get(key)
        if k is None:
            k = len(keys)
            keys.append(key)
            index[key] = k
        mat[i, j] = mat[j, i] = k
        conj[i, j] = flipped
        conj[j, i] = not flipped if key != adjoint(key) else False
    for key, k in list(index.items()):
        index.setdefault(adjoint(key), k)
    self_adjoint = np.array([adjoint(k) == k for k in keys], dtype=bool)

    def to_row(poly) -> Dict[int, float]:
        out: Dict[int, float] = {}
        for w, c in poly.items():
            k = index[_key(w)[0]]
            out[k] = out.get(k, 0.0) + c
        return {k: c for k, c in out.items() if c != 0.0}

    rows = [Row(to_row(c.poly), c.sense, c.bound, c.name) for c in problem.constraints]
    return MomentProblem(
        basis=words,
        keys=keys,
        index=index,
        matrix=mat,
        conj=conj,
        self_adjoint=self_adjoint,
        objective=to_row(problem.objective),
        offset=problem.offset,
        sense=problem.sense,
        rows=rows,
        real=real,
        completions=completions,
    )


@dataclass
class SDPInstance:
    """``min/max c.x + offset`` over real ``x`` subject to

    * ``sum_v x_v F_v`` PSD (one block, entries ``(v, i, j, val)``, ``i <= j``),
    * ``G x >= h`` (nonnegative slack block),
    * ``A x = b``.

    ``var_bound`` is an a-priori bound on ``|x_v|`` (1 for moments of
    projector products) used to certify approximate dual solutions.
    """

    c: np.ndarray
    offset: float
    sense: str
    psd_size: int
    psd_var: np.ndarray
    psd_row: np.ndarray
    psd_col: np.ndarray
    psd_val: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    labels: List[str] = field(default_factory=list)
    moment_size: int = 0
    var_bound: Optional[float] = None

    @property
    def n(self) -> int:
        return len(self.c)

    def psd_matrix(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((self.psd_size, self.psd_size))
        np.add.at(out, (self.psd_row, self.psd_col), self.psd_val * x[self.psd_var])
        off = self.psd_row != self.psd_col
        np.add.at(out, (self.psd_col[off], self.psd_row[off]), self.psd_val[off] * x[self.psd_var[off]])
        return out


def to_sdp(mp: MomentProblem) -> SDPInstance:
    """Embed a moment problem as a real SDP.

    Variable ``v`` is the real part of moment ``v``; in complex mode every
    non-self-adjoint moment gets an extra variable for its imaginary part
    and the Hermitian matrix enters as ``[[Re, -Im], [Im, Re]]``.
    """
    n_re = mp.n_moments
    im_var = np.full(n_re, -1, dtype=np.int64)
    labels = [word_str(k) for k in mp.keys]
    n = n_re
    if not mp.real:
        for k in range(n_re):
            if not mp.self_adjoint[k]:
                im_var[k] = n
                labels.append(f"Im[{word_str(mp.keys[k])}]")
                n += 1

    m = mp.size
    iu, ju = np.triu_indices(m)
    ids = mp.matrix[iu, ju]
    nz = ids >= 0
    iu, ju, ids = iu[nz], ju[nz], ids[nz]
    var, row, col, val = [ids], [iu], [ju], [np.ones(len(ids))]
    size = m
    if not mp.real:
        size = 2 * m
        var += [ids]
        row += [iu + m]
        col += [ju + m]
        val += [np.ones(len(ids))]
        ii, jj = np.nonzero(mp.matrix >= 0)
        k = mp.matrix[ii, jj]
        has_im = im_var[k] >= 0
        ii, jj, k = ii[has_im], jj[has_im], k[has_im]
        sign = np.where(mp.conj[ii, jj], -1.0, 1.0)
        # top-right block holds -Im(M)
        var.append(im_var[k])
        row.append(ii)
        col.append(jj + m)
        val.append(-sign)

    c = np.zeros(n)
    for k, v in mp.objective.items():
        c[k] += v

    ineq_rows, ineq_h, eq_rows, eq_b = [], [], [], []
    norm = np.zeros(n)
    norm[0] = 1.0
    eq_rows.append(norm)
    eq_b.append(1.0)
    for r in mp.rows:
        vec = np.zeros(n)
        for k, v in r.coeffs.items():
            vec[k] += v
        if r.sense == "==":
            eq_rows.append(vec)
            eq_b.append(r.bound)
        elif r.sense == ">=":
            ineq_rows.append(vec)
            ineq_h.append(r.bound)
        elif r.sense == "<=":
            ineq_rows.append(-vec)
            ineq_h.append(-r.bound)
        else:
            raise ValueError(f"unknown sense {r.sense!r}")
    G = sp.csr_matrix(np.array(ineq_rows).reshape(len(ineq_rows), n))
    A = sp.csr_matrix(np.array(eq_rows).reshape(len(eq_rows), n))
    return SDPInstance(
        c=c,
        offset=mp.offset,
        sense=mp.sense,
        psd_size=size,
        psd_var=np.concatenate(var).astype(np.int64),
        psd_row=np.concatenate(row).astype(np.int64),
        psd_col=np.concatenate(col).astype(np.int64),
        psd_val=np.concatenate(val).astype(float),
        G=G,
        h=np.array(ineq_h, dtype=float),
        A=A,
        b=np.array(eq_b, dtype=float),
        labels=labels,
        moment_size=m,
        var_bound=1.0,
    )


# ---------------------------------------------------------------------------
# SDPA sparse format


@dataclass
class SDPAData:
    """Standard SDPA problem: minimize ``c.x`` s.t. ``sum_i x_i F_i - F_0`` PSD.

    ``entries`` holds ``(k, block, i, j, value)`` with 1-based block and
    matrix indices, ``i <= j`` and ``k = 0`` for ``F_0``.
    """

    c: np.ndarray
    block_sizes: List[int]
    entries: List[Tuple[int, int, int, int, float]]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SDPAData):
            return NotImplemented
        return (
            np.array_equal(self.c, other.c)
            and self.block_sizes == other.block_sizes
            and sorted(self.entries) == sorted(other.entries)
        )


def to_sdpa_data(inst: SDPInstance) -> SDPAData:
    """SDPA form of ``inst``; equalities become pairs of diagonal entries and
    maximization is turned into minimization.  The offset is dropped."""
    c = -inst.c if inst.sense == "max" else inst.c.copy()
    entries: List[Tuple[int, int, int, int, float]] = []
    sizes: List[int] = []
    blk = 0
    if inst.psd_size:
        blk += 1
        sizes.append(inst.psd_size)
        acc: Dict[Tuple[int, int, int], float] = {}
        for v, i, j, val in zip(inst.psd_var, inst.psd_row, inst.psd_col, inst.psd_val):
            key = (int(v) + 1, int(i) + 1, int(j) + 1)
            acc[key] = acc.get(key, 0.0) + float(val)
        entries += [(k, blk, i, j, val) for (k, i, j), val in acc.items() if val != 0.0]
    # diagonal block: G x - h >= 0, then A x - b >= 0 and -A x + b >= 0
    diag_rows: List[Tuple[np.ndarray, float]] = []
    G = inst.G.toarray()
    A = inst.A.toarray()
    for g, h in zip(G, inst.h):
        diag_rows.append((g, h))
    for a, b in zip(A, inst.b):
        diag_rows.append((a, b))
        diag_rows.append((-a, -b))
    if diag_rows:
        blk += 1
        sizes.append(-len(diag_rows))
        for d, (g, h) in enumerate(diag_rows, start=1):
            if h != 0.0:
                entries.append((0, blk, d, d, float(h)))
            for v in np.nonzero(g)[0]:
                entries.append((int(v) + 1, blk, d, d, float(g[v])))
    entries.sort()
    return SDPAData(np.asarray(c, dtype=float), sizes, entries)


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) or abs(v) >= 1e15 else str(int(v))


def export_sdpa(instance: SDPInstance | SDPAData, path: str | os.PathLike) -> None:
    """Write the sparse SDPA ``.dat-s`` text format."""
    data = instance if isinstance(instance, SDPAData) else to_sdpa_data(instance)
    lines = [
        str(len(data.c)),
        str(len(data.block_sizes)),
        " ".join(str(s) for s in data.block_sizes),
        " ".join(_fmt(v) for v in data.c),
    ]
    lines += [f"{k} {b} {i} {j} {_fmt(v)}" for k, b, i, j, v in data.entries]
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write SDPA file {os.fspath(path)!r}: {exc.strerror or exc}") from exc


def read_sdpa(path: str | os.PathLike) -> SDPAData:
    """Parse a sparse SDPA file (comment lines start with ``"`` or ``*``)."""
    try:
        with open(path) as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read SDPA file {os.fspath(path)!r}: {exc.strerror or exc}") from exc
    lines = [ln for ln in raw if ln.strip() and ln.lstrip()[0] not in '"*']

    def nums(line: str) -> List[str]:
        return line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ").split()

    m = int(nums(lines[0])[0])
    nblocks = int(nums(lines[1])[0])
    sizes = [int(s) for s in nums(lines[2])[:nblocks]]
    c = np.array([float(v) for v in nums(lines[3])[:m]])
    entries = []
    for ln in lines[4:]:
        k, b, i, j, v = nums(ln)[:5]
        i, j = int(i), int(j)
        entries.append((int(k), int(b), min(i, j), max(i, j), float(v)))
    entries.sort()
    return SDPAData(c, sizes, entries)


def max_bell(
    scenario: Scenario,
    functional: BellFunctional,
    level: int = 1,
    extra_patterns: Sequence = (),
    options=None,
) -> float:
    """Upper bound on the quantum value of ``functional``."""
    from .solver import SolverError, solve

    if functional.scenario != scenario:
        raise ValueError("functional and scenario do not match")
    mp = moment_matrix(bell_maximization(functional), level, extra_patterns)
    sol = solve(to_sdp(mp), options)
    if sol.status not in ("optimal", "near_optimal"):
        raise SolverError(f"Bell maximization ended with status {sol.status}")
    return sol.value
