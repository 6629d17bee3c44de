"""Loading observed statistics and projecting them onto the non-signalling set.

Two file layouts are accepted.

CSV::

    na=2,nb=2,nx=2,ny=2,mode=counts
    x,y,a,b,value
    0,0,0,0,3
    ...

``na``/``nb`` are the outcome counts of Alice/Bob, ``nx``/``ny`` their input
counts.  The column header line is optional, blank lines and lines starting
with ``#`` are ignored and missing entries are zero.

JSON::

    {"na": 2, "nb": 2, "nx": 2, "ny": 2, "mode": "probs",
     "table": [[[[p(0,0|0,0), p(0,1|0,0)], [...]], ...], ...]}

with ``table[x][y][a][b]``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .scenario import Distribution, Scenario

__all__ = [
    "DataError",
    "RawCounts",
    "load_distribution",
    "nonsignalling_system",
    "is_nonsignalling",
    "project_nonsignalling",
]

log = logging.getLogger(__name__)

MODES = ("counts", "probs")
PROB_TOL = 1e-6
NEG_TOL = 1e-6


class DataError(ValueError):
    """Malformed statistics file or table."""


@dataclass
class RawCounts:
    """Event counts ``n[a, b, x, y]``."""

    scenario: Scenario
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != self.scenario.shape:
            raise DataError(f"count table has shape {self.counts.shape}, expected {self.scenario.shape}")
        if np.any(self.counts < 0):
            raise DataError("counts must be nonnegative")

    @property
    def settings_frequency(self) -> np.ndarray:
        """Trials per ``(x, y)``."""
        return self.counts.sum(axis=(0, 1))

    def to_distribution(self, meta: Optional[dict] = None) -> Distribution:
        trials = self.settings_frequency
        empty = np.argwhere(trials <= 0)
        if len(empty):
            x, y = empty[0]
            raise DataError(f"no trials recorded for setting (x={x}, y={y})")
        return Distribution(self.scenario, self.counts / trials, dict(meta or {}, trials=trials.tolist()))


def _header(fields: Dict[str, str], path: str) -> Tuple[Scenario, str]:
    want = ("na", "nb", "nx", "ny", "mode")
    missing = [k for k in want if k not in fields]
    if missing:
        raise DataError(f"{path}: header lacks {', '.join(missing)}")
    try:
        na, nb, nx, ny = (int(fields[k]) for k in want[:4])
    except ValueError as exc:
        raise DataError(f"{path}: non-integer dimension in header ({exc})") from None
    if min(na, nb, nx, ny) < 1:
        raise DataError(f"{path}: dimensions must be positive")
    mode = str(fields["mode"]).strip().lower()
    if mode not in MODES:
        raise DataError(f"{path}: mode must be one of {MODES}, got {mode!r}")
    return Scenario.uniform(nx, ny, na, nb), mode


def _finish(table: np.ndarray, scenario: Scenario, mode: str, path: str) -> Distribution:
    meta = {"source": path, "mode": mode}
    if mode == "counts":
        return RawCounts(scenario, table).to_distribution(meta)
    if np.any(table < 0):
        a, b, x, y = np.argwhere(table < 0)[0]
        raise DataError(f"{path}: negative probability at x={x}, y={y}, a={a}, b={b}")
    sums = table.sum(axis=(0, 1))
    bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
    if len(bad):
        x, y = bad[0]
        raise DataError(f"{path}: probabilities for setting (x={x}, y={y}) sum to {sums[x, y]:.9g}, not 1")
    return Distribution(scenario, table / sums, meta)


def _load_csv(path: str) -> Distribution:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    scenario = mode = table = None
    for lineno, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        if not cells or not any(cells) or cells[0].startswith("#"):
            continue
        if scenario is None:
            try:
                fields = dict(c.split("=", 1) for c in cells if c)
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected header 'na=..,nb=..,nx=..,ny=..,mode=..'") from None
            scenario, mode = _header({k.strip(): v.strip() for k, v in fields.items()}, f"{path}:{lineno}")
            table = np.zeros(scenario.shape)
            continue
        if cells[:4] == ["x", "y", "a", "b"]:
            continue
        if len(cells) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 columns x,y,a,b,value, found {len(cells)}")
        try:
            x, y, a, b = (int(c) for c in cells[:4])
            value = float(cells[4])
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed row {','.join(cells)!r}") from None
        na, nb, nx, ny = scenario.shape
        if not (0 <= x < nx and 0 <= y < ny and 0 <= a < na and 0 <= b < nb):
            raise DataError(
                f"{path}:{lineno}: index (x={x}, y={y}, a={a}, b={b}) outside declared dims "
                f"nx={nx}, ny={ny}, na={na}, nb={nb}"
            )
        if not np.isfinite(value) or value < 0:
            raise DataError(f"{path}:{lineno}: value must be finite and nonnegative, got {cells[4]!r}")
        table[a, b, x, y] += value
    if scenario is None:
        raise DataError(f"{path}: empty file")
    return _finish(table, scenario, mode, path)


def _load_json(path: str) -> Distribution:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict) or "table" not in obj:
        raise DataError(f"{path}: expected an object with dims, mode and table")
    scenario, mode = _header(obj, path)
    na, nb, nx, ny = scenario.shape
    try:
        raw = np.asarray(obj["table"], dtype=float)
    except (TypeError, ValueError):
        raise DataError(f"{path}: table is ragged or non-numeric") from None
    if raw.shape != (nx, ny, na, nb):
        raise DataError(f"{path}: table[x][y][a][b] has shape {raw.shape}, expected {(nx, ny, na, nb)}")
    return _finish(raw.transpose(2, 3, 0, 1).copy(), scenario, mode, path)


def load_distribution(path: str | os.PathLike, format: Optional[str] = None) -> Distribution:
    """Read a CSV or JSON-table file; ``format`` defaults to the extension."""
    path = os.fspath(path)
    fmt = (format or os.path.splitext(path)[1].lstrip(".") or "csv").lower()
    if fmt in ("json", "json-table"):
        loader = _load_json
    elif fmt == "csv":
        loader = _load_csv
    else:
        raise DataError(f"unknown format {fmt!r}; use csv or json-table")
    try:
        return loader(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------------------
# non-signalling


def _entry_index(s: Scenario):
    entries = list(s.entries())
    return entries, {e: i for i, e in enumerate(entries)}


def nonsignalling_system(s: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """``(A, b)`` with ``A p = b`` iff ``p`` (ordered as ``s.entries()``) is
    normalized per setting and non-signalling."""
    entries, idx = _entry_index(s)
    rows, rhs = [], []
    for x in range(s.alice_inputs):
        for y in range(s.bob_inputs):
            r = np.zeros(len(entries))
            for a in range(s.alice_outcomes[x]):
                for b in range(s.bob_outcomes[y]):
                    r[idx[a, b, x, y]] = 1.0
            rows.append(r)
            rhs.append(1.0)
    for x in range(s.alice_inputs):
        for a in range(s.alice_outcomes[x]):
            for y in range(1, s.bob_inputs):
                r = np.zeros(len(entries))
                for b in range(s.bob_outcomes[y]):
                    r[idx[a, b, x, y]] += 1.0
                for b in range(s.bob_outcomes[0]):
                    r[idx[a, b, x, 0]] -= 1.0
                rows.append(r)
                rhs.append(0.0)
    for y in range(s.bob_inputs):
        for b in range(s.bob_outcomes[y]):
            for x in range(1, s.alice_inputs):
                r = np.zeros(len(entries))
                for a in range(s.alice_outcomes[x]):
                    r[idx[a, b, x, y]] += 1.0
                for a in range(s.alice_outcomes[0]):
                    r[idx[a, b, 0, y]] -= 1.0
                rows.append(r)
                rhs.append(0.0)
    return np.array(rows), np.array(rhs)


def _marginal_violation(d: Distribution) -> float:
    s, t = d.scenario, d.table
    worst = 0.0
    for x in range(s.alice_inputs):
        ref = t[:, :, x, 0].sum(axis=1)
        for y in range(1, s.bob_inputs):
            worst = max(worst, float(np.max(np.abs(t[:, :, x, y].sum(axis=1) - ref))))
    for y in range(s.bob_inputs):
        ref = t[:, :, 0, y].sum(axis=0)
        for x in range(1, s.alice_inputs):
            worst = max(worst, float(np.max(np.abs(t[:, :, x, y].sum(axis=0) - ref))))
    return worst


def is_nonsignalling(d: Distribution, tol: float = 1e-9) -> Tuple[bool, float]:
    """Whether all marginals are setting-independent, and the largest deviation."""
    v = _marginal_violation(d)
    return v <= tol, v


def _affine_projection(p: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    r = A @ p - b
    y, *_ = np.linalg.lstsq(A @ A.T, r, rcond=None)
    return p - A.T @ y


def project_nonsignalling(d: Distribution) -> Distribution:
    """Closest (Euclidean) normalized non-signalling table.

    Negative entries of the affine projection are clipped once and the result
    projected again; anything below ``-1e-6`` after that is an error.  The
    distance to the input is stored in ``meta['perturbation_l1']`` and
    ``meta['perturbation_l2']``.
    """
    s = d.scenario
    entries, _ = _entry_index(s)
    p0 = np.array([d.table[e] for e in entries])
    A, b = nonsignalling_system(s)
    p = _affine_projection(p0, A, b)
    clipped = False
    if p.min() < -1e-12:
        clipped = True
        log.warning("non-signalling projection has negative entries (min %.3g); clipping and reprojecting", p.min())
        p = _affine_projection(np.clip(p, 0.0, None), A, b)
        if p.min() < -NEG_TOL:
            raise DataError(
                f"projection onto the non-signalling set leaves entry {p.min():.3g} < -{NEG_TOL:g}; "
                "the data need a constrained (QP) projection"
            )
    p = np.where(p < 0, 0.0, p)
    table = np.zeros(s.shape)
    for e, v in zip(entries, p):
        table[e] = v
    table /= table.sum(axis=(0, 1))
    diff = table - d.table
    meta = dict(
        d.meta,
        projected=True,
        clipped=clipped,
        perturbation_l1=float(np.abs(diff).sum()),
        perturbation_l2=float(np.sqrt((diff**2).sum())),
    )
    return Distribution(s, table, meta)
