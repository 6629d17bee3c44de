"""Integration node grids and the (alpha, beta) coefficients of the
discretized relative-entropy upper bound.

For nodes ``0 < t_1 < ... < t_r = lam`` the integrand
``f(s) = tr+[s*sigma - rho]`` is convex in ``s``, so replacing it by its
chords on every ``[t_k, t_{k+1}]`` overestimates ``int f(s)/s ds``.  The
chord integral is ``sum_k w_k f(t_k)`` and every ``w_k f(t_k)`` is a
supremum over ``0 <= P <= 1`` of ``tr[P(alpha_k rho + beta_k sigma)]`` with
``alpha_k = -w_k`` and ``beta_k = w_k t_k``.  The segment ``[0, t_1]`` is
covered by ``f(s) <= (s / t_1) f(t_1)``, i.e. ``(alpha_0, beta_0) = (-1, t_1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .oracle import _as_hermitian, trace_plus

__all__ = ["GridSpec", "GridCoefficients", "make_grid", "coefficients", "dense_discretized_bound", "SPACINGS"]

SPACINGS = ("uniform", "logarithmic", "custom")


@dataclass(frozen=True)
class GridSpec:
    """Node placement on ``[t_min, lam]``.

    ``t_min`` defaults to ``lam / nodes`` for uniform spacing (so the nodes
    are ``lam * k / r``) and to ``1e-3 * lam`` for logarithmic spacing.
    """

    nodes: int = 8
    lam: float = 1.0
    t_min: Optional[float] = None
    spacing: str = "uniform"
    custom: Optional[Sequence[float]] = None

    def resolved_t_min(self) -> float:
        if self.t_min is not None:
            return float(self.t_min)
        return self.lam / self.nodes if self.spacing == "uniform" else 1e-3 * self.lam


@dataclass(frozen=True)
class GridCoefficients:
    """Nodes ``t_1..t_r`` and coefficient pairs for ``k = 0..r``.

    ``alpha[0] = -1`` and ``beta[0] = t_1`` is the end term for ``[0, t_1]``.
    """

    nodes: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    lam: float

    @property
    def r(self) -> int:
        return len(self.nodes)

    def __len__(self) -> int:
        return len(self.alpha)


def make_grid(spec: GridSpec) -> np.ndarray:
    if spec.spacing not in SPACINGS:
        raise ValueError(f"unknown spacing {spec.spacing!r}; expected one of {SPACINGS}")
    if spec.lam <= 0:
        raise ValueError("lam must be positive")
    if spec.spacing == "custom":
        if spec.custom is None:
            raise ValueError("custom spacing needs an explicit node list")
        nodes = np.asarray(spec.custom, dtype=float)
        _check_nodes(nodes)
        if not math.isclose(nodes[-1], spec.lam, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"last node {nodes[-1]} must equal lam = {spec.lam}")
        return nodes
    if spec.nodes < 1:
        raise ValueError("need at least one node")
    t_min = spec.resolved_t_min()
    if spec.nodes == 1:
        return np.array([float(spec.lam)])
    if not 0 < t_min < spec.lam:
        raise ValueError(f"t_min = {t_min} must lie in (0, lam = {spec.lam})")
    if spec.spacing == "uniform":
        nodes = np.linspace(t_min, spec.lam, spec.nodes)
    else:
        nodes = np.geomspace(t_min, spec.lam, spec.nodes)
    nodes[-1] = spec.lam
    return nodes


def _check_nodes(nodes: np.ndarray) -> None:
    if nodes.ndim != 1 or len(nodes) < 2:
        raise ValueError("need at least two nodes")
    if not np.all(np.isfinite(nodes)) or nodes[0] <= 0:
        raise ValueError("nodes must be positive and finite")
    if np.any(np.diff(nodes) <= 0):
        raise ValueError("nodes must be strictly increasing without duplicates")


def coefficients(nodes: Sequence[float]) -> GridCoefficients:
    t = np.asarray(nodes, dtype=float)
    _check_nodes(t)
    r = len(t)
    # chord weights: left[k] multiplies f(t_k) from segment [t_k, t_{k+1}],
    # right[k] multiplies f(t_{k+1}) from the same segment
    lo, hi = t[:-1], t[1:]
    log_ratio = np.log(hi / lo)
    left = (1.0 + lo / (hi - lo)) * log_ratio - 1.0
    right = 1.0 - lo / (hi - lo) * log_ratio
    w = np.zeros(r)
    w[:-1] += left
    w[1:] += right
    alpha = np.concatenate(([-1.0], -w))
    beta = np.concatenate(([t[0]], w * t))
    return GridCoefficients(nodes=t, alpha=alpha, beta=beta, lam=float(t[-1]))


def dense_discretized_bound(rho, sigma, coeffs: GridCoefficients, tol: float = 1e-9) -> float:
    """``sum_k tr+[alpha_k rho + beta_k sigma]`` (nats), an upper bound on
    ``int_0^lam tr+[s sigma - rho] ds / s``."""
    rho = _as_hermitian(rho, "rho")
    sigma = _as_hermitian(sigma, "sigma")
    gap = np.linalg.eigvalsh(coeffs.lam * sigma - rho).min()
    if gap < -tol:
        raise ValueError(f"rho <= lam*sigma violated (min eigenvalue {gap:.3g})")
    return float(sum(trace_plus(a * rho + b * sigma) for a, b in zip(coeffs.alpha, coeffs.beta)))
