"""Dense finite-dimensional reference values for every entropy quantity.

All entropies are returned in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import integrate

__all__ = [
    "NumericFailure",
    "CqState",
    "MeasurementAngleSet",
    "trace_plus",
    "relative_entropy_eigen",
    "relative_entropy_frenkel",
    "relative_entropy_truncated",
    "operator_bounds",
    "conditional_entropy_cq",
    "projector",
    "bell_state",
    "werner_state",
    "dephased_state",
    "honest_statistics",
    "purified_cq_state",
    "binary_entropy",
]

LN2 = math.log(2.0)
KERNEL_RTOL = 1e-10
PSD_TOL = 1e-10


class NumericFailure(RuntimeError):
    """Quadrature did not reach the requested accuracy."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (error estimate {error_estimate:.3g})")
        self.error_estimate = error_estimate


def _as_hermitian(a, name: str = "operator", tol: float = 1e-9) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.conj().T), initial=0.0) > tol * scale:
        raise ValueError(f"{name} is not Hermitian")
    a = (a + a.conj().T) / 2
    return a.real if np.isrealobj(a) or np.allclose(a.imag, 0) else a


def _as_psd(a, name: str) -> np.ndarray:
    a = _as_hermitian(a, name)
    if a.size and np.linalg.eigvalsh(a).min() < -PSD_TOL:
        raise ValueError(f"{name} is not positive semidefinite")
    return a


def trace_plus(a) -> float:
    """Sum of the positive eigenvalues of a Hermitian matrix."""
    a = _as_hermitian(a, "A")
    if not a.size:
        return 0.0
    ev = np.linalg.eigvalsh(a)
    return float(ev[ev > 0].sum())


def _support(sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    ev, vec = np.linalg.eigh(sigma)
    cutoff = KERNEL_RTOL * max(ev.max(initial=0.0), 0.0)
    keep = ev > cutoff
    return ev[keep], vec[:, keep], vec[:, ~keep]


def _kernel_violation(rho: np.ndarray, sigma: np.ndarray) -> float:
    _, _, ker = _support(sigma)
    if ker.shape[1] == 0:
        return 0.0
    return float(np.real(np.trace(ker.conj().T @ rho @ ker)))


def _kernel_ok(rho: np.ndarray, sigma: np.ndarray) -> bool:
    return _kernel_violation(rho, sigma) <= KERNEL_RTOL * max(1.0, float(np.real(np.trace(rho))))


def relative_entropy_eigen(rho, sigma) -> float:
    """``tr[rho log rho - rho log sigma]`` in bits, ``inf`` if supp(rho) is
    not contained in supp(sigma)."""
    rho = _as_psd(rho, "rho")
    sigma = _as_psd(sigma, "sigma")
    if rho.shape != sigma.shape:
        raise ValueError("rho and sigma must have the same dimension")
    if not _kernel_ok(rho, sigma):
        return math.inf
    ev_r = np.linalg.eigvalsh(rho)
    ev_r = ev_r[ev_r > KERNEL_RTOL * max(ev_r.max(initial=0.0), 0.0)]
    first = float(np.sum(ev_r * np.log(ev_r)))
    ev_s, vec_s, _ = _support(sigma)
    diag = np.real(np.einsum("ij,jk,ki->i", vec_s.conj().T, rho, vec_s))
    second = float(np.sum(diag * np.log(ev_s)))
    return (first - second) / LN2


def _generalized_eigs(rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Eigenvalues of sigma^-1/2 rho sigma^-1/2 on supp(sigma)."""
    ev, vec, _ = _support(sigma)
    w = vec / np.sqrt(ev)
    return np.linalg.eigvalsh(w.conj().T @ rho @ w)


def operator_bounds(rho, sigma, slack: float = 1e-9) -> Tuple[float, float]:
    """``(mu, lam)`` with ``mu sigma <= rho <= lam sigma``."""
    rho = _as_psd(rho, "rho")
    sigma = _as_psd(sigma, "sigma")
    g = _generalized_eigs(rho, sigma)
    if not _kernel_ok(rho, sigma):
        raise ValueError("no finite lam: supp(rho) is not contained in supp(sigma)")
    mu = max(0.0, float(g.min()) - slack) if _support(sigma)[2].shape[1] == 0 else 0.0
    return mu, float(g.max()) + slack


def _quad(f, a, b, points, epsabs, what):
    pts = sorted(p for p in set(points) if a < p < b) if math.isfinite(a) and math.isfinite(b) else []
    edges = [a] + pts + [b]
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e, info = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=0.0, limit=200, full_output=1)[:3]
        if e > max(10 * epsabs, 1e-12) and not math.isclose(val, 0.0, abs_tol=epsabs):
            raise NumericFailure(f"quadrature for {what} on [{lo}, {hi}] did not converge", e)
        total += val
        err += e
    return total, err


def relative_entropy_frenkel(rho, sigma, epsabs: float = 1e-10) -> float:
    """Relative entropy (bits) from the integral over the negative part of
    the pencil ``(1 - t) rho + t sigma``, t on the whole real line."""
    rho = _as_psd(rho, "rho")
    sigma = _as_psd(sigma, "sigma")
    if not _kernel_ok(rho, sigma):
        return math.inf

    def integrand(t: float) -> float:
        ev = np.linalg.eigvalsh((1.0 - t) * rho + t * sigma)
        return float(-ev[ev < 0].sum()) / (abs(t) * (t - 1.0) ** 2)

    # kinks of the integrand sit where the pencil is singular: t = s / (s - 1)
    # for generalized eigenvalues s of (rho, sigma)
    kinks = [s / (s - 1.0) for s in _generalized_eigs(rho, sigma) if abs(s - 1.0) > 1e-12 and s > 0]
    neg = sorted(k for k in kinks if k < 0)
    pos = sorted(k for k in kinks if k > 1)
    total = 0.0
    left = (neg[0] - 1.0) if neg else -1.0
    right = (pos[-1] + 1.0) if pos else 2.0
    pieces = [
        (-math.inf, left, []),
        (left, 0.0, neg),
        (0.0, 1.0, []),
        (1.0, right, pos),
        (right, math.inf, []),
    ]
    for lo, hi, pts in pieces:
        val, _ = _quad(integrand, lo, hi, pts, epsabs, "Frenkel integral")
        total += val
    return (float(np.real(np.trace(rho - sigma))) + total) / LN2


def relative_entropy_truncated(rho, sigma, mu: float, lam: float, tol: float = 1e-9, epsabs: float = 1e-11) -> float:
    """Relative entropy (bits) from the integral over ``[mu, lam]`` plus the
    closed-form boundary terms; requires ``mu sigma <= rho <= lam sigma``."""
    rho = _as_psd(rho, "rho")
    sigma = _as_psd(sigma, "sigma")
    if mu < 0 or lam <= 0 or mu > lam:
        raise ValueError(f"need 0 <= mu <= lam, got mu={mu}, lam={lam}")
    lower = np.linalg.eigvalsh(rho - mu * sigma).min()
    if lower < -tol:
        raise ValueError(f"lower bound mu*sigma <= rho violated (min eigenvalue {lower:.3g})")
    upper = np.linalg.eigvalsh(lam * sigma - rho).min()
    if upper < -tol:
        raise ValueError(f"upper bound rho <= lam*sigma violated (min eigenvalue {upper:.3g})")

    def integrand(s: float) -> float:
        return trace_plus(s * sigma - rho) / s

    kinks = [float(g) for g in _generalized_eigs(rho, sigma)] if _support(sigma)[2].shape[1] == 0 else []
    lo = mu if mu > 0 else 0.0
    integral, _ = _quad(integrand, lo, lam, kinks, epsabs, "truncated integral")
    tr_rho = float(np.real(np.trace(rho)))
    tr_sigma = float(np.real(np.trace(sigma)))
    return (tr_rho - tr_sigma + integral + tr_rho * math.log(lam) - (lam - 1.0) * tr_sigma) / LN2


@dataclass
class CqState:
    """Classical-quantum state ``sum_a p_a |a><a| (x) rho_a``."""

    blocks: List[Tuple[float, np.ndarray]]

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("empty cq state")
        weights = np.array([w for w, _ in self.blocks], dtype=float)
        if weights.min() < -1e-12 or abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights must be a probability vector, got {weights}")
        dims = {np.asarray(r).shape for _, r in self.blocks}
        if len(dims) != 1:
            raise ValueError("all conditional states must share a dimension")
        for w, r in self.blocks:
            r = _as_psd(r, "conditional state")
            if w > 0 and abs(np.trace(r).real - 1.0) > 1e-9:
                raise ValueError("conditional states must have unit trace")

    @property
    def alphabet_size(self) -> int:
        return len(self.blocks)

    def joint(self) -> np.ndarray:
        """``rho_AE`` as a block-diagonal matrix."""
        from scipy.linalg import block_diag

        return block_diag(*[w * np.asarray(r) for w, r in self.blocks])

    def eve_marginal(self) -> np.ndarray:
        return sum(w * np.asarray(r) for w, r in self.blocks)

    def reference(self) -> np.ndarray:
        """``1_A (x) rho_E``."""
        return np.kron(np.eye(self.alphabet_size), self.eve_marginal())


def conditional_entropy_cq(state: CqState) -> float:
    """``H(A|E) = -D(rho_AE || 1_A (x) rho_E)`` in bits."""
    return -relative_entropy_eigen(state.joint(), state.reference())


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))


# ---------------------------------------------------------------------------
# honest two-qubit implementations

_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True)
class MeasurementAngleSet:
    """x-z plane measurement angles, one per input."""

    alice_angles: Tuple[float, ...]
    bob_angles: Tuple[float, ...]

    def __post_init__(self):
        two_pi = 2 * math.pi
        object.__setattr__(self, "alice_angles", tuple(float(a) % two_pi for a in self.alice_angles))
        object.__setattr__(self, "bob_angles", tuple(float(b) % two_pi for b in self.bob_angles))


def projector(angle: float) -> np.ndarray:
    """``(1 + sin(angle) X + cos(angle) Z) / 2``."""
    return 0.5 * (np.eye(2) + math.sin(angle) * _X + math.cos(angle) * _Z)


def bell_state() -> np.ndarray:
    phi = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2)
    return np.outer(phi, phi)


def werner_state(v: float) -> np.ndarray:
    """Visibility ``v`` mixture of the Bell state with white noise."""
    if not 0.0 <= v <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    return v * bell_state() + (1 - v) * np.eye(4) / 4


def dephased_state(q: float) -> np.ndarray:
    """Bell state with its coherences damped by ``1 - q``."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("dephasing must lie in [0, 1]")
    return (1 - q) * bell_state() + q * np.diag([0.5, 0.0, 0.0, 0.5])


def _state_from_spec(state_spec) -> np.ndarray:
    if isinstance(state_spec, np.ndarray):
        return _as_psd(state_spec, "state")
    if isinstance(state_spec, str):
        kind, value = state_spec, None
    else:
        kind, value = state_spec
    kind = kind.lower()
    if kind in ("phi+", "bell", "max-entangled"):
        return bell_state()
    if kind == "werner":
        return werner_state(float(value))
    if kind == "dephased":
        return dephased_state(float(value))
    raise ValueError(f"unknown state spec {state_spec!r}")


def honest_statistics(state_spec, angles: MeasurementAngleSet):
    """Born-rule table of a two-qubit model measured in the x-z plane.

    ``state_spec`` is ``"phi+"``, ``("werner", v)``, ``("dephased", q)`` or a
    4x4 density matrix.  Outcome 0 is the projector at the given angle.
    """
    from .scenario import Distribution, Scenario

    rho = _state_from_spec(state_spec)
    if rho.shape != (4, 4):
        raise ValueError(f"two-qubit state expected, got dimension {rho.shape[0]}")
    s = Scenario.uniform(len(angles.alice_angles), len(angles.bob_angles), 2, 2)
    table = np.zeros(s.shape)
    for x, alpha in enumerate(angles.alice_angles):
        pa = projector(alpha)
        for y, beta in enumerate(angles.bob_angles):
            pb = projector(beta)
            for a, ma in enumerate((pa, np.eye(2) - pa)):
                for b, mb in enumerate((pb, np.eye(2) - pb)):
                    table[a, b, x, y] = float(np.real(np.trace(rho @ np.kron(ma, mb))))
    table = np.clip(table, 0.0, None)
    table /= table.sum(axis=(0, 1), keepdims=True)
    return Distribution(s, table, meta={"state": str(state_spec)})


def purified_cq_state(rho_ab, alice_projectors: Sequence[np.ndarray], dims: Tuple[int, int] = (2, 2)) -> CqState:
    """cq state of Alice's outcome and Eve's purification of ``rho_ab``.

    Eve holds the purifying system only; Bob's system is traced out.
    """
    rho_ab = _as_psd(rho_ab, "rho_ab")
    da, db = dims
    ev, vec = np.linalg.eigh(rho_ab)
    keep = ev > 1e-14
    ev, vec = ev[keep], vec[:, keep]
    de = len(ev)
    # |psi> = sum_i sqrt(ev_i) |v_i>_AB |i>_E, reshaped to (A, B, E)
    psi = (vec * np.sqrt(ev)).reshape(da, db, de)
    blocks = []
    for m in alice_projectors:
        phi = np.einsum("ij,jbe->ibe", m, psi)
        rho_e = np.einsum("ibe,ibf->ef", phi, phi.conj())
        w = float(np.real(np.trace(rho_e)))
        blocks.append((w, rho_e / w if w > 0 else np.eye(de) / de))
    total = sum(w for w, _ in blocks)
    return CqState([(w / total, r) for w, r in blocks])
