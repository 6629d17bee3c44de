"""Primal-dual interior-point method for moment-matrix SDPs.

Solves ``min c.x`` s.t. ``F(x) - F0`` PSD, ``G x >= h``, ``A x = b`` where
``F(x) = sum_i x_i F_i`` and every ``F_i`` is a sparse symmetric matrix, with
the HKM search direction and Mehrotra predictor-corrector steps.  The Schur
complement ``M_ij = <F_i, X F_j Z^-1>`` is assembled from rank-k outer
products over the support of each ``F_j``, which costs ``O(m^4)`` for an
``m x m`` moment matrix instead of the ``O(m^6)`` of a dense cone scaling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

__all__ = ["IPMResult", "ipm_solve"]

log = logging.getLogger(__name__)


@dataclass
class IPMResult:
    status: str  # optimal, near_optimal, infeasible, unbounded, solver_error
    x: Optional[np.ndarray]
    primal: float
    dual: float
    iterations: int
    message: str = ""


class _Block:
    """Full (both triangles) entry list of the PSD block, grouped for the
    Schur complement."""

    def __init__(self, m, var, row, col, val, n):
        off = row != col
        self.m = m
        self.n = n
        self.var = np.concatenate([var, var[off]])
        self.row = np.concatenate([row, col[off]])
        self.col = np.concatenate([col, row[off]])
        self.val = np.concatenate([val, val[off]]).astype(float)
        self.flat = self.row * m + self.col
        self.flat_t = self.col * m + self.row
        order = np.argsort(self.var, kind="stable")
        counts = np.bincount(self.var, minlength=n)
        starts = np.concatenate(([0], np.cumsum(counts)))
        self.groups = []
        for k in np.unique(counts[counts > 0]):
            js = np.nonzero(counts == k)[0]
            idx = order[starts[js][:, None] + np.arange(k)[None, :]]  # (g, k)
            self.groups.append((js, idx))
        # aggregation of per-entry values into variables, with entry weights
        self.agg = sp.csr_matrix((self.val, (self.var, self.flat_t)), shape=(n, m * m))
        self.norms = np.sqrt(np.bincount(self.var, weights=self.val**2, minlength=n))

    def op(self, x: np.ndarray) -> np.ndarray:
        return np.bincount(self.flat, weights=self.val * x[self.var], minlength=self.m * self.m).reshape(self.m, self.m)

    def adj(self, S: np.ndarray) -> np.ndarray:
        return np.bincount(self.var, weights=self.val * S.ravel()[self.flat], minlength=self.n)

    def schur(self, X: np.ndarray, Zi: np.ndarray, chunk: int = 256) -> np.ndarray:
        m, n = self.m, self.n
        M = np.zeros((n, n))
        for js, idx in self.groups:
            for s in range(0, len(js), chunk):
                jj = js[s : s + chunk]
                ii = idx[s : s + chunk]
                # Y_j = X F_j Zi = sum_e val_e X[:, row_e] Zi[col_e, :]
                left = X[:, self.row[ii]].transpose(1, 0, 2)  # (g, m, k)
                right = Zi[self.col[ii]] * self.val[ii][..., None]  # (g, k, m)
                Y = np.matmul(left, right).reshape(len(jj), m * m)
                # M_ij = sum_e val_e Y_j[col_e, row_e]
                M[:, jj] = self.agg @ Y.T
        return 0.5 * (M + M.T)


def _max_step(S: np.ndarray, dS: np.ndarray) -> float:
    try:
        L = la.cholesky(S, lower=True)
    except la.LinAlgError:
        return 0.0
    T = la.solve_triangular(L, dS, lower=True)
    T = la.solve_triangular(L, T.T, lower=True)
    lam = la.eigvalsh(0.5 * (T + T.T))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(s: np.ndarray, ds: np.ndarray) -> float:
    neg = ds < 0
    return float(np.min(-s[neg] / ds[neg])) if np.any(neg) else math.inf


def _inv_psd(S: np.ndarray) -> np.ndarray:
    c = la.cho_factor(S, lower=True)
    Si = la.cho_solve(c, np.eye(len(S)))
    return 0.5 * (Si + Si.T)


def ipm_solve(
    c: np.ndarray,
    block: tuple,
    F0: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
    near_tol: Optional[float] = None,
    var_bound: Optional[float] = None,
    loose_tol: float = 1e-3,
) -> IPMResult:
    """``block = (m, var, row, col, val)`` with ``row <= col`` entries.

    Stops with ``optimal`` once relative primal/dual infeasibility and gap
    are below ``tol``.  When progress stalls (late-stage loss of precision)
    the best iterate is returned as ``near_optimal`` if its worst measure is
    below ``near_tol``.

    With ``var_bound`` (every feasible ``|x_i| <= var_bound``, as for moments
    of products of projectors) the reported dual value is
    ``dobj - var_bound * |r_d|_1``, a valid lower bound on the optimum even
    for a slightly dual-infeasible iterate.  If the run then fails (e.g. a
    constraint on the boundary of the feasible set leaves no interior), the
    largest such certified value whose gap is below ``loose_tol`` is returned
    as ``near_optimal``.
    """
    near_tol = max(1e-5, 100 * tol) if near_tol is None else near_tol
    n = len(c)
    m = block[0]
    blk = _Block(m, *block[1:], n=n)
    G = np.asarray(G, dtype=float).reshape(-1, n)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    nl, p = G.shape[0], A.shape[0]

    scale_c = max(1.0, float(np.max(np.abs(c))) if n else 1.0)
    xi = max(10.0, math.sqrt(m), float(np.max((1 + np.abs(c)) / (1 + blk.norms))) * math.sqrt(m))
    eta = max(10.0, math.sqrt(m), float(np.max(blk.norms)), float(np.linalg.norm(F0)))
    x = np.zeros(n)
    X = xi * np.eye(m)
    Z = eta * np.eye(m)
    u = np.full(nl, xi)
    s = np.full(nl, eta)
    w = np.zeros(p)
    nu = m + nl
    norm_b = 1 + max(np.linalg.norm(F0), np.linalg.norm(h), np.linalg.norm(b))
    norm_c = 1 + np.linalg.norm(c)

    best = fallback = None
    best_merit = math.inf
    since_best = 0
    stalled = 0
    status, msg = "solver_error", "iteration limit"
    for it in range(1, max_iter + 1):
        Fx = blk.op(x)
        Rp = Fx - F0 - Z
        rs = G @ x - h - s
        re = A @ x - b
        rd = c - blk.adj(X) - G.T @ u - A.T @ w
        pobj = float(c @ x)
        dobj = float(np.sum(F0 * X) + h @ u + b @ w)
        mu = (np.sum(X * Z) + u @ s) / nu
        pinf = max(np.linalg.norm(Rp), np.linalg.norm(rs), np.linalg.norm(re)) / norm_b
        dinf = np.linalg.norm(rd) / norm_c
        cert = dobj - var_bound * float(np.abs(rd).sum()) if var_bound is not None else dobj
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        log.debug("%3d pobj=%.9e dobj=%.9e mu=%.2e pinf=%.2e dinf=%.2e", it, pobj, dobj, mu, pinf, dinf)
        if max(pinf, dinf, gap) < tol:
            return IPMResult("optimal", x, pobj, cert, it)
        if var_bound is not None:
            merit = max(pinf, abs(pobj - cert) / (1 + abs(pobj) + abs(cert)))
            if merit < loose_tol and (fallback is None or cert > fallback.dual):
                fallback = IPMResult("near_optimal", x.copy(), pobj, cert, it, f"certified dual, gap {merit:.1e}")
        else:
            merit = max(pinf, dinf, gap)
        if merit < best_merit:
            best_merit, since_best = merit, 0
            if merit < near_tol:
                best = IPMResult("near_optimal", x.copy(), pobj, cert, it, f"stalled at {merit:.1e}")
        else:
            since_best += 1
            if best is not None and since_best >= 5:
                break
        # infeasibility certificates from diverging iterates
        ynorm = np.linalg.norm(X) + np.linalg.norm(u) + np.linalg.norm(w)
        if ynorm > 1e8 * scale_c and dobj > 0:
            ray = np.linalg.norm(blk.adj(X) + G.T @ u + A.T @ w) / ynorm
            if ray < 1e-6 and dobj / ynorm > 1e-9:
                return IPMResult("infeasible", None, pobj, dobj, it, "dual ray certifies primal infeasibility")
        xnorm = np.linalg.norm(x) + np.linalg.norm(Z)
        if xnorm > 1e8 * norm_b and pobj < 0:
            return IPMResult("unbounded", None, pobj, dobj, it, "primal ray")

        try:
            Zi = _inv_psd(Z)
        except la.LinAlgError:
            status, msg = "solver_error", "lost positive definiteness"
            break
        H = blk.schur(X, Zi)
        D = u / s if nl else np.zeros(0)
        if nl:
            H += G.T @ (D[:, None] * G)
        H += 1e-14 * np.trace(H) / max(n, 1) * np.eye(n)
        try:
            Hc = la.cho_factor(H, lower=True)
        except la.LinAlgError:
            try:
                Hc = la.cho_factor(H + 1e-10 * np.trace(H) / n * np.eye(n), lower=True)
            except la.LinAlgError:
                status, msg = "solver_error", "Schur complement not positive definite"
                break
        HiAt = la.cho_solve(Hc, A.T) if p else np.zeros((n, 0))
        S_eq = A @ HiAt if p else np.zeros((0, 0))
        if p:
            S_eq += 1e-14 * max(1.0, np.trace(S_eq)) * np.eye(p)
            Sc = la.cho_factor(S_eq, lower=True)

        def apply_h(v):
            out = blk.adj(X @ blk.op(v) @ Zi)
            if nl:
                out = out + G.T @ (D * (G @ v))
            return out

        def solve_kkt(r1, r2):
            Hr = la.cho_solve(Hc, r1)
            if not p:
                return Hr, np.zeros(0)
            dw = la.cho_solve(Sc, r2 - A @ Hr)
            return Hr + HiAt @ dw, dw

        XRpZi = X @ Rp @ Zi
        XRpZi = 0.5 * (XRpZi + XRpZi.T)
        Drs = D * rs if nl else np.zeros(0)

        def direction(sigma_mu, corr_X=None, corr_l=None):
            T1 = sigma_mu * Zi - X
            if corr_X is not None:
                T1 = T1 - corr_X
            T1 = 0.5 * (T1 + T1.T)
            T2 = sigma_mu / s - u if nl else np.zeros(0)
            if corr_l is not None:
                T2 = T2 - corr_l
            r1 = blk.adj(T1 - XRpZi) + (G.T @ (T2 - Drs) if nl else 0.0) - rd
            dx, dw = solve_kkt(r1, -re)
            for _ in range(2):
                # refine against the exact operator; the assembled Schur
                # complement loses accuracy as X Z^-1 becomes ill-conditioned
                e1 = r1 - apply_h(dx) + (A.T @ dw if p else 0.0)
                e2 = -re - (A @ dx if p else 0.0)
                if np.linalg.norm(e1) <= 1e-15 * (1 + np.linalg.norm(r1)):
                    break
                cx, cw = solve_kkt(e1, e2)
                dx, dw = dx + cx, dw + cw
            dZ = blk.op(dx) + Rp
            dX = T1 - X @ dZ @ Zi
            dX = 0.5 * (dX + dX.T)
            ds = G @ dx + rs if nl else np.zeros(0)
            du = T2 - D * ds if nl else np.zeros(0)
            return dx, dX, dZ, ds, du, dw

        dx, dX, dZ, ds, du, dw = direction(0.0)
        ap = min(1.0, _max_step(Z, dZ), _max_step_lp(s, ds))
        ad = min(1.0, _max_step(X, dX), _max_step_lp(u, du))
        mu_aff = (np.sum((X + ad * dX) * (Z + ap * dZ)) + (u + ad * du) @ (s + ap * ds)) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        corr_X = 0.5 * (dX @ dZ @ Zi + (dX @ dZ @ Zi).T)
        corr_l = du * ds / s if nl else None
        dx, dX, dZ, ds, du, dw = direction(sigma * mu, corr_X, corr_l)
        gamma = 0.9 if it < 5 else 0.98
        ap = min(1.0, gamma * _max_step(Z, dZ), gamma * _max_step_lp(s, ds) if nl else math.inf)
        ad = min(1.0, gamma * _max_step(X, dX), gamma * _max_step_lp(u, du) if nl else math.inf)
        stalled = stalled + 1 if min(ap, ad) < 1e-6 else 0
        if stalled >= 3:
            status, msg = "solver_error", "step length collapsed"
            break
        x = x + ap * dx
        Z = Z + ap * dZ
        s = s + ap * ds
        X = X + ad * dX
        u = u + ad * du
        w = w + ad * dw
        X = 0.5 * (X + X.T)
        Z = 0.5 * (Z + Z.T)
    if best is not None:
        return best
    if fallback is not None:
        return fallback
    return IPMResult(status, None, float(c @ x), float("nan"), max_iter, msg)
