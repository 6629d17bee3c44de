"""Shared random instances for the test suite."""

import math

import numpy as np

from dientropy.grid import coefficients, dense_discretized_bound, make_grid
from dientropy.oracle import CqState


def random_density(rng, d, rank=None):
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_cq(rng, alphabet, eve_dim):
    p = rng.dirichlet(np.ones(alphabet))
    return CqState([(w, random_density(rng, eve_dim)) for w in p])


def discretized_relative_entropy(rho, sigma, spec):
    """Upper bound (bits) on D(rho||sigma) from the discretized integral."""
    c = coefficients(make_grid(spec))
    lam = c.lam
    tr_r, tr_s = np.trace(rho).real, np.trace(sigma).real
    integral = dense_discretized_bound(rho, sigma, c)
    return (tr_r - tr_s + integral + tr_r * math.log(lam) - (lam - 1) * tr_s) / math.log(2)


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


class OperatorModel:
    """Explicit operators on A (x) B (x) E realizing every generator.

    Measurements are random projective ones; Eve's generators with
    ``input = -1`` are independent random projectors, and those with
    ``input >= 0`` form a random projective measurement.
    """

    def __init__(self, rng, generators, dims=(2, 2, 2), state=None):
        self.dims = dims
        self.ops = {}
        eye = [np.eye(d) for d in dims]
        groups = {}
        for g in generators:
            groups.setdefault((int(g.group), g.input, g.node if g.input < 0 else None), []).append(g)
        for (party, inp, _), gens in groups.items():
            d = dims[party]
            if inp >= 0:
                u = random_unitary(rng, d)
                n_out = max(max(g.outcome) for g in gens) + 2
                cuts = np.array_split(np.arange(d), n_out)
                local = {}
                for g in gens:
                    cols = u[:, cuts[g.outcome[0]]]
                    local[g] = cols @ cols.conj().T
            else:
                local = {}
                for g in gens:
                    u = random_unitary(rng, d)
                    k = rng.integers(1, d)
                    local[g] = u[:, :k] @ u[:, :k].conj().T
            for g, op in local.items():
                parts = list(eye)
                parts[party] = op
                self.ops[g] = np.kron(np.kron(parts[0], parts[1]), parts[2])
        dim = int(np.prod(dims))
        if state is None:
            psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
            state = psi / np.linalg.norm(psi)
        self.psi = state

    def operator(self, word):
        out = np.eye(len(self.psi), dtype=complex)
        for g in word:
            out = out @ self.ops[g]
        return out

    def moment(self, word):
        return complex(self.psi.conj() @ self.operator(word) @ self.psi)

    def poly(self, poly):
        return sum(c * self.moment(w) for w, c in poly.items())
