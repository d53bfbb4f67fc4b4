"""Eigenvalue lattices and monomial products of principal eigenfunctions.

Every smooth eigenfunction of a semisimple, nonresonant sink is a finite
sum of products ``psi^[i] conj(psi)^[ell]`` of principal eigenfunctions;
around a limit cycle integer powers of the phase join in.  The functions
here enumerate which products carry a requested eigenvalue.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np
import scipy.linalg

from .multiindex import monomials_of_degree


class DefectiveLinearization(ValueError):
    """The linearization is not diagonalizable; the product classification does not apply."""


@dataclass(frozen=True)
class LatticeSolution:
    """One lattice point: ``m`` over ``lambda``, ``ell`` over ``conj(lambda)`` or a phase power ``j``."""

    m: tuple
    ell: tuple | None = None
    j: int | None = None
    defect: float = 0.0

    def to_line(self) -> str:
        parts = [" ".join(str(v) for v in self.m)]
        if self.ell is not None:
            parts.append(" ".join(str(v) for v in self.ell))
        if self.j is not None:
            parts.append(str(self.j))
        parts.append(f"{self.defect:.3e}")
        return "\t".join(parts)


class Solutions(list):
    """List of lattice solutions with explanatory notes."""

    def __init__(self, items=(), notes=()):
        super().__init__(items)
        self.notes = tuple(notes)

    def report(self) -> str:
        lines = [s.to_line() for s in self]
        lines += [f"# {n}" for n in self.notes]
        return "\n".join(lines) + ("\n" if lines else "")


def _exponents(lam) -> np.ndarray:
    return np.atleast_1d(np.asarray(lam, dtype=complex))


def _multi_indices(n: int, k: int, start: int = 1):
    for d in range(start, k + 1):
        yield from monomials_of_degree(n, d)


def _trivial(mu: complex, tol: float) -> bool:
    return abs(cmath.exp(mu) - 1.0) <= tol


def point_lattice(lam: Sequence[complex], mu: complex, k: int, tol: float = 1e-9) -> Solutions:
    """All ``m`` with ``1 <= |m| <= k`` and ``|e^mu - e^{m.lambda}| <= tol``."""
    lam = _exponents(lam)
    target = cmath.exp(mu)
    out = []
    for m in _multi_indices(lam.size, k):
        d = abs(target - cmath.exp(complex(np.dot(m, lam))))
        if d <= tol:
            out.append(LatticeSolution(tuple(m), defect=d))
    return Solutions(out)


def conjugate_partner(lam: np.ndarray, tol: float = 1e-9) -> np.ndarray | None:
    """Index ``sigma(j)`` with ``lambda_sigma(j) = conj(lambda_j)``, or ``None``
    when the list is not closed under conjugation."""
    lam = _exponents(lam)
    used = np.zeros(lam.size, dtype=bool)
    sigma = -np.ones(lam.size, dtype=int)
    for j in range(lam.size):
        if sigma[j] >= 0:
            continue
        cand = [q for q in range(lam.size) if not used[q] and abs(lam[q] - np.conj(lam[j])) <= tol * max(1.0, abs(lam[j]))]
        cand.sort(key=lambda q: (q != j, q))  # real values pair with themselves
        if not cand:
            return None
        q = cand[0]
        sigma[j], sigma[q] = q, j
        used[j] = used[q] = True
    return sigma


def check_semisimple(matrix, tol: float = 1e-6) -> None:
    """Raise :class:`DefectiveLinearization` when ``matrix`` lacks a full eigenbasis."""
    a = np.atleast_2d(np.asarray(matrix, dtype=complex))
    n = a.shape[0]
    w = scipy.linalg.eigvals(a)
    scale = max(1.0, float(np.max(np.abs(w))))
    done = np.zeros(n, dtype=bool)
    for i in range(n):
        if done[i]:
            continue
        close = np.abs(w - w[i]) <= tol * scale
        done |= close
        alg = int(close.sum())
        sv = np.linalg.svd(a - w[i] * np.eye(n), compute_uv=False)
        geo = int(np.sum(sv <= tol * scale))
        if geo < alg:
            raise DefectiveLinearization(
                f"eigenvalue {w[i]:.6g} has algebraic multiplicity {alg} but only {geo} eigenvectors; "
                "the product classification assumes a diagonalizable linearization")


def monomial_basis_for_mu(lam: Sequence[complex], mu: complex, k: int, tol: float = 1e-9, *,
                          matrix=None) -> Solutions:
    """Products ``psi^[i] conj(psi)^[ell]`` with ``1 <= |i| + |ell| <= k`` and
    ``|e^{i.lambda + ell.conj(lambda)} - e^mu| <= tol``.

    When ``lambda`` is closed under conjugation (a real system),
    ``conj(psi_j) = psi_sigma(j)`` and every product is reported in collapsed
    form with ``ell = 0``.  Constants (``e^mu = 1`` with ``i = ell = 0``) are
    excluded.

    Parameters
    ----------
    matrix : optional linearization; when given it must be diagonalizable.
    """
    if matrix is not None:
        check_semisimple(matrix)
    lam = _exponents(lam)
    n = lam.size
    notes = []
    if _trivial(mu, tol):
        notes.append("e^mu = 1: constants are eigenfunctions and are not listed")
    target = cmath.exp(mu)
    sigma = conjugate_partner(lam)
    out = []
    if sigma is not None:
        for i in _multi_indices(n, k):
            d = abs(target - cmath.exp(complex(np.dot(i, lam))))
            if d <= tol:
                out.append(LatticeSolution(tuple(i), tuple([0] * n), defect=d))
        notes.append("conjugate factors collapsed onto partner eigenvalues")
    else:
        for d_tot in range(1, k + 1):
            for a in range(d_tot + 1):
                for i in monomials_of_degree(n, a):
                    for ell in monomials_of_degree(n, d_tot - a):
                        e = complex(np.dot(i, lam) + np.dot(ell, np.conj(lam)))
                        d = abs(target - cmath.exp(e))
                        if d <= tol:
                            out.append(LatticeSolution(tuple(i), tuple(ell), defect=d))
    return Solutions(out, notes)


def cycle_monomials(lam: Sequence[complex], tau: float, mu: complex, k: int, j_range: int,
                    tol: float = 1e-9) -> Solutions:
    """Triples ``(ell, m_conj, j)`` with
    ``|mu - (ell.lambda + m_conj.conj(lambda) + 2 pi i j / tau)| <= tol``.

    Each triple indexes ``psi^[ell] conj(psi)^[m_conj] psi_theta^j``; conjugate
    factors are collapsed for real systems as in :func:`monomial_basis_for_mu`.
    The all-zero triple (constants) is excluded.
    """
    lam = _exponents(lam)
    n = lam.size
    omega = 2 * math.pi / tau
    sigma = conjugate_partner(lam)
    if sigma is not None:
        pairs = [(ell, (0,) * n) for ell in _multi_indices(n, k, start=0)]
    else:
        pairs = []
        for d_tot in range(0, k + 1):
            for a in range(d_tot + 1):
                for ell in monomials_of_degree(n, a):
                    for mc in monomials_of_degree(n, d_tot - a):
                        pairs.append((ell, mc))
    out = []
    for (ell, mc), j in product(pairs, range(-j_range, j_range + 1)):
        if sum(ell) + sum(mc) == 0 and j == 0:
            continue
        e = (complex(np.dot(ell, lam) + np.dot(mc, np.conj(lam))) if n else 0j) + 1j * omega * j
        d = abs(mu - e)
        if d <= tol:
            out.append(LatticeSolution(tuple(ell), tuple(mc), j, d))
    return Solutions(out)


def evaluate_monomial(values: np.ndarray, sol: LatticeSolution, phase: complex | None = None) -> complex:
    """``prod psi_j^{m_j} conj(psi_j)^{ell_j} [psi_theta^j]`` from principal values ``psi_j``."""
    v = np.asarray(values, dtype=complex)
    out = complex(np.prod(v ** np.asarray(sol.m)))
    if sol.ell is not None:
        out *= complex(np.prod(np.conj(v) ** np.asarray(sol.ell)))
    if sol.j is not None:
        if phase is None:
            raise ValueError("a phase value is needed for cycle monomials")
        out *= phase ** sol.j
    return out
