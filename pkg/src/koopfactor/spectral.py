"""Eigenvalues, nonresonance, spectral spread and seed covectors.

The "target" spectrum ``X`` belongs to the linear model ``e^A`` and the
"source" spectrum ``Y`` to the linearization of the time-one map at the
attractor.  A multi-index ``m`` over ``Y`` is resonant for target ``mu_i``
when ``mu_i == prod_j lambda_j ** m_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .multiindex import monomials_of_degree

INF = math.inf
_MAX_ENUMERATION = 5_000_000


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues repeated with algebraic multiplicity."""

    values: tuple
    source_dim: int

    def __post_init__(self):
        if len(self.values) != self.source_dim:
            raise ValueError("spectrum length must equal the source dimension")

    def __len__(self):
        return self.source_dim

    def __iter__(self):
        return iter(self.values)

    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=complex)

    @property
    def radius(self) -> float:
        return float(np.max(np.abs(self.array()))) if self.source_dim else 0.0

    def multiplicities(self, rtol: float = 1e-8) -> list[tuple[complex, int]]:
        """Cluster eigenvalues within relative distance ``rtol``."""
        groups: list[list[complex]] = []
        for v in self.values:
            for g in groups:
                if abs(v - g[0]) <= rtol * max(1.0, abs(g[0])):
                    g.append(v)
                    break
            else:
                groups.append([v])
        return [(complex(np.mean(g)), len(g)) for g in groups]


SpectrumLike = Union[Spectrum, Sequence[complex], np.ndarray]


def as_spectrum(s: SpectrumLike) -> Spectrum:
    if isinstance(s, Spectrum):
        return s
    vals = np.atleast_1d(np.asarray(s, dtype=complex))
    return Spectrum(tuple(complex(v) for v in vals), vals.size)


def compute_spectrum(matrix) -> Spectrum:
    """All eigenvalues of a square matrix, sorted by descending modulus."""
    a = np.atleast_2d(np.asarray(matrix))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    try:
        w = scipy.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigensolver did not converge: {exc}") from exc
    order = np.lexsort((-w.imag, -np.abs(w)))
    return Spectrum(tuple(complex(v) for v in w[order]), a.shape[0])


# nonresonance --------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    target_index: int
    m: tuple
    defect: float


@dataclass(frozen=True)
class ResonanceReport:
    """Outcome of a k-nonresonance check.

    ``nonresonant_up_to`` is the requested order when no witness was found,
    otherwise the largest order below the lowest-degree witness.
    ``checked_up_to`` is the largest degree actually enumerated (finite even
    for ``k = INF``).
    """

    nonresonant_up_to: float
    witnesses: tuple
    tolerance: tuple
    requested: float
    checked_up_to: int

    @property
    def nonresonant(self) -> bool:
        return not self.witnesses


def _tolerances(mu: np.ndarray, tol) -> np.ndarray:
    if tol is None:
        return 1e-9 * np.maximum(1.0, np.abs(mu))
    t = np.broadcast_to(np.asarray(tol, dtype=float), mu.shape).copy()
    if np.any(t <= 0):
        raise ValueError("tolerance must be positive")
    return t


def infinite_order_bound(mu: np.ndarray, lam: np.ndarray, tol: np.ndarray) -> int:
    """Degree beyond which ``|lambda^m| < |mu_i| - tol_i`` for every target."""
    rho = float(np.max(np.abs(lam))) if lam.size else 0.0
    if rho >= 1:
        raise ValueError("infinite-order check needs every |lambda| < 1")
    floor = np.abs(mu) - tol
    if np.any(floor <= 0):
        raise ValueError("a target eigenvalue lies within tolerance of zero; "
                         "infinitely many resonances cannot be excluded")
    if rho == 0:
        return 2
    return max(2, int(np.max(np.ceil(np.log(floor) / math.log(rho)))) + 1)


def check_k_nonresonant(X_spec: SpectrumLike, Y_spec: SpectrumLike, k, tol=None) -> ResonanceReport:
    """Find every ``(i, m)`` with ``2 <= |m| <= k`` and ``|mu_i - lambda^m| <= tol_i``.

    Parameters
    ----------
    X_spec, Y_spec : target and source spectra.
    k : integer order, or ``INF`` (``math.inf``) for all orders.
    tol : absolute tolerance (scalar or per target); default
        ``1e-9 * max(1, |mu_i|)``.
    """
    mu = as_spectrum(X_spec).array()
    lam = as_spectrum(Y_spec).array()
    tols = _tolerances(mu, tol)
    infinite = k == INF or (isinstance(k, str) and k.lower() in ("inf", "infinity"))
    if infinite:
        kmax = infinite_order_bound(mu, lam, tols)
        requested = INF
    else:
        kmax = int(k)
        if kmax < 1:
            raise ValueError("k must be at least 1")
        requested = kmax
    n = lam.size
    total = sum(math.comb(n + d - 1, d) for d in range(2, kmax + 1)) if n else 0
    if total > _MAX_ENUMERATION:
        raise ValueError(f"enumeration of {total} multi-indices exceeds the limit")

    witnesses = []
    for d in range(2, kmax + 1):
        exps = np.array(monomials_of_degree(n, d), dtype=np.int64).reshape(-1, n)
        if exps.size == 0:
            continue
        powers = np.prod(lam[None, :] ** exps, axis=1)
        defect = np.abs(mu[:, None] - powers[None, :])
        hit_i, hit_m = np.nonzero(defect <= tols[:, None])
        for i, r in zip(hit_i, hit_m):
            witnesses.append(Witness(int(i), tuple(int(v) for v in exps[r]), float(defect[i, r])))
    witnesses.sort(key=lambda w: (sum(w.m), w.target_index, tuple(-v for v in w.m)))
    up_to = requested if not witnesses else sum(witnesses[0].m) - 1
    return ResonanceReport(up_to, tuple(witnesses), tuple(float(t) for t in tols), requested, kmax)


# spectral spread -----------------------------------------------------------

@dataclass(frozen=True)
class SpreadResult:
    value: float
    attained_by: tuple  # (mu index, lambda index)


def spectral_spread(X_spec: SpectrumLike, Y_spec: SpectrumLike) -> SpreadResult:
    """``max_{i,j} ln|mu_i| / ln|lambda_j|`` and the pair attaining it."""
    mu = as_spectrum(X_spec).array()
    lam = as_spectrum(Y_spec).array()
    if np.any(np.abs(lam) >= 1):
        raise ValueError("spectral spread needs every |lambda| < 1")
    if np.any(mu == 0):
        raise ValueError("spectral spread needs every mu != 0")
    with np.errstate(divide="ignore"):
        ratio = np.log(np.abs(mu))[:, None] / np.log(np.abs(lam))[None, :]
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return SpreadResult(float(ratio[i, j]), (int(i), int(j)))


@dataclass(frozen=True)
class HypothesisReport:
    """Verdict on nonresonance and spread for a regularity budget ``k + alpha``.

    ``zone`` is ``"strict"`` when the spread is below ``k + alpha``,
    ``"boundary"`` when equal within ``zone_tol``, ``"violated"`` above.
    """

    k: float
    alpha: float
    resonance: ResonanceReport
    spread: SpreadResult
    zone: str
    uniqueness: bool
    existence: bool
    notes: tuple = field(default=())


def check_hypotheses(X_spec: SpectrumLike, Y_spec: SpectrumLike, k, alpha: float = 0.0,
                     tol=None, zone_tol: float = 1e-9) -> HypothesisReport:
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    res = check_k_nonresonant(X_spec, Y_spec, k, tol)
    spread = spectral_spread(X_spec, Y_spec)
    budget = (INF if res.requested == INF else res.requested + alpha)
    nu = spread.value
    if budget == INF or nu < budget - zone_tol:
        zone = "strict"
    elif nu <= budget + zone_tol:
        zone = "boundary"
    else:
        zone = "violated"
    nonres = res.nonresonant
    uniqueness = nonres and (zone == "strict" or nu <= res.requested + zone_tol)
    existence = nonres and zone == "strict"
    notes = []
    if zone == "boundary":
        notes.append("spread equals k + alpha: existence is not covered")
    if not nonres:
        w = res.witnesses[0]
        notes.append(f"resonance mu_{w.target_index + 1} = lambda^{w.m}")
    return HypothesisReport(res.requested, alpha, res, spread, zone, uniqueness, existence, tuple(notes))


# seed covectors ------------------------------------------------------------

@dataclass(frozen=True)
class SeedCovector:
    w: np.ndarray
    eigenvalue: complex
    residual: float


def normalize_covector(w: np.ndarray) -> np.ndarray:
    """Unit 2-norm with the first largest-modulus entry real and positive."""
    w = np.asarray(w, dtype=complex)
    w = w / np.linalg.norm(w)
    mag = np.abs(w)
    j = int(np.nonzero(mag >= (1 - 1e-9) * mag.max())[0][0])
    return w * (abs(w[j]) / w[j])


def seed_covector(Y, target: complex, tol: float | None = None) -> SeedCovector:
    """Deterministic unit left eigenvector ``w`` with ``w Y = target w``.

    Within a multidimensional left eigenspace the projection of the first
    coordinate covector with a nonzero component is used.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    tol = 1e-8 * max(1.0, abs(target)) if tol is None else tol
    eig = scipy.linalg.eigvals(Y)
    dist = np.abs(eig - target)
    if dist.min() > tol:
        raise ValueError(f"{target} is not an eigenvalue within {tol:g} (nearest {eig[np.argmin(dist)]})")
    near = eig[np.argmin(dist)]
    n = Y.shape[0]
    # left null space of Y - near I, i.e. right null space of its transpose
    _, s, vh = np.linalg.svd(Y.T - near * np.eye(n))
    thresh = max(1e-10 * max(1.0, s[0]), s[-1])
    basis = vh[s <= thresh * (1 + 1e-12)].conj().T
    if basis.shape[1] == 0:
        raise ValueError("no left eigenvector found")
    proj = basis @ basis.conj().T
    for j in range(n):
        cand = proj[:, j]
        if np.linalg.norm(cand) > 1e-6:
            w = normalize_covector(cand)
            break
    resid = float(np.linalg.norm(w @ Y - target * w))
    if resid > tol:
        raise ValueError(f"left eigenvector residual {resid:.3g} exceeds tolerance {tol:g}")
    return SeedCovector(w, complex(target), resid)


def intertwining_residual(B, Y, eA) -> float:
    """Max-abs entry of ``B Y - e^A B``."""
    B = np.atleast_2d(np.asarray(B))
    Y = np.atleast_2d(np.asarray(Y))
    eA = np.atleast_2d(np.asarray(eA))
    if B.shape[1] != Y.shape[0] or Y.shape[0] != Y.shape[1] or eA.shape != (B.shape[0], B.shape[0]):
        raise ValueError(f"incompatible shapes B{B.shape}, Y{Y.shape}, eA{eA.shape}")
    return float(np.max(np.abs(B @ Y - eA @ B)))
