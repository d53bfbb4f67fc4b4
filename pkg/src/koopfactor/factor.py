"""Order-by-order solution of the homological equations.

Given the Taylor data ``F`` of the time-one map at an attracting fixed point
``x0``, a linear model ``e^A`` and a covector block ``B`` with
``B DF = e^A B``, build the polynomial ``P`` of degree ``k`` with
``DP(x0) = B`` and ``P o F - e^A P = O(|x - x0|^(k+1))``.

Homogeneous parts are stored in the monomial basis.  At degree ``i`` the
unknown ``P_i`` (an ``m x N_i`` block) satisfies

    e^A P_i - P_i L_i^T = c_i,

where ``L_i`` is the matrix of ``x^a -> (F_1 x)^a`` on degree-``i``
monomials and ``c_i`` collects the degree-``i`` coefficients of
``P_{<i} o F``.  The operator ``T_i`` on the left has eigenvalues
``lambda^a - mu_p``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .jet import Jet, MapJet, monomial_values
from .multiindex import monomials_of_degree, table
from .spectral import SpectrumLike, as_spectrum, intertwining_residual

SINGULAR_RTOL = 1e-10


class ResonantObstruction(ArithmeticError):
    """``T_i`` is singular and the right-hand side leaves its range.

    Attributes
    ----------
    degree : offending degree ``i``.
    witness : ``(output index p, multi-index a, defect)`` of the largest
        unresolvable right-hand-side component.
    """

    def __init__(self, degree: int, witness: tuple):
        p, a, defect = witness
        super().__init__(f"resonant obstruction at degree {degree}: output {p + 1}, "
                         f"monomial {a}, defect {defect:.3g}")
        self.degree = degree
        self.witness = witness


class DegenerateSolvable(UserWarning):
    """``T_i`` is singular but the right-hand side lies in its range."""


class IntertwiningError(ValueError):
    """``B DF != e^A B`` within tolerance."""


@dataclass(frozen=True)
class HomogeneousPolyMap:
    """Degree-``i`` homogeneous map ``R^n -> C^m`` in the monomial basis.

    ``coeffs[p, r]`` multiplies the ``r``-th degree-``i`` monomial
    (``monomials_of_degree(n, i)`` order).
    """

    degree: int
    n: int
    coeffs: np.ndarray
    nonunique: bool = False
    min_singular: float = math.inf

    @property
    def m(self) -> int:
        return self.coeffs.shape[0]

    def monomials(self) -> list:
        return monomials_of_degree(self.n, self.degree)


def substitution_matrix(F1, degree: int) -> np.ndarray:
    """``L`` with ``(F1 x)^a = sum_b L[b, a] x^b`` over degree-``i`` monomials."""
    F1 = np.atleast_2d(np.asarray(F1))
    n = F1.shape[0]
    t = table(n, degree)
    inner = []
    for j in range(n):
        c = np.zeros(t.size, dtype=np.result_type(F1.dtype, float))
        c[1:1 + n] = F1[j]
        inner.append(Jet(c, n, degree))
    vals = monomial_values(inner, degree)
    blk = t.block(degree)
    return vals[blk, blk].T


def homological_matrix(degree: int, eA, F1, permutation: Sequence[int] | None = None) -> np.ndarray:
    """Dense ``T_i`` acting on row-major ``vec(P_i)``: ``vec(P L^T - e^A P)``.

    ``permutation`` reorders the degree-``i`` monomials (basis change used to
    test basis independence); the returned matrix acts on permuted vectors.
    """
    eA = np.atleast_2d(np.asarray(eA))
    L = substitution_matrix(F1, degree)
    if permutation is not None:
        perm = np.asarray(permutation)
        L = L[np.ix_(perm, perm)]
    m, N = eA.shape[0], L.shape[0]
    return np.kron(np.eye(m), L) - np.kron(eA, np.eye(N))


def homological_spectrum(degree: int, X_spec: SpectrumLike, Y_spec: SpectrumLike) -> list:
    """Eigenvalues ``lambda^a - mu_p`` of ``T_i`` over all degree-``i`` multisets ``a``."""
    if degree < 2:
        raise ValueError("degree must be at least 2")
    mu = as_spectrum(X_spec).array()
    lam = as_spectrum(Y_spec).array()
    exps = np.array(monomials_of_degree(lam.size, degree), dtype=np.int64).reshape(-1, lam.size)
    powers = np.prod(lam[None, :] ** exps, axis=1)
    return [complex(pw - mp) for mp in mu for pw in powers]


def solve_order(degree: int, rhs, eA, F1, *, permutation: Sequence[int] | None = None,
                range_rtol: float = 1e-8) -> HomogeneousPolyMap:
    """Solve ``e^A P_i - P_i L_i^T = rhs`` for the degree-``i`` block.

    Uses an SVD.  When ``T_i`` is numerically singular (smallest singular
    value below ``1e-10`` times the largest) the minimal-norm solution is
    returned with ``nonunique=True`` if the right-hand side is in range, and
    :class:`ResonantObstruction` is raised otherwise.
    """
    eA = np.atleast_2d(np.asarray(eA))
    F1 = np.atleast_2d(np.asarray(F1))
    n, m = F1.shape[0], eA.shape[0]
    C = np.asarray(rhs.coeffs if isinstance(rhs, HomogeneousPolyMap) else rhs)
    N = math.comb(n + degree - 1, degree)
    C = C.reshape(m, N)
    perm = np.arange(N) if permutation is None else np.asarray(permutation)
    T = homological_matrix(degree, eA, F1, perm)
    b = -C[:, perm].ravel()
    dt = np.result_type(T.dtype, b.dtype, float)
    T, b = T.astype(dt), b.astype(dt)
    U, s, Vh = np.linalg.svd(T)
    smax = s[0] if s.size else 0.0
    singular = s.size and s[-1] < SINGULAR_RTOL * smax
    if not singular:
        x = Vh.conj().T @ ((U.conj().T @ b) / s)
        nonunique = False
    else:
        keep = s >= SINGULAR_RTOL * smax
        x = Vh[keep].conj().T @ ((U[:, keep].conj().T @ b) / s[keep])
        r = b - T @ x
        scale = max(np.linalg.norm(b), smax * np.linalg.norm(x), 1e-300)
        if np.linalg.norm(r) > range_rtol * scale and np.linalg.norm(r) > 1e-14:
            j = int(np.argmax(np.abs(r)))
            p, col = divmod(j, N)
            a = monomials_of_degree(n, degree)[perm[col]]
            raise ResonantObstruction(degree, (p, a, float(np.abs(r[j]))))
        nonunique = True
        warnings.warn(f"degree {degree}: homological operator is singular but the "
                      f"right-hand side is in its range; returning the minimal-norm solution",
                      DegenerateSolvable, stacklevel=2)
    P = np.empty((m, N), dtype=dt)
    P[:, perm] = x.reshape(m, N)
    return HomogeneousPolyMap(degree, n, P, bool(nonunique), float(s[-1]) if s.size else math.inf)


# factors ---------------------------------------------------------------------

@dataclass
class PolynomialFactor:
    """Degree-``k`` polynomial ``P: R^n -> C^m`` about ``base`` with linear model.

    ``coeffs`` has shape ``(m, C(n+k, k))`` in graded-lex order of
    ``table(n, k)``; the constant column is zero.  ``eA`` is the linear model
    for the time-one map and ``A`` its generator (flows only).
    """

    coeffs: np.ndarray
    base: np.ndarray
    eA: np.ndarray
    k: int
    A: np.ndarray | None = None
    mode: str = "map"
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.base.size

    @property
    def m(self) -> int:
        return self.coeffs.shape[0]

    @property
    def B(self) -> np.ndarray:
        return self.coeffs[:, 1:1 + self.n]

    @property
    def nonunique_degrees(self) -> tuple:
        return tuple(self.diagnostics.get("nonunique", ()))

    def homogeneous(self, degree: int) -> HomogeneousPolyMap:
        return HomogeneousPolyMap(degree, self.n, self.coeffs[:, table(self.n, self.k).block(degree)])

    def coefficient(self, p: int, exps) -> complex:
        return complex(self.coeffs[p, table(self.n, self.k).rank(exps)])

    def jets(self) -> MapJet:
        return MapJet([Jet(row, self.n, self.k) for row in self.coeffs])

    def monomials(self, x) -> np.ndarray:
        """Values of every monomial of ``x - base``; shape ``(N,)`` or ``(N, K)``."""
        x = np.asarray(x)
        single = x.ndim == 1
        u = (x.reshape(self.n, -1) - self.base.reshape(-1, 1))
        t = table(self.n, self.k)
        vals = np.empty((t.size, u.shape[1]), dtype=u.dtype)
        vals[0] = 1.0
        for r in range(1, t.size):
            vals[r] = vals[t.parent[r]] * u[t.parent_var[r]]
        return vals[:, 0] if single else vals

    def __call__(self, x) -> np.ndarray:
        return self.coeffs @ self.monomials(x)

    def is_real(self) -> bool:
        return not np.iscomplexobj(self.coeffs) or not np.any(self.coeffs.imag)

    def conj(self) -> "PolynomialFactor":
        return PolynomialFactor(np.conj(self.coeffs), self.base, np.conj(self.eA), self.k,
                                None if self.A is None else np.conj(self.A), self.mode,
                                dict(self.diagnostics))

    def scaled(self, c) -> "PolynomialFactor":
        return PolynomialFactor(self.coeffs * c, self.base, self.eA, self.k, self.A, self.mode,
                                dict(self.diagnostics))

    # serialization -----------------------------------------------------------
    def to_text(self) -> str:
        return dump_factor(self)

    @classmethod
    def from_text(cls, text: str) -> "PolynomialFactor":
        return load_factor(text)


def _matrix_jet_product(E: np.ndarray, P: np.ndarray, n: int, k: int) -> np.ndarray:
    """Coefficients of ``E(x) P(x)`` for an ``m x m`` matrix of jets ``E``."""
    m = P.shape[0]
    out = np.zeros_like(P, dtype=np.result_type(E, P))
    for p in range(m):
        for q in range(m):
            if np.any(E[p, q]) and np.any(P[q]):
                out[p] += (Jet(E[p, q], n, k) * Jet(P[q], n, k)).c
    return out


def approximate_factor(F: MapJet, eA, B, *, multiplier: np.ndarray | None = None,
                       gate_tol: float = 1e-8, permutations: dict | None = None,
                       A=None, mode: str | None = None) -> PolynomialFactor:
    """Degree-``k`` approximate linearizing factor ``P`` with ``DP(x0) = B``.

    Parameters
    ----------
    F : order-``k`` jet of the time-one map about its fixed point.
    eA : (m, m) linear model.
    B : (m, n) covector block; must satisfy ``B F_1 = e^A B`` within
        ``gate_tol`` (relative to ``max(1, |B|)``).
    multiplier : optional ``(m, m, N)`` jet coefficients of a matrix
        ``E(x)`` with ``E(x0) = I``; the equation becomes
        ``P o F = e^A E P``.
    permutations : optional ``{degree: permutation}`` of the monomial basis
        used when solving that degree (results are basis independent).
    A : generator with ``expm(A) = eA`` (flows); stored for evaluation.
    """
    n, k = F.n, F.k
    x0 = F.constant().real.astype(float)
    eA = np.atleast_2d(np.asarray(eA))
    B = np.atleast_2d(np.asarray(B))
    m = eA.shape[0]
    if B.shape != (m, n):
        raise ValueError(f"B must have shape ({m}, {n}), got {B.shape}")
    F1 = F.linear_part()
    if np.isrealobj(F1) or not np.any(np.imag(F1)):
        F1 = np.real(F1)
    gate = intertwining_residual(B, F1, eA)
    if gate > gate_tol * max(1.0, float(np.max(np.abs(B)))):
        raise IntertwiningError(f"B DF - e^A B has residual {gate:.3g}")

    real = all(np.isrealobj(a) or not np.any(np.imag(a)) for a in (eA, B, F.coefficients()))
    if multiplier is not None:
        real = real and (np.isrealobj(multiplier) or not np.any(np.imag(multiplier)))
    dt = float if real else complex
    if real:
        eA, B = np.real(eA), np.real(B)
    Fs = [Jet(np.real(c.c) if real else c.c.astype(complex), n, k) for c in F]
    for j in Fs:
        j.c = j.c.copy()
        j.c[0] = 0.0
    V = monomial_values(Fs, k)  # row r: jet of (F - x0)^a_r
    t = table(n, k)
    E_minus_I = None
    if multiplier is not None:
        E_minus_I = np.array(multiplier, dtype=dt if real else complex)
        E_minus_I = np.real(E_minus_I) if real else E_minus_I
        E_minus_I[:, :, 0] -= np.eye(m)
        if np.max(np.abs(E_minus_I[:, :, 0])) > 1e-12:
            raise ValueError("multiplier must equal the identity at the base point")

    coeffs = np.zeros((m, t.size), dtype=dt)
    coeffs[:, 1:1 + n] = B
    nonunique, smins = [], {}
    for i in range(2, k + 1):
        blk = t.block(i)
        c = coeffs @ V[:, blk]
        if E_minus_I is not None:
            c = c - eA @ _matrix_jet_product(E_minus_I, coeffs, n, k)[:, blk]
        perm = None if permutations is None else permutations.get(i)
        sol = solve_order(i, c, eA, F1, permutation=perm)
        if sol.nonunique:
            nonunique.append(i)
        smins[i] = sol.min_singular
        coeffs[:, blk] = np.real(sol.coeffs) if real else sol.coeffs

    # order-by-order residual of P o F - e^A E P
    lhs = coeffs @ V
    rhs = eA @ coeffs
    if E_minus_I is not None:
        rhs = rhs + eA @ _matrix_jet_product(E_minus_I, coeffs, n, k)
    resid = {d: float(np.max(np.abs((lhs - rhs)[:, t.block(d)]), initial=0.0)) for d in range(1, k + 1)}
    diag = {"nonunique": nonunique, "min_singular": smins, "order_residuals": resid, "gate": gate}
    if mode is None:
        mode = "flow" if A is not None else "map"
    return PolynomialFactor(coeffs, x0, np.array(eA, dtype=dt), k,
                            None if A is None else np.asarray(A), mode, diag)


def sternberg_factor(F: MapJet, k: int | None = None, *, A=None, **kw) -> PolynomialFactor:
    """Factor with ``B = I`` and ``e^A = DF(x0)`` (or ``expm(A)`` if given)."""
    if k is not None and k != F.k:
        F = F.truncate(k)
    F1 = F.linear_part()
    F1 = np.real(F1) if not np.any(np.imag(F1)) else F1
    eA = F1 if A is None else scipy.linalg.expm(np.asarray(A))
    return approximate_factor(F, eA, np.eye(F.n), A=A, **kw)


# residual scaling ------------------------------------------------------------

@dataclass(frozen=True)
class ResidualScaling:
    slope: float
    radii: tuple
    residuals: tuple
    exact: bool


def sphere_points(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic unit vectors: shape ``(n, count)``."""
    if n == 1:
        return np.array([[1.0, -1.0]])
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.vstack([np.cos(th), np.sin(th)])
    g = np.random.default_rng(seed).standard_normal((n, count))
    return g / np.linalg.norm(g, axis=0)


def residual_order_check(P: PolynomialFactor, F_eval: Callable, radii: Sequence[float], *,
                         samples: int = 32, exact_floor: float = 1e-13) -> ResidualScaling:
    """Log-log slope of ``max |P(F(x)) - e^A P(x)|`` over spheres of each radius."""
    dirs = sphere_points(P.n, samples)
    res = []
    for h in radii:
        worst = 0.0
        for d in dirs.T:
            x = P.base + h * d
            r = P(np.asarray(F_eval(x))) - P.eA @ P(x)
            worst = max(worst, float(np.max(np.abs(r))))
        res.append(worst)
    res_arr = np.array(res)
    exact = bool(np.all(res_arr <= exact_floor))
    if exact:
        slope = math.nan
    else:
        slope = float(np.polyfit(np.log(radii), np.log(np.maximum(res_arr, 1e-300)), 1)[0])
    return ResidualScaling(slope, tuple(float(h) for h in radii), tuple(res), exact)


# serialization ---------------------------------------------------------------

def _g(v: float) -> str:
    return "%.17g" % v


def dump_factor(P: PolynomialFactor) -> str:
    lines = ["koopfactor-factor 1",
             f"n {P.n}", f"m {P.m}", f"k {P.k}", f"mode {P.mode}",
             "base " + " ".join(_g(v) for v in P.base)]
    eA = np.asarray(P.eA, dtype=complex)
    lines.append("eA " + " ".join(f"{_g(v.real)} {_g(v.imag)}" for v in eA.ravel()))
    if P.A is not None:
        A = np.asarray(P.A, dtype=complex)
        lines.append("A " + " ".join(f"{_g(v.real)} {_g(v.imag)}" for v in A.ravel()))
    if P.nonunique_degrees:
        lines.append("nonunique " + " ".join(str(d) for d in P.nonunique_degrees))
    t = table(P.n, P.k)
    C = np.asarray(P.coeffs, dtype=complex)
    for p in range(P.m):
        for r in range(1, t.size):
            a = " ".join(str(int(e)) for e in t.exps[r])
            lines.append(f"coeff {p} {a} {_g(C[p, r].real)} {_g(C[p, r].imag)}")
    return "\n".join(lines) + "\n"


def _complex_matrix(vals: list[str], m: int) -> np.ndarray:
    v = np.array([float(s) for s in vals])
    return (v[0::2] + 1j * v[1::2]).reshape(m, m)


def load_factor(text: str) -> PolynomialFactor:
    head, coeff_lines = {}, []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "coeff":
            coeff_lines.append(parts[1:])
        else:
            head[parts[0]] = parts[1:]
    if "koopfactor-factor" not in head:
        raise ValueError("not a serialized factor")
    n, m, k = int(head["n"][0]), int(head["m"][0]), int(head["k"][0])
    base = np.array([float(s) for s in head["base"]]) if n else np.zeros(0)
    eA = _complex_matrix(head["eA"], m)
    A = _complex_matrix(head["A"], m) if "A" in head else None
    t = table(n, k)
    C = np.zeros((m, t.size), dtype=complex)
    for parts in coeff_lines:
        p = int(parts[0])
        a = tuple(int(s) for s in parts[1:1 + n])
        C[p, t.rank(a)] = complex(float(parts[1 + n]), float(parts[2 + n]))
    real = not np.any(C.imag) and not np.any(eA.imag) and (A is None or not np.any(A.imag))
    if real:
        C, eA = C.real.copy(), eA.real.copy()
        A = None if A is None else A.real.copy()
    diag = {"nonunique": [int(s) for s in head.get("nonunique", [])]}
    return PolynomialFactor(C, base, eA, k, A, head["mode"][0], diag)
