"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` is the order-``k`` Taylor expansion of a scalar function of
``n`` variables about some base point, stored densely in graded-lex order
(see :mod:`koopfactor.multiindex`).  Arithmetic on jets reproduces the Taylor
coefficients of the combined function, so evaluating a vector-field program
on seed jets yields its derivatives without symbolic or finite differences.
"""

from __future__ import annotations

import cmath
import math
from typing import Sequence

import numpy as np

from . import _backend
from .multiindex import MultiIndexTable, table


class JetDomainError(ArithmeticError):
    """Jet operation outside the domain of the function (log(0), 1/0, ...)."""


def _common_dtype(*arrays):
    return np.result_type(*[a.dtype for a in arrays], np.float64)


def _mul_coeffs(a: np.ndarray, b: np.ndarray, t: MultiIndexTable) -> np.ndarray:
    dt = _common_dtype(a, b)
    a = np.ascontiguousarray(a, dtype=dt)
    b = np.ascontiguousarray(b, dtype=dt)
    out = np.empty(t.size, dtype=dt)
    _backend.mul_into(a, b, t.mul_a, t.mul_b, t.mul_c, out)
    return out


class Jet:
    """Order-``k`` truncated Taylor polynomial in ``n`` variables."""

    __slots__ = ("c", "n", "k")
    __array_ufunc__ = None  # let numpy scalars defer to the reflected operators

    def __init__(self, coeffs, n: int, k: int):
        c = np.asarray(coeffs)
        if c.dtype.kind not in "fc":
            c = c.astype(np.float64)
        t = table(n, k)
        if c.shape != (t.size,):
            raise ValueError(f"jet of (n={n}, k={k}) needs {t.size} coefficients, got {c.shape}")
        self.c = c
        self.n = n
        self.k = k

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, value, n: int, k: int) -> "Jet":
        dt = np.complex128 if isinstance(value, complex) or np.iscomplexobj(value) else np.float64
        c = np.zeros(table(n, k).size, dtype=dt)
        c[0] = value
        return cls(c, n, k)

    @classmethod
    def variable(cls, i: int, value, n: int, k: int) -> "Jet":
        """Seed jet ``value + (x_i - x0_i)``."""
        j = cls.constant(value, n, k)
        if k >= 1:
            j.c[1 + i] = 1.0
        return j

    @property
    def table(self) -> MultiIndexTable:
        return table(self.n, self.k)

    @property
    def const(self):
        return self.c[0].item()

    def coefficient(self, exps) -> complex | float:
        return self.c[self.table.rank(exps)].item()

    def degree_part(self, d: int) -> np.ndarray:
        return self.c[self.table.block(d)]

    def truncate(self, k: int) -> "Jet":
        if k > self.k:
            raise ValueError("cannot raise the truncation order")
        return Jet(self.c[: table(self.n, k).size].copy(), self.n, k)

    def copy(self) -> "Jet":
        return Jet(self.c.copy(), self.n, self.k)

    def conj(self) -> "Jet":
        return Jet(np.conj(self.c), self.n, self.k)

    def __repr__(self) -> str:
        return f"Jet(n={self.n}, k={self.k}, c={self.c!r})"

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.n != self.n:
                raise ValueError("jets over different numbers of variables")
            k = min(self.k, other.k)
            a = self if self.k == k else self.truncate(k)
            b = other if other.k == k else other.truncate(k)
            return a, b
        return None, None

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return Jet(a.c + b.c, a.n, a.k)
        c = self.c.astype(np.result_type(self.c, np.asarray(other)), copy=True)
        c[0] += other
        return Jet(c, self.n, self.k)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.n, self.k)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return Jet(a.c - b.c, a.n, a.k)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self._coerce(other)
            return Jet(_mul_coeffs(a.c, b.c, a.table), a.n, a.k)
        return Jet(self.c * other, self.n, self.k)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if other == 0:
            raise JetDomainError("division by zero")
        return Jet(self.c / other, self.n, self.k)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, e):
        if isinstance(e, float) and e.is_integer():
            e = int(e)
        if not isinstance(e, (int, np.integer)):
            raise TypeError("jets support integer powers only")
        e = int(e)
        if e == 0:
            return Jet.constant(1.0, self.n, self.k)
        base = self if e > 0 else self.reciprocal()
        e = abs(e)
        result = None
        while True:
            if e & 1:
                result = base if result is None else result * base
            e >>= 1
            if not e:
                return result
            base = base * base

    # elementary functions -------------------------------------------------
    def _series(self, d: Sequence) -> "Jet":
        """Evaluate ``sum_j d[j] * h**j`` where ``h = self - self.const``."""
        h = self.copy()
        h.c = h.c.astype(np.result_type(h.c, np.asarray(d[0])), copy=False)
        h.c[0] = 0
        out = Jet.constant(d[self.k], self.n, self.k)
        for j in range(self.k - 1, -1, -1):
            out = out * h + d[j]
        return out

    def _is_complex(self) -> bool:
        return np.iscomplexobj(self.c)

    def reciprocal(self) -> "Jet":
        c0 = self.const
        if c0 == 0:
            raise JetDomainError("reciprocal of a jet with zero constant term")
        return self._series([(-1) ** j / c0 ** (j + 1) for j in range(self.k + 1)])

    def exp(self) -> "Jet":
        c0 = self.const
        try:
            e0 = cmath.exp(c0) if self._is_complex() else math.exp(c0)
        except OverflowError:
            e0 = math.inf
        return self._series([e0 / math.factorial(j) for j in range(self.k + 1)])

    def log(self) -> "Jet":
        c0 = self.const
        if self._is_complex():
            if c0 == 0:
                raise JetDomainError("log of zero")
            l0 = cmath.log(c0)
        else:
            if c0 <= 0:
                raise JetDomainError(f"log of non-positive value {c0!r}")
            l0 = math.log(c0)
        d = [l0] + [(-1) ** (j + 1) / (j * c0 ** j) for j in range(1, self.k + 1)]
        return self._series(d)

    def sqrt(self) -> "Jet":
        c0 = self.const
        if self._is_complex():
            if c0 == 0:
                raise JetDomainError("sqrt jet at zero")
            s0 = cmath.sqrt(c0)
        else:
            if c0 <= 0:
                raise JetDomainError(f"sqrt jet at non-positive value {c0!r}")
            s0 = math.sqrt(c0)
        d, binom = [], 1.0
        for j in range(self.k + 1):
            d.append(binom * s0 / c0 ** j)
            binom *= (0.5 - j) / (j + 1)
        return self._series(d)

    def sin(self) -> "Jet":
        f = cmath.sin if self._is_complex() else math.sin
        c0 = self.const
        return self._series([f(c0 + j * math.pi / 2) / math.factorial(j) for j in range(self.k + 1)])

    def cos(self) -> "Jet":
        f = cmath.cos if self._is_complex() else math.cos
        c0 = self.const
        return self._series([f(c0 + j * math.pi / 2) / math.factorial(j) for j in range(self.k + 1)])

    def tanh(self) -> "Jet":
        c0 = self.const
        t = [cmath.tanh(c0) if self._is_complex() else math.tanh(c0)]
        # t' = 1 - t^2 on the univariate series
        for j in range(self.k):
            sq = sum(t[a] * t[j - a] for a in range(j + 1))
            t.append(((1.0 if j == 0 else 0.0) - sq) / (j + 1))
        return self._series(t)


class MapJet(tuple):
    """Tuple of component jets sharing dimension and order."""

    def __new__(cls, jets: Sequence[Jet]):
        jets = tuple(jets)
        if not jets:
            raise ValueError("empty MapJet")
        n, k = jets[0].n, jets[0].k
        if any(j.n != n or j.k != k for j in jets):
            raise ValueError("MapJet components must share n and k")
        return super().__new__(cls, jets)

    @property
    def n(self) -> int:
        return self[0].n

    @property
    def k(self) -> int:
        return self[0].k

    def constant(self) -> np.ndarray:
        return np.array([j.c[0] for j in self])

    def linear_part(self) -> np.ndarray:
        """Jacobian block: row per component, column per variable."""
        return np.array([j.c[1:1 + self.n] for j in self])

    def coefficients(self) -> np.ndarray:
        return np.array([j.c for j in self])

    def truncate(self, k: int) -> "MapJet":
        return MapJet([j.truncate(k) for j in self])

    @classmethod
    def from_array(cls, coeffs: np.ndarray, n: int, k: int) -> "MapJet":
        return cls([Jet(row, n, k) for row in coeffs])

    @classmethod
    def identity(cls, x0, k: int) -> "MapJet":
        x0 = np.asarray(x0)
        n = x0.size
        return cls([Jet.variable(i, x0[i], n, k) for i in range(n)])


def monomial_values(inner: Sequence[Jet], degree: int | None = None) -> np.ndarray:
    """Coefficients of every monomial ``u**a`` (``|a| <= degree``) with ``u = inner``.

    Returns an array of shape ``(C(q + degree, degree), N_inner)`` whose row
    ``r`` is the jet of ``prod_j inner[j] ** a_j`` for the ``r``-th multi-index
    of ``table(q, degree)``.
    """
    q = len(inner)
    p, k = inner[0].n, inner[0].k
    degree = k if degree is None else degree
    outer_t = table(q, degree)
    inner_t = table(p, k)
    dt = _common_dtype(*[j.c for j in inner])
    vals = np.zeros((outer_t.size, inner_t.size), dtype=dt)
    vals[0, 0] = 1.0
    rows = [np.ascontiguousarray(j.c, dtype=dt) for j in inner]
    for r in range(1, outer_t.size):
        _backend.mul_into(vals[outer_t.parent[r]], rows[outer_t.parent_var[r]],
                          inner_t.mul_a, inner_t.mul_b, inner_t.mul_c, vals[r])
    return vals


def compose(outer: Sequence[Jet], inner: Sequence[Jet], *, allow_offset: bool = False) -> MapJet:
    """Substitute ``inner`` jets for the variables of each ``outer`` jet.

    The outer jets are polynomials in shifted variables; the inner jets
    supply those shifts and must have zero constant term (unless
    ``allow_offset``), which makes the result the Taylor expansion of the
    composite to the inner order.
    """
    q = len(inner)
    if any(o.n != q for o in outer):
        raise ValueError("outer jets must have one variable per inner jet")
    if not allow_offset and any(abs(j.const) > 0 for j in inner):
        raise ValueError("inner jets must have zero constant term")
    p, k = inner[0].n, inner[0].k
    deg = max(o.k for o in outer)
    if not allow_offset:
        deg = min(deg, k)
    vals = monomial_values(inner, deg)
    out = []
    for o in outer:
        m = min(o.k, deg)
        sz = table(q, m).size
        out.append(Jet(o.c[:sz] @ vals[:sz], p, k))
    return MapJet(out)
