"""Dense graded-lexicographic multi-index tables.

Truncated Taylor data in ``n`` variables up to total degree ``k`` is stored as
a dense vector of length ``C(n + k, k)``.  Position ``r`` holds the
coefficient of the monomial ``x**exps[r]``.  Monomials are ordered by total
degree, and lexicographically (descending) within a degree, so for ``n = 2``
the order is ``1, x, y, x^2, xy, y^2, x^3, ...``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb

import numpy as np


def n_monomials(n: int, k: int) -> int:
    """Number of monomials of total degree ``<= k`` in ``n`` variables."""
    return comb(n + k, k)


def monomials_of_degree(n: int, d: int) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree ``d``, lexicographically descending."""
    if n == 0:
        return [()] if d == 0 else []
    out = []
    for combo in combinations_with_replacement(range(n), d):
        e = [0] * n
        for j in combo:
            e[j] += 1
        out.append(tuple(e))
    out.sort(reverse=True)
    return out


@dataclass(frozen=True, eq=False)
class MultiIndexTable:
    """Index bookkeeping shared by every jet with the same ``(n, k)``.

    Attributes
    ----------
    exps : (N, n) int array of exponents in graded-lex order.
    degree : (N,) total degree of each monomial.
    offsets : (k + 2,) start of each degree block; degree ``d`` occupies
        ``offsets[d]:offsets[d + 1]``.
    parent, parent_var : for ``r > 0``, ``exps[r] = exps[parent[r]] + e_{parent_var[r]}``.
    mul_a, mul_b, mul_c : product table; ``x^a * x^b = x^c`` for every
        pair with ``|a| + |b| <= k``, sorted by ``mul_c``.
    """

    n: int
    k: int
    exps: np.ndarray
    degree: np.ndarray
    offsets: np.ndarray
    parent: np.ndarray
    parent_var: np.ndarray
    mul_a: np.ndarray
    mul_b: np.ndarray
    mul_c: np.ndarray
    _keys: np.ndarray
    _key_order: np.ndarray

    @property
    def size(self) -> int:
        return self.exps.shape[0]

    def rank(self, exps) -> int:
        """Position of a single exponent tuple."""
        r = self.ranks(np.asarray(exps, dtype=np.int64)[None, :])[0]
        return int(r)

    def ranks(self, exps: np.ndarray) -> np.ndarray:
        exps = np.asarray(exps, dtype=np.int64)
        if exps.ndim != 2 or exps.shape[1] != self.n:
            raise ValueError(f"expected exponent array of shape (*, {self.n})")
        if np.any(exps < 0) or np.any(exps.sum(axis=1) > self.k):
            raise KeyError("multi-index outside the truncation order")
        keys = _encode(exps, self.k)
        pos = np.searchsorted(self._keys, keys)
        return self._key_order[pos]

    def block(self, d: int) -> slice:
        return slice(int(self.offsets[d]), int(self.offsets[d + 1]))


def _encode(exps: np.ndarray, k: int) -> np.ndarray:
    base = np.int64(k + 1)
    weights = base ** np.arange(exps.shape[1], dtype=np.int64)
    return exps @ weights


@lru_cache(maxsize=None)
def table(n: int, k: int) -> MultiIndexTable:
    if n < 0 or k < 0:
        raise ValueError("dimension and order must be non-negative")
    rows: list[tuple[int, ...]] = []
    offsets = [0]
    for d in range(k + 1):
        rows.extend(monomials_of_degree(n, d))
        offsets.append(len(rows))
    exps = np.array(rows, dtype=np.int64).reshape(len(rows), n)
    degree = exps.sum(axis=1)
    keys = _encode(exps, k)
    key_order = np.argsort(keys, kind="stable")
    sorted_keys = keys[key_order]

    def ranks(e):
        return key_order[np.searchsorted(sorted_keys, _encode(e, k))]

    N = len(rows)
    parent = np.full(N, -1, dtype=np.int64)
    parent_var = np.full(N, -1, dtype=np.int64)
    if N > 1:
        nz = exps[1:] > 0
        first = np.argmax(nz, axis=1)
        prev = exps[1:].copy()
        prev[np.arange(N - 1), first] -= 1
        parent[1:] = ranks(prev)
        parent_var[1:] = first

    # product table: for each a, every b with |b| <= k - |a| is a prefix block
    mul_a, mul_b = [], []
    for d in range(k + 1):
        lim = offsets[k - d + 1]
        a_idx = np.arange(offsets[d], offsets[d + 1])
        b_idx = np.arange(lim)
        mul_a.append(np.repeat(a_idx, lim))
        mul_b.append(np.tile(b_idx, a_idx.size))
    ma = np.concatenate(mul_a) if mul_a else np.zeros(0, np.int64)
    mb = np.concatenate(mul_b) if mul_b else np.zeros(0, np.int64)
    mc = ranks(exps[ma] + exps[mb]) if ma.size else ma
    order = np.argsort(mc, kind="stable")

    return MultiIndexTable(
        n=n, k=k, exps=exps, degree=degree, offsets=np.array(offsets, dtype=np.int64),
        parent=parent, parent_var=parent_var,
        mul_a=np.ascontiguousarray(ma[order], dtype=np.intp),
        mul_b=np.ascontiguousarray(mb[order], dtype=np.intp),
        mul_c=np.ascontiguousarray(mc[order], dtype=np.intp),
        _keys=sorted_keys, _key_order=key_order,
    )
