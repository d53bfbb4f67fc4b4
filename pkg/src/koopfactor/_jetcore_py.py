"""Numpy fallback for the compiled jet kernels (same signatures)."""

import numpy as np


def mul_into(a, b, ia, ib, ic, out):
    n = out.shape[0]
    prod = a[ia] * b[ib]
    if np.iscomplexobj(out):
        out[:] = np.bincount(ic, prod.real, n) + 1j * np.bincount(ic, prod.imag, n)
    else:
        out[:] = np.bincount(ic, prod, n)


def mul_rows_into(a, b, ia, ib, ic, out):
    for r in range(a.shape[0]):
        mul_into(a[r], b, ia, ib, ic, out[r])
