# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled truncated-product kernels for dense graded-lex jets."""

ctypedef fused scalar:
    double
    double complex


def mul_into(const scalar[::1] a, const scalar[::1] b,
             const Py_ssize_t[::1] ia, const Py_ssize_t[::1] ib,
             const Py_ssize_t[::1] ic, scalar[::1] out):
    """out[c] = sum over table rows with ic == c of a[ia] * b[ib]."""
    cdef Py_ssize_t p, npairs = ia.shape[0], n = out.shape[0]
    with nogil:
        for p in range(n):
            out[p] = 0
        for p in range(npairs):
            out[ic[p]] += a[ia[p]] * b[ib[p]]


def mul_rows_into(const scalar[:, ::1] a, const scalar[::1] b,
                  const Py_ssize_t[::1] ia, const Py_ssize_t[::1] ib,
                  const Py_ssize_t[::1] ic, scalar[:, ::1] out):
    """Row-wise product of a stack of jets with a single jet."""
    cdef Py_ssize_t r, p, npairs = ia.shape[0], n = out.shape[1]
    with nogil:
        for r in range(a.shape[0]):
            for p in range(n):
                out[r, p] = 0
            for p in range(npairs):
                out[r, ic[p]] += a[r, ia[p]] * b[ib[p]]
