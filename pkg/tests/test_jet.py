import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from koopfactor import _backend, _jetcore_py
from koopfactor.jet import Jet, JetDomainError, MapJet, compose
from koopfactor.multiindex import monomials_of_degree, n_monomials, table
from koopfactor.parser import field_jet, parse_field


def _naive_monomials(n, d):
    return sorted((m for m in product(range(d + 1), repeat=n) if sum(m) == d), reverse=True)


@pytest.mark.parametrize("n,k", [(1, 5), (2, 4), (3, 3), (4, 2)])
def test_table_matches_naive_enumeration(n, k):
    t = table(n, k)
    assert t.size == n_monomials(n, k) == math.comb(n + k, k)
    for d in range(k + 1):
        got = monomials_of_degree(n, d)
        assert sorted(got, reverse=True) == _naive_monomials(n, d)
        blk = t.block(d)
        assert [t.rank(m) for m in got] == list(range(blk.start, blk.stop))


def test_table_graded_order():
    t = table(2, 2)
    assert [tuple(e) for e in t.exps] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def _random_jet(rng, n, k, complex_=False):
    c = rng.standard_normal(table(n, k).size)
    if complex_:
        c = c + 1j * rng.standard_normal(c.size)
    return Jet(c, n, k)


def _poly_eval(j: Jet, x):
    t = j.table
    return sum(j.c[r] * np.prod(np.asarray(x) ** t.exps[r]) for r in range(t.size))


@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_product_commutative_associative(n, k, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_jet(rng, n, k) for _ in range(3))
    np.testing.assert_allclose((a * b).c, (b * a).c, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(((a * b) * c).c, (a * (b * c)).c, rtol=1e-13, atol=1e-12)


@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_product_is_truncated_polynomial_product(n, k, seed):
    # the product of the truncated polynomials, evaluated at tiny points,
    # agrees with the jet product up to the truncation order
    rng = np.random.default_rng(seed)
    a, b = _random_jet(rng, n, k), _random_jet(rng, n, k)
    p = a * b
    full = np.zeros(table(n, 2 * k).size)
    ta, t2 = table(n, k), table(n, 2 * k)
    for r1 in range(ta.size):
        for r2 in range(ta.size):
            full[t2.rank(ta.exps[r1] + ta.exps[r2])] += a.c[r1] * b.c[r2]
    np.testing.assert_allclose(p.c, full[:ta.size], rtol=1e-12, atol=1e-12)


def test_elementary_functions_match_series():
    x = Jet.variable(0, 0.3, 1, 6)
    h = 1e-3
    for name, f in [("exp", np.exp), ("log", np.log), ("sqrt", np.sqrt), ("sin", np.sin),
                    ("cos", np.cos), ("tanh", np.tanh)]:
        j = getattr(x, name)()
        assert abs(j.c[0] - f(0.3)) < 1e-15
        # Taylor polynomial reproduces f(0.3 + h) to order h^7
        approx = sum(j.c[d] * h ** d for d in range(7))
        assert abs(approx - f(0.3 + h)) < 1e-18 + 1e-15 * abs(f(0.3 + h)), name


def test_division_and_power():
    x = Jet.variable(0, 2.0, 1, 5)
    np.testing.assert_allclose(((x * x) / x).c, x.c, atol=1e-15)
    np.testing.assert_allclose((x ** 3).c, (x * x * x).c, atol=1e-14)
    np.testing.assert_allclose((x ** -1).c, (1 / x).c, atol=1e-15)


def test_domain_errors():
    zero = Jet.variable(0, 0.0, 1, 3)
    with pytest.raises(JetDomainError):
        zero.log()
    with pytest.raises(JetDomainError):
        1 / zero


@given(st.integers(0, 2**31 - 1))
def test_compose_matches_pointwise_evaluation(seed):
    rng = np.random.default_rng(seed)
    n, k = 2, 4
    outer = [_random_jet(rng, n, k) for _ in range(2)]
    inner = []
    for _ in range(2):
        j = _random_jet(rng, n, k)
        j.c[0] = 0.0
        inner.append(j)
    comp = compose(outer, inner)
    h = 1e-3
    x = rng.uniform(-1, 1, n) * h
    y = [_poly_eval(j, x) for j in inner]
    # exact up to the dropped terms of degree >= k + 1, each bounded by |coef| (s h)^a h^(k+1-a)
    s = max(1.0, max(float(np.abs(j.c).sum()) for j in inner))
    for c, o in zip(comp, outer):
        bound = float(np.abs(o.c).sum()) * s ** k * h ** (k + 1)
        assert abs(_poly_eval(c, x) - _poly_eval(o, y)) <= 1e-13 + bound


@pytest.mark.skipif(not _backend.compiled_available(), reason="compiled kernels not built")
@given(st.integers(1, 4), st.integers(1, 6), st.booleans(), st.integers(0, 2**31 - 1))
def test_backends_agree(n, k, complex_, seed):
    impls = _backend.implementations()
    rng = np.random.default_rng(seed)
    t = table(n, k)
    a = _random_jet(rng, n, k, complex_).c
    b = _random_jet(rng, n, k, complex_).c
    outs = {}
    for name, impl in impls.items():
        out = np.empty(t.size, dtype=a.dtype)
        impl.mul_into(a, b, t.mul_a, t.mul_b, t.mul_c, out)
        outs[name] = out
        rows = np.ascontiguousarray(np.vstack([a, 2 * a]))
        out2 = np.empty_like(rows)
        impl.mul_rows_into(rows, b, t.mul_a, t.mul_b, t.mul_c, out2)
        outs[name + "_rows"] = out2
    np.testing.assert_allclose(outs["cython"], outs["python"], rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(outs["cython_rows"], outs["python_rows"], rtol=1e-14, atol=1e-14)


def test_fallback_kernel_is_importable():
    assert _jetcore_py.mul_into is not None
    assert _backend.NAME in ("cython", "python")


def test_mapjet_identity_and_linear_part():
    mj = MapJet.identity([1.0, 2.0], 3)
    np.testing.assert_array_equal(mj.constant(), [1.0, 2.0])
    np.testing.assert_array_equal(mj.linear_part(), np.eye(2))
    assert mj.truncate(1).k == 1


# field jets -------------------------------------------------------------------

def test_field_jet_examples():
    j = field_jet(parse_field("[-x1]"), [0.0], 3)
    np.testing.assert_array_equal(j[0].c, [0, -1, 0, 0])
    j = field_jet(parse_field("[-x1 + x1^2]"), [0.0], 2)
    np.testing.assert_array_equal(j[0].c, [0, -1, 1])
    sl = parse_field("[x1 - x2 - x1*(x1^2 + x2^2), x1 + x2 - x2*(x1^2 + x2^2)]")
    np.testing.assert_allclose(field_jet(sl, [1.0, 0.0], 1).linear_part(), [[-2, -1], [1, 0]], atol=1e-15)


_FIELDS = ["[x1*x2 - sin(x2), exp(x1) - cos(x1*x2)]",
           "[x1^3 - 2*x2 + x1*x2^2, tanh(x1) + x2]",
           "[sqrt(1 + x1^2)*x2, log(2 + x1) - x2^2]"]


@pytest.mark.parametrize("src", _FIELDS)
@given(x=st.tuples(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7)))
def test_jet_vs_finite_differences(src, x):
    prog = parse_field(src)
    x = np.array(x)
    D = field_jet(prog, x, 1).linear_part().real
    h = 1e-5
    fd = np.column_stack([(prog(x + h * e) - prog(x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(D, fd, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("src", _FIELDS)
def test_truncation_consistency(src):
    prog = parse_field(src)
    x = np.array([0.3, -0.2])
    hi = field_jet(prog, x, 6)
    for k1 in range(1, 6):
        lo = field_jet(prog, x, k1)
        for a, b in zip(hi.truncate(k1), lo):
            np.testing.assert_array_equal(a.c, b.c)
