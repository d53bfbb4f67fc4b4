import cmath
import math
import warnings
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from koopfactor.classify import (DefectiveLinearization, LatticeSolution, check_semisimple,
                                 conjugate_partner, cycle_monomials, evaluate_monomial,
                                 monomial_basis_for_mu, point_lattice)
from koopfactor.evaluate import EigenfunctionModel, refine_at
from koopfactor.factor import DegenerateSolvable, approximate_factor
from koopfactor.flow import find_fixed_point, flow_to, time_one_map_jet

from conftest import handle

CLASSIFY_FIELD = "[-x1 - 0.5*x2^2, -2*x2 + x1^3]"


def brute_point(lam, mu, k, tol):
    """Exhaustive search over the cube [0, k]^n, filtered afterwards."""
    out = []
    for m in product(range(k + 1), repeat=len(lam)):
        if not 1 <= sum(m) <= k:
            continue
        if abs(cmath.exp(mu) - cmath.exp(sum(a * b for a, b in zip(m, lam)))) <= tol:
            out.append(m)
    return sorted(out)


def brute_cycle(lam, tau, mu, k, jr, tol):
    out = []
    for m in product(range(k + 1), repeat=len(lam)):
        for j in range(-jr, jr + 1):
            if sum(m) > k or (sum(m) == 0 and j == 0):
                continue
            if abs(mu - sum(a * b for a, b in zip(m, lam)) - 2j * math.pi * j / tau) <= tol:
                out.append((m, j))
    return sorted(out)


def test_point_lattice_examples():
    assert [s.m for s in point_lattice([-1, -2.5], -4.5, 4)] == [(2, 1)]
    assert [s.m for s in point_lattice([-1, -2.5], -1, 4)] == [(1, 0)]
    assert point_lattice([-1, -2.5], -0.5, 4) == []


@given(st.integers(0, 2**31 - 1))
def test_point_lattice_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 4)), int(rng.integers(1, 6))
    lam = -rng.integers(1, 4, n).astype(float)  # integer exponents give many exact hits
    mu = float(-rng.integers(1, 8))
    got = sorted(s.m for s in point_lattice(lam, mu, k))
    assert got == brute_point(lam, mu, k, 1e-9)


@given(st.integers(0, 2**31 - 1))
def test_point_lattice_k1_returns_matching_eigenvalues(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    lam = -rng.integers(1, 4, n).astype(float)
    mu = float(lam[int(rng.integers(0, n))])
    got = [s.m for s in point_lattice(lam, mu, 1)]
    want = [tuple(int(i == j) for i in range(n)) for j in range(n) if lam[j] == mu]
    assert sorted(got) == sorted(want)


def test_monomial_basis_examples():
    got = monomial_basis_for_mu([-1, -2], -2, 4)
    assert sorted(s.m for s in got) == [(0, 1), (2, 0)]
    assert all(s.ell == (0, 0) for s in got)
    empty = monomial_basis_for_mu([-1, -2], 0, 4)
    assert empty == [] and any("constants" in n for n in empty.notes)
    pair = monomial_basis_for_mu([complex(-1, 2), complex(-1, -2)], -2, 2)
    assert [s.m for s in pair] == [(1, 1)]


def test_monomial_basis_without_conjugate_closure():
    # a lone complex exponent: conjugate factors are listed explicitly
    got = monomial_basis_for_mu([complex(-1, 2)], -2, 2)
    assert [(s.m, s.ell) for s in got] == [((1,), (1,))]


def test_conjugate_partner():
    np.testing.assert_array_equal(conjugate_partner([complex(-1, 2), -3, complex(-1, -2)]), [2, 1, 0])
    assert conjugate_partner([complex(-1, 2)]) is None


def test_cycle_monomial_examples():
    tau = 2 * math.pi
    assert [(s.m, s.j) for s in cycle_monomials([-2.0], tau, complex(-2, 1), 4, 3)] == [((1,), 1)]
    assert [(s.m, s.j) for s in cycle_monomials([-2.0], tau, 1j, 4, 3)] == [((0,), 1)]
    assert [(s.m, s.j) for s in cycle_monomials([-2.0], tau, -4, 4, 3)] == [((2,), 0)]


@given(st.integers(0, 2**31 - 1))
def test_cycle_monomials_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, k, jr = int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(0, 3))
    lam = -rng.integers(1, 4, n).astype(float)
    tau = float(rng.choice([2 * math.pi, math.pi, 4.0]))
    mu = complex(-rng.integers(0, 6), 2 * math.pi * int(rng.integers(-2, 3)) / tau)
    got = sorted((s.m, s.j) for s in cycle_monomials(lam, tau, mu, k, jr, 1e-9))
    assert got == brute_cycle(lam, tau, mu, k, jr, 1e-9)


@pytest.mark.parametrize("lam,mus", [([-1.0, -2.0], [-1, -2, -3, -4]),
                                     ([-1.0, -2.5], [-1, -3.5, -4.5, -0.5]),
                                     ([complex(-1, 2), complex(-1, -2)], [-2, complex(-1, 2), -4])])
def test_lattices_stable_under_tol_halving(lam, mus):
    for mu in mus:
        a = [(s.m, s.ell) for s in monomial_basis_for_mu(lam, mu, 4, 1e-9)]
        b = [(s.m, s.ell) for s in monomial_basis_for_mu(lam, mu, 4, 5e-10)]
        assert a == b


def test_defective_linearization_refused():
    with pytest.raises(DefectiveLinearization):
        check_semisimple([[-1.0, 1.0], [0.0, -1.0]])
    check_semisimple([[-1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(DefectiveLinearization):
        monomial_basis_for_mu([-1, -1], -2, 3, matrix=[[-1.0, 1.0], [0.0, -1.0]])


def test_evaluate_monomial():
    s = LatticeSolution((2, 1), (0, 1))
    v = np.array([0.5 + 0.1j, -0.3j])
    assert abs(evaluate_monomial(v, s) - v[0] ** 2 * v[1] * np.conj(v[1])) < 1e-15
    with pytest.raises(ValueError):
        evaluate_monomial(v, LatticeSolution((1, 0), j=1))
    assert evaluate_monomial(v, LatticeSolution((0, 0), j=2), phase=1j) == -1


@pytest.fixture(scope="module")
def principal_pair():
    h = handle(CLASSIFY_FIELD)
    fp = find_fixed_point(h, [0.1, 0.1])
    A = np.diag([-1.0, -2.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSolvable)  # (2,0) resonance with zero forcing
        P = approximate_factor(time_one_map_jet(h, fp.x0, 4), np.diag(np.exp([-1.0, -2.0])),
                               np.eye(2), A=A)
    return h, EigenfunctionModel.from_factor(P, h)


def test_products_of_principal_eigenfunctions_are_eigenfunctions(principal_pair):
    h, model = principal_pair
    rng = np.random.default_rng(3)
    xs = rng.uniform(-0.3, 0.3, (5, 2))
    t = 0.7
    for x in xs:
        a = refine_at(model, x).value
        b = refine_at(model, flow_to(h, x, t, atol=1e-300)).value
        for mu in (-1, -2, -3, -4):
            for s in monomial_basis_for_mu([-1, -2], mu, 4):
                lhs, rhs = evaluate_monomial(b, s), math.exp(mu * t) * evaluate_monomial(a, s)
                assert abs(lhs - rhs) <= 1e-5
