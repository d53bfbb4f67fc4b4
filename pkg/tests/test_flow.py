import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from koopfactor.flow import (FixedPointError, cycle_data, dense_orbit, find_fixed_point,
                             find_periodic_orbit, flow_to, monodromy, PeriodicOrbitError, rebase_cycle,
                             time_one_map_jet)
from koopfactor.multiindex import table

from conftest import handle

E = math.e


def test_flow_to_examples():
    assert abs(flow_to(handle("[-x1]"), [1.0], 1.0)[0] - math.exp(-1)) < 1e-9
    np.testing.assert_array_equal(flow_to(handle("[0, 0]"), [0.3, -2.0], 7.5), [0.3, -2.0])
    v = flow_to(handle("[-x1 + x1^2]"), [0.5], 1.0)[0]
    assert abs(v - 0.5 / (0.5 + 0.5 * E)) < 1e-9
    assert abs(v - 0.26894) < 1e-5


def test_map_iteration_is_exact_and_integer_only():
    h = handle("[0.5*x1 + x2^2, 0.25*x2]", discrete=True)
    x = np.array([1.0, 2.0])
    y = x.copy()
    for _ in range(3):
        y = np.array([0.5 * y[0] + y[1] ** 2, 0.25 * y[1]])
    np.testing.assert_array_equal(flow_to(h, x, 3), y)
    with pytest.raises(ValueError):
        flow_to(h, x, 0.5)


@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_semigroup(x1, x2, s, t):
    h = handle("[-x1 - 2*x2 + x1*x2, 2*x1 - x2 - x1^2]")
    x = np.array([x1, x2])
    a = flow_to(h, x, s + t)
    b = flow_to(h, flow_to(h, x, t), s)
    assert np.max(np.abs(a - b)) <= 10 * (h.rtol * np.max(np.abs(a)) + h.atol) + 1e-12


def test_dense_orbit_matches_flow_to():
    h = handle("[-x1 + x1^2]")
    o = dense_orbit(h, [0.5], 3.0)
    for t in (0.3, 1.0, 2.7):
        assert abs(o(t)[0] - 0.5 / (0.5 + 0.5 * math.exp(t))) < 1e-8


def test_time_one_map_jet_examples():
    F = time_one_map_jet(handle("[-x1]"), [0.0], 4)
    np.testing.assert_allclose(F[0].c, [0, math.exp(-1), 0, 0, 0], atol=1e-9)
    F = time_one_map_jet(handle("[-x1 + x1^2]"), [0.0], 3)
    assert abs(F[0].c[1] - math.exp(-1)) < 1e-9
    assert abs(F[0].c[2] - (E - 1) / E ** 2) < 1e-9
    # closed form x / (e + (1 - e) x): third coefficient (e - 1)^2 / e^3
    assert abs(F[0].c[3] - (E - 1) ** 2 / E ** 3) < 1e-9
    F = time_one_map_jet(handle("[-x1, -2.5*x2]"), [0.0, 0.0], 3)
    np.testing.assert_allclose(F.linear_part(), np.diag([math.exp(-1), math.exp(-2.5)]), atol=1e-9)
    t = table(2, 3)
    for comp in F:
        assert np.max(np.abs(comp.c[t.block(2).start:])) < 1e-12


def test_time_one_map_jet_requires_fixed_point():
    with pytest.raises(FixedPointError):
        time_one_map_jet(handle("[-x1]"), [0.5], 2)


@given(st.integers(0, 2**31 - 1))
def test_linear_flow_jet_is_expm(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((3, 3)) - 2 * np.eye(3)
    rows = [" + ".join(f"({float(M[i, j])!r})*x{j + 1}" for j in range(3)) for i in range(3)]
    h = handle("[" + ", ".join(rows) + "]")
    F = time_one_map_jet(h, np.zeros(3), 3)
    np.testing.assert_allclose(F.linear_part(), scipy.linalg.expm(M), atol=1e-9)
    t = table(3, 3)
    for comp in F:
        assert np.max(np.abs(comp.c[t.block(2).start:])) < 1e-9


def test_jet_transport_vs_finite_differences():
    h = handle("[-x1 - 2*x2 + x1*x2, 2*x1 - x2 - x1^2]")
    x0 = np.zeros(2)
    D = time_one_map_jet(h, x0, 2).linear_part()
    eps = 1e-5
    fd = np.column_stack([(flow_to(h, x0 + eps * e, 1.0) - flow_to(h, x0 - eps * e, 1.0)) / (2 * eps)
                          for e in np.eye(2)])
    np.testing.assert_allclose(D, fd, rtol=1e-5, atol=1e-9)


def test_find_fixed_point_examples():
    fp = find_fixed_point(handle("[-x1 + x1^2]"), [0.1])
    assert fp.x0[0] == 0 and abs(fp.jacobian[0, 0] - math.exp(-1)) < 1e-9
    fp = find_fixed_point(handle("[-x1, -2*x2]"), [1.0, 1.0])
    np.testing.assert_array_equal(fp.x0, [0, 0])
    fp = find_fixed_point(handle("[-x1 + x1^2]"), [0.9])
    assert abs(fp.x0[0]) < 1e-14 and fp.spectral_radius < 1


def test_fixed_point_of_map_and_errors():
    fp = find_fixed_point(handle("[0.5*x1 + 0.1, 0.2*x2]", discrete=True), [0.0, 1.0])
    np.testing.assert_allclose(fp.x0, [0.2, 0.0], atol=1e-14)
    with pytest.raises(FixedPointError):
        find_fixed_point(handle("[1 + x1^2]"), [0.0])


def test_stuart_landau_cycle(stuart_landau):
    _, cyc = stuart_landau
    assert abs(cyc.tau - 2 * math.pi) <= 1e-8 * 2 * math.pi
    np.testing.assert_allclose(cyc.x0, [1, 0], atol=1e-9)
    mult = cyc.floquet_multipliers[0]
    assert abs(mult - math.exp(-4 * math.pi)) <= 1e-6 * math.exp(-4 * math.pi)
    assert abs(cyc.floquet_exponents[0] + 2) < 1e-6
    # unit multiplier along f(x0), stable basis spans the invariant complement
    M = cyc.monodromy
    f0 = np.array([0.0, 1.0])
    assert np.linalg.norm(M @ f0 - f0) < 1e-8
    S = cyc.stable_basis
    P = np.eye(2) - np.outer(f0, cyc.phase_covector)  # projection along f(x0)
    assert np.linalg.norm(P @ M @ S - S @ cyc.restricted_monodromy) < 1e-8
    assert abs(cyc.phase_covector @ f0 - 1) < 1e-12


def test_monodromy_similarity_invariance(vanderpol):
    h, cyc = vanderpol
    other = rebase_cycle(h, cyc, 0.37 * cyc.tau)
    a, b = cyc.floquet_multipliers, other.floquet_multipliers
    np.testing.assert_allclose(b, a, rtol=1e-6)
    assert np.linalg.norm(flow_to(h, other.x0, cyc.tau, rtol=1e-13, atol=1e-15) - other.x0) < 1e-8


def test_cycle_data_rejects_unstable():
    h = handle("[-x1 + x2 + x1*(x1^2 + x2^2), -x1 - x2 + x2*(x1^2 + x2^2)]")
    tau = 2 * math.pi
    x0 = np.array([1.0, 0.0])
    _, M = monodromy(h, x0, tau)
    with pytest.raises(PeriodicOrbitError, match="not attracting"):
        cycle_data(h, x0, tau, M)


def test_periodic_orbit_from_remote_guess():
    h = handle("[x1 - x2 - x1*(x1^2 + x2^2), x1 + x2 - x2*(x1^2 + x2^2)]")
    cyc = find_periodic_orbit(h, [1.2, 0.0], 6.0)
    assert abs(cyc.tau - 2 * math.pi) < 1e-8
    assert abs(np.linalg.norm(cyc.x0) - 1) < 1e-9
