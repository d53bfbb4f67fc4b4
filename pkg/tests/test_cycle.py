import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopfactor.cycle import (asymptotic_phase_at, build_isostable_model, build_phase_model,
                              cycle_eigenvalue_lattice, floquet_normal_form, isostable_at,
                              lattice_with_period, rebased_models)
from koopfactor.evaluate import linear_propagator
from koopfactor.flow import flow_to

from conftest import sl_isostable, sl_phase

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def sl_models(stuart_landau):
    h, cyc = stuart_landau
    return h, cyc, build_phase_model(h, cyc), build_isostable_model(h, cyc, 4)


@pytest.fixture(scope="module")
def vdp_models(vanderpol):
    h, cyc = vanderpol
    return h, cyc, build_phase_model(h, cyc), build_isostable_model(h, cyc, 4)


def polar(r, th):
    return np.array([r * math.cos(th), r * math.sin(th)])


def vdp_samples(h, cyc, count, seed):
    # points in the basin: small offsets from the cycle, away from the unstable focus
    rng = np.random.default_rng(seed)
    out = []
    for s, d in zip(rng.uniform(0, cyc.tau, count), rng.uniform(-0.3, 0.3, (count, 2))):
        out.append(flow_to(h, cyc.x0, s) + d)
    return out


def test_stuart_landau_phase_examples(sl_models):
    h, cyc, pm, _ = sl_models
    assert abs(asymptotic_phase_at(pm, cyc.x0) - 1) < 1e-10
    assert abs(asymptotic_phase_at(pm, polar(2.0, 0.7)) - cmath.exp(0.7j)) < 1e-8
    for t in (0.5, 2.0, 5.0):
        on = flow_to(h, cyc.x0, t)
        assert abs(asymptotic_phase_at(pm, on) - cmath.exp(TWO_PI * 1j * t / cyc.tau)) < 1e-8


def test_stuart_landau_isostable_examples(sl_models):
    h, cyc, _, iso = sl_models
    assert abs(isostable_at(iso, polar(2.0, 0.0)).value[0] - 0.375) < 1e-8
    assert abs(isostable_at(iso, polar(2.0, 1.3)).value[0] - 0.375) < 1e-8
    for t in (0.0, 1.1, 4.0):
        assert abs(isostable_at(iso, flow_to(h, cyc.x0, t)).value[0]) < 1e-9
    for x in [(1.2, 0.3), (0.7, -0.4), (0.5, 0.5), (1.8, -1.0)]:
        assert abs(isostable_at(iso, x).value[0] - sl_isostable(x)) < 1e-8


@settings(max_examples=10)
@given(st.floats(0.5, 3.0), st.floats(-math.pi, math.pi))
def test_stuart_landau_closed_forms(sl_models, r, th):
    _, _, pm, iso = sl_models
    x = polar(r, th)
    assert abs(isostable_at(iso, x).value[0] - sl_isostable(x)) < 1e-6
    ph = asymptotic_phase_at(pm, x)
    assert abs(ph - sl_phase(x)) < 1e-6
    assert abs(abs(ph) - 1) < 1e-10


@settings(max_examples=8)
@given(st.floats(0.6, 2.5), st.floats(-math.pi, math.pi), st.floats(0.01, 0.99))
def test_equivariance_stuart_landau(sl_models, r, th, frac):
    h, cyc, pm, iso = sl_models
    t = frac * cyc.tau
    x = polar(r, th)
    y = flow_to(h, x, t, rtol=1e-13, atol=1e-15)
    a = asymptotic_phase_at(pm, y)
    assert abs(a - cmath.exp(TWO_PI * 1j * t / cyc.tau) * asymptotic_phase_at(pm, x)) <= 1e-6
    want = linear_propagator(iso.A, t) @ isostable_at(iso, x).value
    assert np.max(np.abs(isostable_at(iso, y).value - want)) <= 1e-6


def test_equivariance_vanderpol(vdp_models):
    h, cyc, pm, iso = vdp_models
    rng = np.random.default_rng(7)
    for x in vdp_samples(h, cyc, 5, 3):
        t = float(rng.uniform(0.05, 0.95)) * cyc.tau
        y = flow_to(h, x, t, rtol=1e-13, atol=1e-15)
        a, b = asymptotic_phase_at(pm, x), asymptotic_phase_at(pm, y)
        assert abs(abs(a) - 1) < 1e-10
        assert abs(b - cmath.exp(TWO_PI * 1j * t / cyc.tau) * a) <= 1e-6
        za, zb = isostable_at(iso, x).value, isostable_at(iso, y).value
        assert np.max(np.abs(zb - linear_propagator(iso.A, t) @ za)) <= 1e-6
        # real exponent: real coordinate
        assert np.max(np.abs(np.imag(za))) <= 1e-12


def test_period_relation(vdp_models):
    h, cyc, _, iso = vdp_models
    eT = linear_propagator(iso.A, cyc.tau)
    for x in vdp_samples(h, cyc, 4, 11):
        y = flow_to(h, x, cyc.tau, rtol=1e-13, atol=1e-15)
        assert np.max(np.abs(isostable_at(iso, y).value - eT @ isostable_at(iso, x).value)) <= 1e-6


@pytest.mark.parametrize("system", ["sl_models", "vdp_models"])
def test_base_point_covariance(system, request):
    h, cyc, pm, iso = request.getfixturevalue(system)
    s = 0.3 * cyc.tau
    pm2, iso2 = rebased_models(h, iso, s)
    if system == "sl_models":
        samples = [polar(r, th) for r, th in [(1.5, 0.2), (0.7, 2.0), (2.2, -1.0)]]
    else:
        samples = vdp_samples(h, cyc, 3, 5)
    rot = cmath.exp(-TWO_PI * 1j * s / cyc.tau)
    back = linear_propagator(iso.A, -s)
    for x in samples:
        assert abs(asymptotic_phase_at(pm2, x) - rot * asymptotic_phase_at(pm, x)) <= 1e-6
        want = back @ isostable_at(iso, x).value
        assert np.max(np.abs(isostable_at(iso2, x).value - want)) <= 1e-6


def test_floquet_normal_form_stuart_landau(stuart_landau):
    h, cyc = stuart_landau
    fnf = floquet_normal_form(h, cyc, 4)
    th, z = fnf(polar(2.0, 0.7))
    assert z.shape == (1,)
    assert abs(th - cmath.exp(0.7j)) < 1e-8
    # floquet target uses the log of the restricted monodromy with B = I
    assert abs(z[0] - 0.375) < 1e-8
    th, z = fnf(flow_to(h, cyc.x0, 1.0))
    assert abs(th - cmath.exp(1j * TWO_PI / cyc.tau)) < 1e-8 and abs(z[0]) < 1e-9
    pts = [polar(r, a) for r, a in [(0.6, 0.0), (1.5, 0.0), (1.5, 2.0), (2.5, -2.0)]]
    assert fnf.injectivity_diagnostic(pts) > 1e-3


def test_isostable_needs_order_two(stuart_landau):
    h, cyc = stuart_landau
    with pytest.raises(ValueError):
        build_isostable_model(h, cyc, 1)


def test_lattice_examples(stuart_landau):
    _, cyc = stuart_landau
    assert cycle_eigenvalue_lattice(cyc, -4.0, 4, 2, tol=1e-6) == [((2,), 0)]
    assert cycle_eigenvalue_lattice(cyc, complex(-2, 1), 4, 2, tol=1e-6) == [((1,), 1)]
    lam = cyc.floquet_exponents[0]
    assert cycle_eigenvalue_lattice(cyc, lam, 3, 0, tol=1e-6) == [((1,), 0)]
    assert lattice_with_period([-2.0], TWO_PI, 1j, 3, 2) == [((0,), 1)]
    assert lattice_with_period([-2.0], TWO_PI, -0.5, 3, 2) == []
