import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from koopfactor.spectral import (INF, Spectrum, check_hypotheses, check_k_nonresonant,
                                 compute_spectrum, intertwining_residual, seed_covector,
                                 spectral_spread)

E1, E2 = math.exp(-1), math.exp(-2)


def naive_witnesses(mu, lam, k, tol):
    """Independent triple loop over targets, degrees and exponent vectors."""
    out = set()
    n = len(lam)
    for i, m_i in enumerate(mu):
        for d in range(2, k + 1):
            for m in product(range(d + 1), repeat=n):
                if sum(m) != d:
                    continue
                p = 1.0 + 0j
                for lj, mj in zip(lam, m):
                    p *= lj ** mj
                if abs(m_i - p) <= tol[i]:
                    out.add((i, m))
    return out


def random_spectrum(rng, n, resonant_prob=0.5):
    lam = []
    while len(lam) < n:
        if len(lam) + 2 <= n and rng.random() < 0.3:
            r, th = rng.uniform(0.05, 0.95), rng.uniform(0.1, 3.0)
            lam += [r * np.exp(1j * th), r * np.exp(-1j * th)]
        else:
            lam.append(rng.uniform(-0.95, 0.95))
    return np.array(lam, dtype=complex)


def test_compute_spectrum_examples():
    assert list(compute_spectrum(np.eye(2)).values) == [1, 1]
    np.testing.assert_allclose(sorted(np.real(compute_spectrum(np.diag([E1, E2])).array())), [E2, E1])
    s = compute_spectrum([[0, -0.25], [1, 0]]).array()
    np.testing.assert_allclose(sorted(s.imag), [-0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(s.real, 0, atol=1e-15)
    with pytest.raises(ValueError):
        compute_spectrum(np.ones((2, 3)))
    with pytest.raises(ValueError):
        compute_spectrum([[np.nan, 0], [0, 1]])


def test_multiplicities_cluster():
    s = Spectrum((0.5, 0.5 + 1e-12, 0.1), 3)
    assert [c for _, c in s.multiplicities()] == [2, 1]


def test_resonance_examples():
    r = check_k_nonresonant([E2], [E1, E2], 2)
    assert [(w.target_index, w.m) for w in r.witnesses] == [(0, (2, 0))]
    assert r.nonresonant_up_to == 1
    a = math.sqrt(2) - 1
    r = check_k_nonresonant([math.exp(-(2 + a))], [E1, math.exp(-(2 + a))], 10)
    assert r.nonresonant and r.nonresonant_up_to == 10
    r = check_k_nonresonant([E2], [E1, E2], 1)
    assert r.nonresonant and not r.witnesses
    r = check_k_nonresonant([math.exp(-(2 + a))], [E1, math.exp(-(2 + a))], INF)
    assert r.nonresonant and r.nonresonant_up_to == INF and r.checked_up_to >= 3
    with pytest.raises(ValueError):
        check_k_nonresonant([0.5], [1.2], INF)


def test_infinite_bound_is_sharp_enough():
    # with rho(Y) = e^-1 no product of degree > 5 reaches e^-5
    r = check_k_nonresonant([math.exp(-5)], [E1], INF)
    assert [w.m for w in r.witnesses] == [(5,)]


@given(st.integers(0, 2**31 - 1))
def test_resonance_matches_naive_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    k = int(rng.integers(1, 7))
    lam = random_spectrum(rng, n)
    # targets: random, plus planted products of the source spectrum
    mu = list(random_spectrum(rng, int(rng.integers(1, 4))))
    for _ in range(int(rng.integers(0, 3))):
        m = rng.integers(0, 3, n)
        if 2 <= m.sum() <= k:
            mu.append(complex(np.prod(lam ** m)))
    mu = np.array(mu)
    rep = check_k_nonresonant(mu, lam, k)
    got = {(w.target_index, w.m) for w in rep.witnesses}
    assert got == naive_witnesses(mu, lam, k, rep.tolerance)
    for w in rep.witnesses:
        assert 2 <= sum(w.m) <= k and w.defect <= rep.tolerance[w.target_index]


def test_spread_examples():
    s = spectral_spread([E2], [E1, E2])
    assert abs(s.value - 2.0) < 1e-15 and s.attained_by == (0, 0)
    assert spectral_spread([0.5], [0.5]).value == 1.0
    s = spectral_spread([0.25], [0.5, 0.1])
    assert abs(s.value - 2.0) < 1e-15 and s.attained_by == (0, 0)
    with pytest.raises(ValueError):
        spectral_spread([0.5], [1.0])
    with pytest.raises(ValueError):
        spectral_spread([0.0], [0.5])


@given(st.integers(0, 2**31 - 1))
def test_spread_self_at_least_one_and_similarity_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    lam = random_spectrum(rng, n)
    Y = np.diag(lam)
    assert spectral_spread(lam, lam).value >= 1 - 1e-12
    T = rng.standard_normal((n, n)) + 3 * np.eye(n)
    Y2 = T @ Y @ np.linalg.inv(T)
    X = np.diag(random_spectrum(rng, 2))
    S = rng.standard_normal((2, 2)) + 3 * np.eye(2)
    X2 = S @ X @ np.linalg.inv(S)
    a = spectral_spread(compute_spectrum(X), compute_spectrum(Y)).value
    b = spectral_spread(compute_spectrum(X2), compute_spectrum(Y2)).value
    assert abs(a - b) <= 1e-8 * max(1, abs(a))


def test_hypothesis_zones():
    h = check_hypotheses([E2], [E1, E2], 3)
    assert h.zone == "strict" and not h.existence  # resonant
    h = check_hypotheses([E2], [E1, E2], 2)
    assert h.zone == "boundary"
    h = check_hypotheses([math.exp(-3.5)], [E1, math.exp(-3.5)], 3)
    assert h.zone == "violated" and not h.existence
    a = math.sqrt(2) - 1
    h = check_hypotheses([math.exp(-(2 + a))], [E1, math.exp(-(2 + a))], 3)
    assert h.zone == "strict" and h.existence and h.uniqueness


def test_seed_covector_examples():
    s = seed_covector(np.diag([E1, E2]), E2)
    np.testing.assert_allclose(s.w, [0, 1], atol=1e-15)
    s = seed_covector(np.diag([E1, E2]), E1)
    np.testing.assert_allclose(s.w, [1, 0], atol=1e-15)
    Y = np.array([[0.5, 1.0], [0.0, 0.4]])
    s = seed_covector(Y, 0.4)
    assert np.linalg.norm(s.w @ Y - 0.4 * s.w) <= 1e-12
    assert abs(np.linalg.norm(s.w) - 1) < 1e-14
    with pytest.raises(ValueError):
        seed_covector(Y, 0.3)


@given(st.integers(0, 2**31 - 1))
def test_seed_covector_residual_and_determinism(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    Y = rng.standard_normal((n, n))
    target = complex(np.linalg.eigvals(Y)[int(rng.integers(0, n))])
    s = seed_covector(Y, target)
    resid = np.linalg.norm(s.w @ Y - target * s.w)
    assert resid == pytest.approx(s.residual, abs=1e-15)
    assert s.residual <= 1e-8 * max(1, abs(target))
    j = int(np.argmax(np.abs(s.w) >= (1 - 1e-9) * np.abs(s.w).max()))
    assert abs(s.w[j].imag) < 1e-12 and s.w[j].real > 0
    np.testing.assert_array_equal(seed_covector(Y, target).w, s.w)


def test_intertwining_residual():
    Y = np.diag([E1, E2])
    assert intertwining_residual([[0, 1]], Y, [[E2]]) == 0
    assert intertwining_residual(np.eye(2), Y, Y) == 0
    assert intertwining_residual([[1, 0]], Y, [[E2]]) == pytest.approx(E1 - E2, abs=1e-15)
    assert abs(E1 - E2 - 0.23254) < 1e-5
    with pytest.raises(ValueError):
        intertwining_residual([[1, 0, 0]], Y, [[E2]])


@given(st.integers(0, 2**31 - 1))
def test_left_eigenvector_intertwines(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    Y = rng.standard_normal((n, n))
    lam = complex(np.linalg.eigvals(Y)[0])
    w = seed_covector(Y, lam).w
    assert intertwining_residual(w[None, :], Y, [[lam]]) <= 1e-8 * max(1, abs(lam))
