"""Asymptotic phase and isostable coordinates of an attracting limit cycle.

The isostable factor is built on the affine section ``Sigma = x0 + E^s``
through the base point.  Jet transport of ``dX/du = (tau + s) f(X)`` from
``x0 + S z`` gives the Taylor data of the flow near one period; solving
``<n, X - x0> = 0`` for the time correction ``s(z)`` yields the section
return map ``Pi`` together with its return-time offset.  An eigenfunction
``psi`` restricted to the section satisfies

    psi(Pi(z)) = e^{tau A} e^{s(z) A} psi(z),

which is a homological problem with a jet multiplier (see
:func:`koopfactor.factor.approximate_factor`).  Points of the basin are then
pulled to the section along the flow and the extension
``psi(x) = e^{-T A} psi(Phi^T x)`` is applied.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .evaluate import DivergenceDetected, EvalResult, linear_propagator
from .factor import PolynomialFactor, approximate_factor
from .flow import (FlowHandle, LimitCycle, closest_orbit_time, dense_orbit, flow_to,
                   jet_transport, rebase_cycle)
from .jet import Jet, MapJet, compose
from .multiindex import monomials_of_degree, table
from .spectral import seed_covector

# cycle computations need the integrator well below the phase/isostable
# tolerances because section coordinates are differences of O(1) states
CYCLE_RTOL = 1e-13
CYCLE_ATOL = 1e-15
# observed state error of crossing points computed by direct integration
STATE_NOISE = 64 * np.finfo(float).eps


class SectionError(RuntimeError):
    """A point could not be carried onto the section near the base point."""


def _flow(flow: FlowHandle, x, t):
    return flow_to(flow, x, t, rtol=CYCLE_RTOL, atol=CYCLE_ATOL)


def _orbit(flow: FlowHandle, x, t):
    return dense_orbit(flow, x, t, rtol=CYCLE_RTOL, atol=CYCLE_ATOL)


# phase ---------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseModel:
    """Reference orbit over one period plus convergence settings.

    ``psi_theta(x0) = 1`` and ``psi_theta(Phi^t x) = e^{2 pi i t / tau} psi_theta(x)``.
    """

    cycle: LimitCycle
    flow: FlowHandle
    orbit: object
    tol: float = 1e-10
    max_periods: int = 2000

    @property
    def tau(self) -> float:
        return self.cycle.tau


def build_phase_model(flow: FlowHandle, cycle: LimitCycle, *, tol: float = 1e-10,
                      max_periods: int = 2000) -> PhaseModel:
    return PhaseModel(cycle, flow, _orbit(flow, cycle.x0, cycle.tau), tol, max_periods)


def _nearest(pm_orbit, tau, flow, y) -> tuple[float, float]:
    s = closest_orbit_time(pm_orbit, tau, y, flow.f)
    return s, float(np.linalg.norm(pm_orbit(s) - y))


def asymptotic_phase_time(pm: PhaseModel, x) -> float:
    """Phase of ``x`` as a time ``s`` in ``[0, tau)`` along the reference orbit."""
    y = np.asarray(x, dtype=float)
    scale = max(1.0, float(np.max(np.abs(pm.cycle.x0))))
    for _ in range(pm.max_periods + 1):
        s, d = _nearest(pm.orbit, pm.tau, pm.flow, y)
        if d <= pm.tol * scale:
            return s
        y = _flow(pm.flow, y, pm.tau)
    raise SectionError(f"orbit did not approach the cycle within {pm.max_periods} periods")


def asymptotic_phase_at(pm: PhaseModel, x) -> complex:
    """``psi_theta(x) = exp(2 pi i s / tau)`` for asymptotic phase time ``s``."""
    return cmath.exp(2j * math.pi * asymptotic_phase_time(pm, x) / pm.tau)


# section factor ---------------------------------------------------------------

@dataclass(frozen=True)
class SectionData:
    """Jets of the section return map and of its return-time offset."""

    return_map: MapJet  # Pi(z), zero constant
    time_offset: Jet    # s(z), zero constant
    k: int


def section_jets(flow: FlowHandle, cycle: LimitCycle, k: int) -> SectionData:
    """Order-``k`` jets of ``Pi`` and ``s`` in section coordinates ``z``."""
    n = cycle.n
    q = n - 1
    p = q + 1
    x0, S, w = cycle.x0, cycle.stable_basis, cycle.phase_covector
    init = []
    for i in range(n):
        c = np.zeros(table(p, k).size)
        c[0] = x0[i]
        if k >= 1:
            c[1:1 + q] = S[i]
        init.append(Jet(c, p, k))
    scale = Jet.variable(q, cycle.tau, p, k)
    X = jet_transport(flow, MapJet(init), 1.0, scale=scale, rtol=CYCLE_RTOL, atol=CYCLE_ATOL)
    dev = [X[i] - x0[i] for i in range(n)]
    g = sum((w[i] * dev[i] for i in range(n)), Jet.constant(0.0, p, k))
    c = g.c[1 + q] if k >= 1 else 1.0  # d g / d s at the origin (= 1 by normalization)
    zs = [Jet.variable(j, 0.0, q, k) for j in range(q)]
    s = Jet.constant(0.0, q, k)
    for _ in range(k + 1):
        G = compose([g], zs + [s])[0]
        s = s - G / c
        s.c[0] = 0.0
    Xz = compose(dev, zs + [s])
    Pi = []
    for j in range(q):
        comp = sum((S[i, j] * Xz[i] for i in range(n)), Jet.constant(0.0, q, k))
        comp.c[0] = 0.0
        Pi.append(comp)
    return SectionData(MapJet(Pi), s, k)


def _time_multiplier(A: np.ndarray, s: Jet) -> np.ndarray:
    """Jet coefficients of ``exp(s(z) A)``: shape ``(m, m, N)``."""
    m = A.shape[0]
    N = s.c.size
    out = np.zeros((m, m, N), dtype=np.result_type(A, s.c, float))
    power = Jet.constant(1.0, s.n, s.k)
    Aj = np.eye(m)
    for j in range(s.k + 1):
        out += (Aj / math.factorial(j))[:, :, None] * power.c[None, None, :]
        power = power * s
        Aj = Aj @ A
    return out


@dataclass(frozen=True)
class IsostableModel:
    """Section factor, linear model and evaluation policy.

    ``covector`` is the ambient derivative of ``psi`` at ``x0`` (rows
    annihilate ``f(x0)``); ``factor`` acts on section coordinates.
    """

    cycle: LimitCycle
    flow: FlowHandle
    factor: PolynomialFactor
    A: np.ndarray
    covector: np.ndarray
    tol: float = 1e-9
    max_periods: int = 500
    reach: float = 0.5
    divergence_threshold: float = 1e8

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.factor.k


def ambient_covector(cycle: LimitCycle, B, f0) -> np.ndarray:
    """Ambient derivative for section covectors ``B``: ``B S^T`` with its
    component along ``f(x0)`` removed."""
    C = np.atleast_2d(np.asarray(B)) @ cycle.stable_basis.T
    return C - np.outer(C @ f0, cycle.phase_covector)


def _target_linear_model(cycle: LimitCycle, target) -> tuple[np.ndarray, np.ndarray]:
    """``(A, B)`` on section coordinates for a named or numeric target."""
    Ms = cycle.restricted_monodromy
    q = Ms.shape[0]
    if isinstance(target, str) and target in ("floquet", "sternberg", "all-principal"):
        A = scipy.linalg.logm(Ms) / cycle.tau
        if np.max(np.abs(np.imag(A)), initial=0.0) <= 1e-12 * max(1.0, np.max(np.abs(A))):
            A = np.real(A)
        return np.atleast_2d(A), np.eye(q)
    if isinstance(target, str) and target == "slowest":
        lam = cycle.floquet_exponents[0]
    else:
        lam = complex(target)
    mult = cmath.exp(lam * cycle.tau)
    seed = seed_covector(Ms, mult, tol=1e-7 * max(1.0, abs(mult)))
    A = np.array([[lam]])
    B = seed.w[None, :]
    if abs(lam.imag) <= 1e-14 and not np.any(np.abs(B.imag) > 1e-14):
        A, B = A.real, B.real
    return A, B


def build_isostable_model(flow: FlowHandle, cycle: LimitCycle, k: int, *, target="slowest",
                          covector=None, A=None, tol: float = 1e-9, max_periods: int = 500,
                          reach: float = 0.5) -> IsostableModel:
    """Section factor for ``target``.

    Parameters
    ----------
    target : ``"slowest"`` (largest-modulus stable multiplier),
        ``"floquet"`` (``A = log(M_s)/tau``, ``B = I``), or a complex Floquet
        exponent.  Ignored when ``covector`` and ``A`` are given.
    covector : ambient covector(s) ``(m, n)`` with ``covector M = e^{tau A} covector``.
    """
    if k < 2:
        raise ValueError("isostable evaluation needs k >= 2")
    if covector is not None:
        if A is None:
            raise ValueError("an explicit covector needs its linear model A")
        A = np.atleast_2d(np.asarray(A))
        B = np.atleast_2d(np.asarray(covector)) @ cycle.stable_basis
    else:
        A, B = _target_linear_model(cycle, target)
    sec = section_jets(flow, cycle, k)
    eA = linear_propagator(A, cycle.tau)
    E = _time_multiplier(A, sec.time_offset)
    P = approximate_factor(sec.return_map, eA, B, multiplier=E, A=A, mode="section", gate_tol=1e-7)
    C = ambient_covector(cycle, B, flow.f(cycle.x0))
    return IsostableModel(cycle, flow, P, np.atleast_2d(A), C, tol, max_periods, reach)


def _crossings(model: IsostableModel, y, span: float):
    """Section crossings near ``x0`` of the orbit of ``y`` within ``[0, span]``.

    Yields ``(t, point)`` in time order.  Crossings are located on the dense
    interpolant, then the point is recomputed by direct integration (the
    interpolant is far less accurate than the step endpoints) and nudged
    along ``f`` onto the section.
    """
    c = model.cycle
    w, x0 = c.phase_covector, c.x0
    orbit = _orbit(model.flow, y, span)
    grid = np.linspace(0.0, span, 256 + 1)
    pts = orbit(grid)
    h = w @ (pts - x0[:, None])
    near = np.linalg.norm(pts - x0[:, None], axis=0) <= 2 * model.reach
    for j in np.nonzero((h[:-1] < 0) & (h[1:] >= 0) & (near[:-1] | near[1:]))[0]:
        t = scipy.optimize.brentq(lambda u: w @ (orbit(u) - x0), grid[j], grid[j + 1], xtol=1e-15)
        p = _flow(model.flow, y, t)
        for _ in range(2):
            fp = model.flow.f(p)
            dt = -(w @ (p - x0)) / (w @ fp)
            p = p + dt * fp
            t += dt
        yield t, p


def _diagonal_blocks(A: np.ndarray) -> list[np.ndarray]:
    """Index sets of the finest block-diagonal splitting of ``A``."""
    m = A.shape[0]
    link = np.abs(A) > 1e-12 * max(1.0, float(np.max(np.abs(A))))
    link = link | link.T
    label = -np.ones(m, dtype=int)
    for i in range(m):
        if label[i] >= 0:
            continue
        stack, label[i] = [i], i
        while stack:
            j = stack.pop()
            for q in np.nonzero(link[j] & (label < 0))[0]:
                label[q] = i
                stack.append(q)
    return [np.nonzero(label == v)[0] for v in np.unique(label)]


def isostable_at(model: IsostableModel, x, *, raise_on_divergence: bool = True) -> EvalResult:
    """``psi(x) = e^{-T A} P_s(z)`` with ``z`` the section coordinates of ``Phi^T(x)``.

    The orbit of ``x`` is followed period by period; each diagonal block of
    ``A`` takes the first crossing of the section near ``x0`` at which its
    truncated factor is accurate (next-term estimate below
    ``tol * (1 + |psi|)``).  Taking the earliest such crossing per block
    keeps the amplification ``e^{-T A}`` of integration error small, which
    matters for fast coordinates.
    """
    c = model.cycle
    tau = c.tau
    P = model.factor
    t_blk = table(P.n, P.k)
    top, sub = t_blk.block(P.k), t_blk.block(P.k - 1)
    scale = max(1.0, float(np.max(np.abs(c.x0))))
    pending = _diagonal_blocks(model.A)
    value = np.zeros(model.m, dtype=complex if np.iscomplexobj(P.coeffs) or np.iscomplexobj(model.A)
                     else float)
    latest = value.copy()
    gap = 0.0
    converged = True
    y = np.asarray(x, dtype=float)
    elapsed = 0.0
    history = []
    count = 0
    for _ in range(model.max_periods):
        for t_cross, p in _crossings(model, y, tau):
            count += 1
            T = elapsed + t_cross
            z = c.stable_basis.T @ (p - c.x0)
            if np.linalg.norm(z) > model.reach:
                continue
            mono = P.monomials(z)
            E = linear_propagator(model.A, -T)
            val = E @ (P.coeffs @ mono)
            tail = np.maximum(np.abs(E @ (P.coeffs[:, top] @ mono[top])),
                              np.abs(E @ (P.coeffs[:, sub] @ mono[sub])) * float(np.linalg.norm(z)))
            # state error amplified by e^{-TA}
            noise = np.abs(E @ P.B).max(axis=1) * STATE_NOISE * scale
            norm = float(np.max(np.abs(val)))
            history = (history + [(T, val, float(tail.max()))])[-10:]
            if not math.isfinite(norm) or norm > model.divergence_threshold:
                reason = f"isostable value {norm:.3g} exceeds threshold"
                if raise_on_divergence:
                    raise DivergenceDetected(reason, history)
                return EvalResult(val, count, False, float(tail.max()), True, reason)
            latest = val
            still = []
            for blk in pending:
                size = 1 + float(np.max(np.abs(val[blk])))
                if float(tail[blk].max()) <= model.tol * size:
                    value[blk] = val[blk]
                    gap = max(gap, float(tail[blk].max()))
                    converged &= bool(noise[blk].max() <= 10 * model.tol * size)
                else:
                    still.append(blk)
            pending = still
            if not pending:
                return EvalResult(value, count, converged, gap)
        y = _flow(model.flow, y, tau)
        elapsed += tau
    reason = "no section crossing met the truncation tolerance"
    if raise_on_divergence:
        raise DivergenceDetected(reason, history)
    if count == 0:
        raise SectionError("orbit never crossed the section near the base point")
    for blk in pending:
        value[blk] = latest[blk]
    return EvalResult(value, count, False, float(history[-1][2]) if history else math.inf, True, reason)


# Floquet normal form -------------------------------------------------------------

@dataclass(frozen=True)
class FloquetNormalForm:
    phase: PhaseModel
    iso: IsostableModel

    def __call__(self, x) -> tuple[complex, np.ndarray]:
        return asymptotic_phase_at(self.phase, x), isostable_at(self.iso, x).value

    def injectivity_diagnostic(self, samples) -> float:
        """Smallest pairwise distance between embedded sample images."""
        pts = []
        for x in np.atleast_2d(np.asarray(samples, dtype=float)):
            th, z = self(x)
            pts.append(np.concatenate([[th.real, th.imag], np.real(z), np.imag(z)]))
        pts = np.array(pts)
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        d[np.diag_indices_from(d)] = np.inf
        return float(d.min())


def floquet_normal_form(flow: FlowHandle, cycle: LimitCycle, k: int, **kw) -> FloquetNormalForm:
    """Phase plus the full vector of isostable coordinates (``A = log(M_s)/tau``, ``B = I``)."""
    return FloquetNormalForm(build_phase_model(flow, cycle),
                             build_isostable_model(flow, cycle, k, target="floquet", **kw))


# covariance -------------------------------------------------------------------------

def transported_covector(flow: FlowHandle, cycle: LimitCycle, covector, s: float) -> np.ndarray:
    """``covector (D Phi^s(x0))^{-1}``: the same eigenfunction's covector at ``Phi^s(x0)``
    up to the factor ``e^{sA}``."""
    mj = jet_transport(flow, MapJet.identity(cycle.x0, 1), s, rtol=CYCLE_RTOL, atol=CYCLE_ATOL)
    D = mj.linear_part().real
    return np.atleast_2d(covector) @ np.linalg.inv(D)


def rebased_models(flow: FlowHandle, model: IsostableModel, s: float):
    """Phase and isostable models rebuilt at ``Phi^s(x0)`` with transported normalization.

    The rebuilt functions equal ``e^{-2 pi i s/tau} psi_theta`` and
    ``e^{-sA} psi``.
    """
    new_cycle = rebase_cycle(flow, model.cycle, s)
    cov = transported_covector(flow, model.cycle, model.covector, s)
    iso = build_isostable_model(flow, new_cycle, model.k, covector=cov, A=model.A,
                                tol=model.tol, max_periods=model.max_periods, reach=model.reach)
    return build_phase_model(flow, new_cycle), iso


# eigenvalue lattice -----------------------------------------------------------------

def cycle_eigenvalue_lattice(cycle: LimitCycle, mu: complex, k: int, j_range: int,
                             tol: float = 1e-8) -> list[tuple[tuple, int]]:
    """All ``(m, j)`` with ``|m| <= k``, ``|j| <= j_range`` and
    ``|mu - m.lambda - 2 pi i j / tau| <= tol`` (excluding ``m = 0, j = 0``)."""
    lam = np.asarray(cycle.floquet_exponents, dtype=complex)
    return lattice_with_period(lam, cycle.tau, mu, k, j_range, tol)


def lattice_with_period(lam: Sequence[complex], tau: float, mu: complex, k: int, j_range: int,
                        tol: float = 1e-8) -> list[tuple[tuple, int]]:
    lam = np.asarray(lam, dtype=complex)
    out = []
    omega = 2 * math.pi / tau
    for d in range(0, k + 1):
        for m in monomials_of_degree(lam.size, d):
            base = complex(np.dot(m, lam)) if lam.size else 0j
            for j in range(-j_range, j_range + 1):
                if d == 0 and j == 0:
                    continue
                if abs(mu - base - 1j * omega * j) <= tol:
                    out.append((tuple(m), j))
    return out
