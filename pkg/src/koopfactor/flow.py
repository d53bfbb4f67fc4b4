"""Time-t maps, jet transport, fixed points and periodic orbits.

Continuous-time systems are integrated with scipy's DOP853 (explicit
Runge-Kutta of order 8 with embedded error estimates and dense output).
Jet transport integrates the Taylor coefficients of the flow map itself: the
state is a :class:`~koopfactor.jet.MapJet` seeded with the identity jet and
the right-hand side is the field evaluated in jet arithmetic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .jet import Jet, MapJet, compose
from .multiindex import table
from .parser import FieldProgram, eval_jets, field_jet

log = logging.getLogger(__name__)


class FlowError(RuntimeError):
    """Integration failed (step-size underflow or non-finite state)."""


class FixedPointError(RuntimeError):
    """Newton iteration did not locate an attracting fixed point."""


class PeriodicOrbitError(RuntimeError):
    """Shooting did not locate an attracting periodic orbit."""


@dataclass(frozen=True)
class FlowHandle:
    """A vector field (``discrete=False``) or map (``discrete=True``).

    For maps ``program`` evaluates ``F(x)``; only integer times are allowed.
    """

    program: FieldProgram
    discrete: bool = False
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = math.inf

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("integration tolerances must be positive")

    @property
    def n(self) -> int:
        return self.program.n

    def with_tolerances(self, rtol: float | None = None, atol: float | None = None) -> "FlowHandle":
        return replace(self, rtol=rtol or self.rtol, atol=atol or self.atol)

    def f(self, x) -> np.ndarray:
        return self.program(np.asarray(x))

    def rhs(self, t, y):
        return self.program(y)


def _check_integer_time(t) -> int:
    if float(t) != int(round(float(t))):
        raise ValueError("discrete-time systems accept integer times only")
    return int(round(float(t)))


def _first_step(fun, y0, t, rtol):
    # scipy's initial-step guess divides by rtol*|y| + atol, which overflows
    # for exactly zero components when atol is near the underflow limit
    y0 = np.asarray(y0)
    d0 = float(np.max(np.abs(y0))) if y0.size else 0.0
    d1 = float(np.max(np.abs(fun(0.0, y0)))) if y0.size else 0.0
    if d0 == 0.0 or d1 == 0.0:
        return min(abs(float(t)), 1e-3)
    return min(abs(float(t)), 0.01 * d0 / d1 * rtol ** 0.125)


def _solve(handle: FlowHandle, fun, y0, t, *, rtol=None, atol=None, dense=False, t_eval=None):
    rtol, atol = rtol or handle.rtol, atol or handle.atol
    kw = {}
    if atol < 1e-150 and float(t) != 0.0:
        kw["first_step"] = _first_step(fun, y0, t, rtol)
    sol = solve_ivp(fun, (0.0, float(t)), y0, method="DOP853", rtol=rtol, atol=atol,
                    max_step=handle.max_step, dense_output=dense, t_eval=t_eval, **kw)
    if not sol.success:
        raise FlowError(sol.message)
    if not np.all(np.isfinite(sol.y[:, -1])):
        raise FlowError("state became non-finite")
    return sol


def flow_to(handle: FlowHandle, x, t, *, rtol: float | None = None, atol: float | None = None) -> np.ndarray:
    """``Phi^t(x)``; exact iteration for maps.

    ``rtol``/``atol`` override the handle tolerances for this call.
    """
    x = np.asarray(x)
    x = x.astype(complex if np.iscomplexobj(x) else float)
    if handle.discrete:
        steps = _check_integer_time(t)
        if steps < 0:
            raise ValueError("maps cannot be iterated backward")
        for _ in range(steps):
            x = handle.f(x)
            if not np.all(np.isfinite(x)):
                raise FlowError("iterate became non-finite")
        return x
    if t == 0:
        return x.copy()
    if t < 0:
        log.warning("integrating backward in time (t=%g)", t)
    return _solve(handle, handle.rhs, x, t, rtol=rtol, atol=atol).y[:, -1]


def dense_orbit(handle: FlowHandle, x, t, *, rtol: float | None = None, atol: float | None = None):
    """Continuous extension ``s -> Phi^s(x)`` on ``[0, t]`` (scipy ``OdeSolution``)."""
    if handle.discrete:
        raise ValueError("dense orbits need a continuous-time system")
    return _solve(handle, handle.rhs, np.asarray(x, dtype=float), t,
                  rtol=rtol, atol=atol, dense=True).sol


# jet transport ---------------------------------------------------------------

def jet_transport(handle: FlowHandle, init: MapJet, t: float, *, scale: Jet | None = None,
                  rtol: float | None = None, atol: float | None = None) -> MapJet:
    """Integrate ``dX/du = scale * f(X)`` for ``u`` in ``[0, t]`` in jet arithmetic.

    ``init`` gives the Taylor data of the initial state as a function of the
    jet variables; ``scale`` (optional) is a jet in the same variables
    multiplying the field, e.g. an unknown period ``tau + s``.
    """
    if handle.discrete:
        raise ValueError("jet transport integrates continuous-time systems")
    p, k = init.n, init.k
    N = table(p, k).size
    dim = len(init)
    c0 = init.coefficients()
    cplx = np.iscomplexobj(c0) or (scale is not None and np.iscomplexobj(scale.c))
    dt = complex if cplx else float

    def rhs(_, y):
        rows = y.reshape(dim, N)
        jets = [Jet(r, p, k) for r in rows]
        fx = eval_jets(handle.program, jets)
        if scale is not None:
            fx = [scale * c for c in fx]
        return np.concatenate([c.c for c in fx])

    sol = _solve(handle, rhs, c0.astype(dt).ravel(), t, rtol=rtol, atol=atol)
    return MapJet.from_array(sol.y[:, -1].reshape(dim, N), p, k)


def time_one_map_jet(handle: FlowHandle, x0, k: int, *, t: float = 1.0, fixed_tol: float = 1e-8,
                     rtol: float | None = None, atol: float | None = None) -> MapJet:
    """Order-``k`` Taylor expansion of ``Phi^t`` about the fixed point ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    if handle.discrete:
        steps = _check_integer_time(t)
        Fj = field_jet(handle.program, x0, k)
        resid = np.max(np.abs(Fj.constant() - x0))
    else:
        resid = np.max(np.abs(handle.f(x0)))
    if resid > fixed_tol:
        raise FixedPointError(f"base point is not fixed (residual {resid:.3g})")
    if handle.discrete:
        shifted = MapJet([c - c.const for c in Fj])
        out = MapJet.identity(x0, k)
        for _ in range(steps):
            inner = MapJet([c - c.const for c in out])
            out = MapJet([c + x for c, x in zip(compose(shifted, inner), x0)])
        return out
    return jet_transport(handle, MapJet.identity(x0, k), t, rtol=rtol, atol=atol)


# fixed points ---------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointData:
    """Attracting fixed point ``x0`` and the Jacobian of the time-one map there.

    ``field_jacobian`` is ``Df(x0)`` for flows (``None`` for maps).
    """

    x0: np.ndarray
    jacobian: np.ndarray
    newton_residual: float
    field_jacobian: np.ndarray | None = None

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.jacobian))))


def _newton_fixed(handle: FlowHandle, x, tol: float, max_iter: int):
    """Damped Newton on ``f`` (flows) or ``F - id`` (maps)."""
    n = handle.n

    def resid_and_jac(y):
        J = field_jet(handle.program, y, 1)
        r = J.constant().real.astype(float)
        D = J.linear_part().real.astype(float)
        if handle.discrete:
            return r - y, D - np.eye(n)
        return r, D

    def polish(x, r, D):
        # a few extra full steps: downstream averages amplify the root error
        # by e^{-mu t}, so stop only when the residual no longer decreases
        nr = np.linalg.norm(r)
        for _ in range(3):
            if nr == 0.0:
                break
            try:
                y = x - np.linalg.solve(D, r)
                ry, Dy = resid_and_jac(y)
            except (np.linalg.LinAlgError, ArithmeticError):
                break
            ny = np.linalg.norm(ry)
            if not ny < nr:
                break
            x, r, D, nr = y, ry, Dy, ny
        return x, nr

    x = np.asarray(x, dtype=float).copy()
    r, D = resid_and_jac(x)
    for _ in range(max_iter):
        nr = np.linalg.norm(r)
        if nr <= tol:
            return polish(x, r, D)
        try:
            step = np.linalg.solve(D, -r)
        except np.linalg.LinAlgError as exc:
            raise FixedPointError("singular Jacobian in Newton iteration") from exc
        lam = 1.0
        while True:
            y = x + lam * step
            try:
                ry, Dy = resid_and_jac(y)
            except ArithmeticError:
                ry = None
            if ry is not None and np.all(np.isfinite(ry)) and np.linalg.norm(ry) < (1 - 1e-4 * lam) * nr:
                break
            lam *= 0.5
            if lam < 1e-8:
                # accept a full step when no decrease is found (quadratic regime noise)
                if nr <= 100 * tol:
                    return x, nr
                raise FixedPointError("damped Newton stalled")
        x, r, D = y, ry, Dy
    nr = np.linalg.norm(r)
    if nr <= tol:
        return polish(x, r, D)
    raise FixedPointError(f"Newton did not converge (residual {nr:.3g})")


def _fixed_point_data(handle: FlowHandle, x, resid) -> FixedPointData:
    D = field_jet(handle.program, x, 1).linear_part().real.astype(float)
    if handle.discrete:
        return FixedPointData(x, D, float(resid))
    return FixedPointData(x, scipy.linalg.expm(D), float(resid), D)


def find_fixed_point(handle: FlowHandle, guess, *, tol: float = 1e-12, max_iter: int = 100,
                     require_sink: bool = True) -> FixedPointData:
    """Locate an attracting fixed point near ``guess``.

    Newton may land on a repelling or saddle root; in that case the guess is
    first pushed forward along the dynamics (``t = 5, 10, 20, 40`` or as many
    map iterates) and Newton restarted, which selects the sink whose basin
    contains the guess.
    """
    guess = np.asarray(guess, dtype=float)
    starts = [guess]
    last_err = None
    for T in (5, 10, 20, 40):
        try:
            starts.append(flow_to(handle, guess, T))
        except FlowError:
            break
    for i, x in enumerate(starts):
        try:
            root, resid = _newton_fixed(handle, x, tol, max_iter)
        except FixedPointError as exc:
            last_err = exc
            continue
        data = _fixed_point_data(handle, root, resid)
        if not require_sink or data.spectral_radius < 1:
            return data
        log.info("rejecting non-attracting root %s (spectral radius %.4g)", root, data.spectral_radius)
        last_err = FixedPointError(f"root {root} is not attracting")
    raise last_err or FixedPointError("no attracting fixed point found")


# periodic orbits ---------------------------------------------------------------

@dataclass(frozen=True)
class LimitCycle:
    """Hyperbolic attracting periodic orbit anchored at ``x0``.

    Attributes
    ----------
    stable_basis : (n, n-1) orthonormal basis of the invariant complement
        ``E^s`` of the flow direction (the range of ``monodromy - I``).
    restricted_monodromy : ``S^T M S``, the monodromy acting on ``E^s``.
    phase_covector : left eigenvector of ``M`` for eigenvalue 1, scaled so
        that ``phase_covector @ f(x0) == 1``; it annihilates ``E^s``.
    floquet_multipliers : eigenvalues of ``restricted_monodromy`` by
        descending modulus, conjugate pairs adjacent (upper half first).
    floquet_exponents : principal ``log(multiplier) / tau``.
    """

    x0: np.ndarray
    tau: float
    monodromy: np.ndarray
    stable_basis: np.ndarray
    restricted_monodromy: np.ndarray
    phase_covector: np.ndarray
    floquet_multipliers: np.ndarray
    floquet_exponents: np.ndarray
    shooting_residual: float = 0.0

    @property
    def n(self) -> int:
        return self.x0.size


def _sort_multipliers(w: np.ndarray) -> np.ndarray:
    return w[np.lexsort((-w.imag, -np.round(np.abs(w), 12)))]


def _fix_sign(v: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(v)))
    return v if v[j] >= 0 else -v


def cycle_data(handle: FlowHandle, x0, tau: float, monodromy: np.ndarray, residual: float = 0.0,
               unit_tol: float = 1e-6) -> LimitCycle:
    """Assemble the Floquet data of a located cycle from its monodromy matrix."""
    x0 = np.asarray(x0, dtype=float)
    M = np.asarray(monodromy, dtype=float)
    n = x0.size
    fx = handle.f(x0)
    U, s, Vh = np.linalg.svd(M - np.eye(n))
    if s[-1] > unit_tol * max(1.0, s[0]):
        raise PeriodicOrbitError(f"monodromy has no unit multiplier (smallest singular value {s[-1]:.3g})")
    S = np.column_stack([_fix_sign(U[:, j]) for j in range(n - 1)]) if n > 1 else np.zeros((n, 0))
    Ms = S.T @ M @ S
    w = U[:, -1]  # left null vector of M - I
    w = w / (w @ fx)
    mult = _sort_multipliers(np.linalg.eigvals(Ms).astype(complex)) if n > 1 else np.zeros(0, complex)
    if np.any(np.abs(mult) >= 1):
        raise PeriodicOrbitError(f"cycle is not attracting: multipliers {mult}")
    if np.any((np.abs(mult.imag) <= 1e-14 * np.abs(mult)) & (mult.real < 0)):
        log.warning("negative real Floquet multiplier: exponent carries imaginary part pi/tau")
    expo = np.log(mult) / tau
    return LimitCycle(x0, float(tau), M, S, Ms, w, mult, expo, float(residual))


def monodromy(handle: FlowHandle, x0, tau: float, *, rtol: float = 1e-13,
              atol: float = 1e-15) -> tuple[np.ndarray, np.ndarray]:
    """``(Phi^tau(x0), D Phi^tau(x0))`` by first-order jet transport."""
    mj = jet_transport(handle, MapJet.identity(np.asarray(x0, dtype=float), 1), tau, rtol=rtol, atol=atol)
    return mj.constant().real, mj.linear_part().real


def find_periodic_orbit(handle: FlowHandle, guess, period_guess: float, *, tol: float = 1e-11,
                        max_iter: int = 40, settle_periods: tuple = (0, 10, 40),
                        rtol: float = 1e-13, atol: float = 1e-15, anchor: bool = True) -> LimitCycle:
    """Bordered Newton shooting on ``(x, tau)``.

    Each update ``(dx, dtau)`` solves
    ``[[M - I, f(Phi^tau x)], [f(x)^T, 0]] (dx, dtau) = (x - Phi^tau x, 0)``,
    i.e. the correction stays on the hyperplane through the current iterate
    orthogonal to the field.  If Newton fails from ``guess`` it is retried
    after integrating the guess forward by the given numbers of periods.
    With ``anchor`` the returned base point is the orbit point nearest to
    ``guess``, which makes the phase origin reproducible.
    """
    if handle.discrete:
        raise ValueError("periodic orbits are located for continuous-time systems only")
    n = handle.n
    last = None
    for settle in settle_periods:
        x = np.asarray(guess, dtype=float)
        if settle:
            try:
                x = flow_to(handle, x, settle * period_guess)
            except FlowError as exc:
                last = exc
                continue
        tau = float(period_guess)
        try:
            for _ in range(max_iter):
                if not (tau > 0 and np.isfinite(tau)):
                    raise PeriodicOrbitError("period estimate left (0, inf)")
                xt, M = monodromy(handle, x, tau, rtol=rtol, atol=atol)
                G = xt - x
                fx, fxt = handle.f(x), handle.f(xt)
                J = np.zeros((n + 1, n + 1))
                J[:n, :n] = M - np.eye(n)
                J[:n, n] = fxt
                J[n, :n] = fx
                step = np.linalg.solve(J, np.concatenate([-G, [0.0]]))
                x = x + step[:n]
                tau = tau + step[n]
                if np.linalg.norm(G) <= tol and np.linalg.norm(step) <= 1e3 * tol * max(1.0, tau):
                    if anchor:
                        x = _anchor(handle, x, tau, np.asarray(guess, dtype=float), rtol, atol)
                    xt, M = monodromy(handle, x, tau, rtol=rtol, atol=atol)
                    return cycle_data(handle, x, tau, M, float(np.linalg.norm(xt - x)))
            raise PeriodicOrbitError("shooting did not converge")
        except (PeriodicOrbitError, FlowError, np.linalg.LinAlgError, ArithmeticError) as exc:
            last = exc
            log.info("shooting from settle=%d failed: %s", settle, exc)
    raise PeriodicOrbitError(f"no periodic orbit found: {last}")


def closest_orbit_time(orbit, tau: float, y, f, *, samples: int = 512, iters: int = 30) -> float:
    """Time ``s`` in ``[0, tau)`` minimizing ``|orbit(s) - y|`` on a dense orbit.

    A grid search is refined by Newton on ``(orbit(s) - y) . f(orbit(s)) = 0``.
    """
    grid = np.linspace(0.0, tau, samples, endpoint=False)
    pts = orbit(grid)
    s = float(grid[np.argmin(np.sum((pts - np.asarray(y)[:, None]) ** 2, axis=0))])
    h = 1e-6 * tau
    for _ in range(iters):
        g = orbit(s % tau)
        fg = f(g)
        phi = (g - y) @ fg
        # derivative of phi along the orbit: |f|^2 + (g - y) . Df f
        gp, gm = orbit((s + h) % tau), orbit((s - h) % tau)
        dphi = fg @ fg + (g - y) @ (f(gp) - f(gm)) / (2 * h)
        if dphi <= 0:
            break
        ds = -phi / dphi
        s += ds
        if abs(ds) <= 1e-14 * tau:
            break
    return s % tau


def _anchor(handle, x, tau, guess, rtol, atol):
    orbit = dense_orbit(handle, x, tau, rtol=rtol, atol=atol)
    s = closest_orbit_time(orbit, tau, guess, handle.f)
    return flow_to(handle, x, s, rtol=rtol, atol=atol) if s > 0 else x


def rebase_cycle(handle: FlowHandle, cycle: LimitCycle, s: float) -> LimitCycle:
    """Same orbit with base point ``Phi^s(x0)``."""
    x = flow_to(handle, cycle.x0, s, rtol=1e-13, atol=1e-15)
    xt, M = monodromy(handle, x, cycle.tau)
    return cycle_data(handle, x, cycle.tau, M, float(np.linalg.norm(xt - x)))
