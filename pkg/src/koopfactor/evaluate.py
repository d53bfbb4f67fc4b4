"""Pointwise evaluation of linearizing factors by pulling back along orbits.

An approximant ``P`` with ``P o Phi^1 = e^A P + (flat remainder)`` is
refined into the exact factor via ``psi(x) = lim_t e^{-tA} P(Phi^t(x))``.
The limit is sampled at ``t_j = j * step``; the iteration stops on a small
Cauchy gap and reports divergence as a first-class outcome.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .factor import PolynomialFactor
from .flow import FlowError, FlowHandle, dense_orbit, flow_to

# absolute tolerance small enough that step control is purely relative;
# orbits contract to the attractor and absolute control would swamp the
# components that the factor amplifies by e^{-tA}
RELATIVE_ATOL = 1e-300
# gaps of integrand samples below this relative size are integration noise
NOISE_FLOOR = 1e-8


class DivergenceDetected(ArithmeticError):
    """The pulled-back sequence is not Cauchy.

    ``history`` holds the tail of ``(t, value, gap)`` records.
    """

    def __init__(self, reason: str, history: Sequence[tuple]):
        super().__init__(reason)
        self.reason = reason
        self.history = list(history)


@dataclass(frozen=True)
class EigenfunctionModel:
    """Approximant plus flow plus convergence policy.

    Parameters
    ----------
    approximant : callable ``x -> C^m`` (a :class:`PolynomialFactor` or any
        function such as a closed-form guess).
    flow : dynamics.
    linear : generator ``A`` for flows, ``e^A`` for maps; ``(m, m)``.
    step : sampling step ``dt`` (integer for maps).
    tol : Cauchy tolerance, relative to ``1 + |psi_j|``.
    max_steps : iteration cap.
    divergence_threshold : iterate norm regarded as divergent.
    """

    approximant: Callable
    flow: FlowHandle
    linear: np.ndarray
    step: float = 1.0
    tol: float = 1e-10
    max_steps: int = 400
    divergence_threshold: float = 1e8
    strikes: int = 3

    def __post_init__(self):
        object.__setattr__(self, "linear", np.atleast_2d(np.asarray(self.linear)))
        if self.flow.discrete and float(self.step) != int(self.step):
            raise ValueError("maps need an integer step")

    @classmethod
    def from_factor(cls, factor: PolynomialFactor, flow: FlowHandle, **policy) -> "EigenfunctionModel":
        if flow.discrete:
            linear = factor.eA
        else:
            if factor.A is None:
                raise ValueError("flow mode needs a factor with a generator A")
            linear = factor.A
        return cls(factor, flow, linear, **policy)

    @property
    def m(self) -> int:
        return self.linear.shape[0]

    def with_policy(self, **policy) -> "EigenfunctionModel":
        return replace(self, **policy)

    def propagator(self, t: float) -> np.ndarray:
        """``e^{tA}`` (``t`` integer for maps)."""
        return linear_propagator(self.linear, t, discrete=self.flow.discrete)


def linear_propagator(linear: np.ndarray, t: float, *, discrete: bool = False) -> np.ndarray:
    """``e^{tA}`` via eigendecomposition when well conditioned, else ``expm``.

    For maps ``linear`` is ``e^A`` and ``t`` an integer.
    """
    L = np.atleast_2d(np.asarray(linear))
    w, V = np.linalg.eig(L)
    if np.linalg.cond(V) < 1e8:
        if discrete:
            d = w.astype(complex) ** int(t)
        else:
            d = np.exp(t * w.astype(complex))
        out = (V * d) @ np.linalg.inv(V)
    elif discrete:
        out = np.linalg.matrix_power(L if t >= 0 else np.linalg.inv(L), abs(int(t))).astype(complex)
    else:
        out = scipy.linalg.expm(t * L).astype(complex)
    if np.isrealobj(L) and np.max(np.abs(out.imag), initial=0.0) <= 1e-12 * max(1.0, np.max(np.abs(out))):
        return out.real
    return out


@dataclass(frozen=True)
class EvalResult:
    value: np.ndarray
    steps_used: int
    converged: bool
    cauchy_gap: float
    flagged_divergent: bool = False
    reason: str = ""


class _DivergenceMonitor:
    """Three-strike rule on the gap sequence plus a norm threshold.

    Gaps below ``floor * (1 + norm)`` are treated as integration noise and
    never count as growth.
    """

    def __init__(self, threshold: float, strikes: int, floor: float = 0.0):
        self.threshold = threshold
        self.strikes = strikes
        self.floor = floor
        self.min_gap = math.inf
        self.last_gap = None
        self.count = 0

    def update(self, gap: float, norm: float) -> str:
        if not math.isfinite(norm) or norm > self.threshold:
            return f"iterate norm {norm:.3g} exceeds {self.threshold:.3g}"
        if self.last_gap is not None and gap > self.last_gap:
            self.count += 1
        else:
            self.count = 0
        self.last_gap = gap
        self.min_gap = min(self.min_gap, gap)
        if (self.count >= self.strikes and gap > 10 * self.min_gap
                and gap > self.floor * (1 + norm)):
            return f"Cauchy gap grew {self.count} times in a row to {gap:.3g}"
        return ""


def _step(flow: FlowHandle, y, dt):
    if flow.discrete:
        return flow_to(flow, y, int(dt))
    return flow_to(flow, y, dt, atol=RELATIVE_ATOL)


def refine_at(model: EigenfunctionModel, x, *, raise_on_divergence: bool = True) -> EvalResult:
    """``psi(x)`` as the limit of ``e^{-t_j A} P(Phi^{t_j}(x))``.

    Raises
    ------
    DivergenceDetected
        (unless ``raise_on_divergence`` is false, in which case the result is
        flagged) when the gap grows ``strikes`` times in a row beyond ten
        times its minimum or the iterate norm exceeds the threshold.
    """
    y = np.asarray(x, dtype=float)
    psi = np.asarray(model.approximant(y))
    mon = _DivergenceMonitor(model.divergence_threshold, model.strikes, 100 * model.tol)
    history: list[tuple] = [(0.0, psi, math.nan)]
    gap = math.inf
    for j in range(1, model.max_steps + 1):
        t = j * model.step
        y = _step(model.flow, y, model.step)
        new = model.propagator(-t) @ np.asarray(model.approximant(y))
        gap = float(np.max(np.abs(new - psi)))
        norm = float(np.max(np.abs(new)))
        psi = new
        history = (history + [(t, psi, gap)])[-10:]
        if gap <= model.tol * (1 + norm):
            return EvalResult(psi, j, True, gap)
        reason = mon.update(gap, norm)
        if reason:
            if raise_on_divergence:
                raise DivergenceDetected(reason, history)
            return EvalResult(psi, j, False, gap, True, reason)
    return EvalResult(psi, model.max_steps, False, gap)


def psi(model: EigenfunctionModel, x) -> np.ndarray:
    return refine_at(model, x).value


def semiconjugacy_residual(model: EigenfunctionModel, samples, t: float) -> float:
    """``max |psi(Phi^t x) - e^{tA} psi(x)|`` over the samples."""
    if model.flow.discrete and float(t) != int(t):
        raise ValueError("maps need integer t")
    E = model.propagator(t)
    worst = 0.0
    for x in np.atleast_2d(np.asarray(samples, dtype=float)):
        a = refine_at(model, x).value
        xt = flow_to(model.flow, x, t) if model.flow.discrete else flow_to(model.flow, x, t, atol=RELATIVE_ATOL)
        b = refine_at(model, xt).value
        worst = max(worst, float(np.max(np.abs(b - E @ a))))
    return worst


# Laplace averages ------------------------------------------------------------

def laplace_average_at(model: EigenfunctionModel, x, mu: complex, horizon: float, *,
                       quad_step: float = 0.5, nodes: int = 8,
                       raise_on_divergence: bool = True) -> np.ndarray:
    """``(1/T) int_0^T e^{-mu t} P(Phi^t(x)) dt`` by composite Gauss-Legendre.

    The orbit is resolved with a dense RK solution.  Converges like ``1/T``
    (slower than :func:`refine_at`); the horizon is limited by underflow of
    ``Phi^t(x) - x0`` for strongly contracting directions.  Divergence is
    judged on integer-time samples of the integrand with the same rule as
    :func:`refine_at`.
    """
    if model.flow.discrete:
        raise ValueError("Laplace averages are implemented for flows")
    x = np.asarray(x, dtype=float)
    T = float(horizon)
    if T <= 0:
        raise ValueError("horizon must be positive")
    orbit = dense_orbit(model.flow, x, T, atol=RELATIVE_ATOL)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    cells = max(1, int(math.ceil(T / quad_step)))
    edges = np.linspace(0.0, T, cells + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    ts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    ws = (half[:, None] * gw[None, :]).ravel()

    # divergence screen on integer times
    mon = _DivergenceMonitor(model.divergence_threshold, model.strikes, NOISE_FLOOR)
    prev = None
    history = []
    for t in np.arange(1.0, math.floor(T) + 1):
        v = np.exp(-mu * t) * np.asarray(model.approximant(orbit(t)))
        if prev is not None:
            gap = float(np.max(np.abs(v - prev)))
            history = (history + [(t, v, gap)])[-10:]
            reason = mon.update(gap, float(np.max(np.abs(v))))
            if reason:
                if raise_on_divergence:
                    raise DivergenceDetected("Laplace integrand: " + reason, history)
                return np.full(model.m, np.nan, dtype=complex)
        prev = v

    ys = orbit(ts)
    vals = np.asarray(model.approximant(ys))
    vals = vals.reshape(-1, ts.size)
    return (vals * (np.exp(-mu * ts) * ws)[None, :]).sum(axis=1) / T


# grids -----------------------------------------------------------------------

@dataclass
class GridTable:
    """Tabulated evaluations; rows follow graded-lex order of grid indices."""

    n: int
    m: int
    rows: list = field(default_factory=list)
    extra: tuple = ()

    @property
    def header(self) -> list:
        h = [f"x{i + 1}" for i in range(self.n)]
        for pre in ("re", "im", "abs"):
            h += [f"{pre}_{j + 1}" for j in range(self.m)]
        return h + ["converged", "steps"] + list(self.extra)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue() if fh is None else ""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def grid_nodes(lo: Sequence[float], hi: Sequence[float], resolution: Sequence[int]) -> list:
    """Grid points ordered by (sum of indices, indices)."""
    axes = [np.linspace(a, b, int(r)) if int(r) > 1 else np.array([0.5 * (a + b)])
            for a, b, r in zip(lo, hi, resolution)]
    idx = list(np.ndindex(*[len(a) for a in axes]))
    idx.sort(key=lambda t: (sum(t), t))
    return [np.array([axes[d][i] for d, i in enumerate(t)]) for t in idx]


def _node_record(evaluate, x, m, extra_fn, n_extra):
    try:
        res = evaluate(x)
        val = np.asarray(res.value, dtype=complex).reshape(m)
        ok, steps = bool(res.converged), int(res.steps_used)
    except (ArithmeticError, FlowError, ValueError, RuntimeError):
        val, ok, steps = np.full(m, np.nan, dtype=complex), False, 0
    row = list(x) + list(val.real) + list(val.imag) + list(np.abs(val)) + [ok, steps]
    if extra_fn is not None:
        try:
            row += list(extra_fn(x))
        except (ArithmeticError, FlowError, ValueError, RuntimeError):
            row += [math.nan] * n_extra
    return row


def grid_eval(model, lo, hi, resolution, *, threads: int = 1, evaluate: Callable | None = None,
              extra: Callable | None = None, extra_columns: Sequence[str] = ()) -> GridTable:
    """Evaluate on every node of a box grid; per-node failures are recorded.

    ``evaluate`` defaults to non-raising :func:`refine_at` on ``model``;
    ``extra`` adds columns named ``extra_columns`` (e.g. asymptotic phase).
    """
    nodes = grid_nodes(lo, hi, resolution)
    if evaluate is None:
        def evaluate(x):
            return refine_at(model, x, raise_on_divergence=False)
    m = model.m
    k = len(extra_columns)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(lambda x: _node_record(evaluate, x, m, extra, k), nodes))
    else:
        rows = [_node_record(evaluate, x, m, extra, k) for x in nodes]
    return GridTable(len(lo), m, rows, tuple(extra_columns))
