"""Command line front end: ``koopfactor <command> --config job.ini``.

Exit codes: 0 success, 1 configuration or other error, 2 hypothesis
failure (spread not below ``k + alpha`` without ``--force``, or a resonant
obstruction), 3 attractor not found, 4 divergence.  Errors also produce one
JSON line on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import config as cfgmod
from .classify import DefectiveLinearization, check_semisimple, cycle_monomials, monomial_basis_for_mu
from .cycle import build_isostable_model, build_phase_model, asymptotic_phase_at, isostable_at
from .evaluate import (DivergenceDetected, EigenfunctionModel, grid_eval, laplace_average_at,
                       refine_at)
from .factor import (DegenerateSolvable, PolynomialFactor, ResonantObstruction, approximate_factor,
                     dump_factor)
from .flow import (FixedPointError, FlowHandle, PeriodicOrbitError, find_fixed_point,
                   find_periodic_orbit, time_one_map_jet)
from .multiindex import table
from .parser import FieldDomainError, FieldSyntaxError, parse_field, parse_map
from .spectral import HypothesisReport, check_hypotheses, seed_covector

log = logging.getLogger("koopfactor")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_HYPOTHESIS = 2
EXIT_ATTRACTOR = 3
EXIT_DIVERGENCE = 4

COMMANDS = ("analyze", "linearize", "eigenfunction", "cycle", "classify")


class HypothesisFailure(RuntimeError):
    pass


class AttractorFailure(RuntimeError):
    pass


def _g(v) -> str:
    return "%.17g" % v


def _c(v) -> str:
    v = complex(v)
    if v.imag == 0:
        return _g(v.real)
    return f"{_g(v.real)}{'+' if v.imag >= 0 else '-'}{_g(abs(v.imag))}i"


def _vec(v) -> str:
    return "(" + ", ".join(_c(x) for x in np.ravel(v)) + ")"


# building blocks --------------------------------------------------------------

def build_flow(job: cfgmod.JobConfig) -> FlowHandle:
    s = job.system
    prog = parse_field(s.field, n=s.dim, params=s.params)
    if len(job.attractor.guess) != prog.n:
        raise cfgmod.ConfigError(f"guess has {len(job.attractor.guess)} coordinates, field has {prog.n}")
    return FlowHandle(prog, discrete=s.is_map)


@dataclass(frozen=True)
class PointAttractor:
    x0: np.ndarray
    jacobian: np.ndarray       # time-one map
    exponents: np.ndarray      # principal logs, slowest first
    generator: np.ndarray | None  # D f(x0) for flows

    @property
    def multipliers(self) -> np.ndarray:
        return np.exp(self.exponents)


def _order_exponents(lam: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=complex)
    return lam[np.lexsort((-lam.imag, -np.round(lam.real, 12)))]


def locate_point(handle: FlowHandle, guess) -> PointAttractor:
    try:
        fp = find_fixed_point(handle, guess)
    except (FixedPointError, FieldDomainError, ArithmeticError) as exc:
        raise AttractorFailure(f"no attracting fixed point: {exc}") from exc
    if handle.discrete:
        lam = np.log(np.linalg.eigvals(fp.jacobian).astype(complex))
    else:
        lam = np.linalg.eigvals(fp.field_jacobian).astype(complex)
    return PointAttractor(fp.x0, fp.jacobian, _order_exponents(lam), fp.field_jacobian)


def locate_cycle(handle: FlowHandle, guess, period):
    try:
        return find_periodic_orbit(handle, guess, period)
    except (PeriodicOrbitError, FieldDomainError, ArithmeticError) as exc:
        raise AttractorFailure(f"no attracting periodic orbit: {exc}") from exc


def _realify(*arrays):
    if all(not np.any(np.abs(np.imag(a)) > 1e-14 * max(1.0, float(np.max(np.abs(a)))))
           for a in arrays):
        return tuple(np.real(a) for a in arrays)
    return tuple(np.asarray(a, dtype=complex) for a in arrays)


def point_linear_model(att: PointAttractor, target, discrete: bool):
    """``(A or None, e^A, B)`` for a target on a point attractor."""
    n = att.x0.size
    if target == "sternberg":
        if discrete:
            return None, att.jacobian, np.eye(n)
        return att.generator, scipy.linalg.expm(att.generator), np.eye(n)
    if target == "floquet":
        raise cfgmod.ConfigError("target floquet needs a cycle attractor")
    if target in (None, "slowest"):
        lam = att.exponents[:1]
    elif target == "all-principal":
        lam = att.exponents
    else:
        lam = np.array([complex(target)])
    rows = []
    for mu in lam:
        mult = np.exp(mu)
        rows.append(seed_covector(att.jacobian, mult, tol=1e-7 * max(1.0, abs(mult))).w)
    B = np.array(rows)
    eA = np.diag(np.exp(lam))
    A = np.diag(lam)
    A, eA, B = _realify(A, eA, B)
    return (None if discrete else A), eA, B


def hypothesis_report(X, Y, job) -> HypothesisReport:
    return check_hypotheses(np.asarray(X), np.asarray(Y), job.analysis.k, job.analysis.alpha)


def gate(report: HypothesisReport, force: bool) -> list[str]:
    """Raise unless the spread is strictly below ``k + alpha``; ``force`` downgrades to a warning."""
    if report.zone == "strict":
        return []
    msg = (f"spectral spread {report.spread.value:.6g} is not below k + alpha = "
           f"{report.k + report.alpha:.6g} ({report.zone})")
    if not force:
        raise HypothesisFailure(msg)
    log.warning("%s; continuing because of --force", msg)
    return [f"warning: {msg}; continuing because of --force"]


def build_point_factor(handle: FlowHandle, att: PointAttractor, k: int, A, eA, B) -> tuple:
    """Factor plus warning notes; resonant obstructions propagate."""
    F = time_one_map_jet(handle, att.x0, k)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateSolvable)
        P = approximate_factor(F, eA, B, A=A, mode="map" if handle.discrete else "flow",
                               gate_tol=1e-7)
    notes = [f"warning: {w.message}" for w in caught if issubclass(w.category, DegenerateSolvable)]
    return P, notes


def factor_lines(P: PolynomialFactor, max_terms: int = 200) -> list[str]:
    """Nonzero coefficients, one per line, in graded-lex order."""
    t = table(P.n, P.k)
    out = []
    C = np.asarray(P.coeffs)
    scale = max(1.0, float(np.max(np.abs(C))))
    for r in range(1, t.size):
        for p in range(P.m):
            v = C[p, r]
            if abs(v) > 1e-13 * scale:
                out.append(f"  degree {int(t.degree[r])}, output {p + 1}, monomial "
                           f"{tuple(int(e) for e in t.exps[r])}: {_c(v)}")
    if len(out) > max_terms:
        out = out[:max_terms] + [f"  ... {len(out) - max_terms} more"]
    return out


def spectrum_lines(report: HypothesisReport, X, Y) -> list[str]:
    lines = ["source spectrum (linearization): " + ", ".join(_c(v) for v in Y),
             "target spectrum: " + ", ".join(_c(v) for v in X)]
    s = report.spread
    lines.append(f"spectral spread: {s.value:.10g} (mu_{s.attained_by[0] + 1}, lambda_{s.attained_by[1] + 1})"
                 f" vs k + alpha = {report.k + report.alpha:.10g}: {report.zone}")
    res = report.resonance
    if res.nonresonant:
        lines.append(f"nonresonance: k-nonresonant up to order {res.requested}")
    else:
        lines.append(f"nonresonance: resonant; nonresonant up to order {res.nonresonant_up_to}")
        for w in res.witnesses:
            lines.append(f"  witness mu_{w.target_index + 1} = lambda^{w.m} (defect {w.defect:.3e})")
    lines.append(f"uniqueness of the factor: {'holds' if report.uniqueness else 'not covered'}")
    lines.append(f"existence of the limit: {'holds' if report.existence else 'not covered'}")
    lines += [f"note: {n}" for n in report.notes]
    return lines


# output --------------------------------------------------------------------------------

class Job:
    def __init__(self, job: cfgmod.JobConfig, out: str | None, force: bool, threads: int, seed: int):
        self.cfg = job
        self.out = Path(out if out is not None else job.output.dir)
        self.force = force
        self.threads = max(1, threads)
        self.rng = np.random.default_rng(seed)
        self.summary: list[str] = []

    def say(self, *lines):
        self.summary.extend(lines)

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        with open(p, "w", newline="\n") as fh:
            fh.write(text)
        return p

    def finish(self):
        text = "\n".join(self.summary) + "\n"
        self.write(self.cfg.output.summary, text)
        sys.stdout.write(text)

    def samples(self, center) -> np.ndarray:
        g = self.cfg.analysis.grid
        c = np.asarray(center, dtype=float)
        if g is None:
            return c + 0.1 * self.rng.uniform(-1, 1, size=(self.cfg.analysis.samples, c.size))
        lo, hi = np.asarray(g.lo), np.asarray(g.hi)
        return lo + (hi - lo) * self.rng.uniform(size=(self.cfg.analysis.samples, lo.size))


def _header(job: Job, handle: FlowHandle, command: str):
    job.say(f"koopfactor {command}: {job.cfg.name}",
            f"system ({'map' if handle.discrete else 'flow'}, n = {handle.n}): {handle.program.pretty()}",
            f"k = {job.cfg.analysis.k}, alpha = {_g(job.cfg.analysis.alpha)}")


# commands ------------------------------------------------------------------------------

def _point_setup(job: Job, command: str, default_target):
    handle = build_flow(job.cfg)
    _header(job, handle, command)
    att = locate_point(handle, job.cfg.attractor.guess)
    target = job.cfg.analysis.target if job.cfg.analysis.target is not None else default_target
    A, eA, B = point_linear_model(att, target, handle.discrete)
    X = np.linalg.eigvals(np.atleast_2d(eA))
    report = hypothesis_report(X, att.multipliers, job.cfg)
    job.say(f"attractor: fixed point x0 = {_vec(att.x0)}",
            "exponents: " + ", ".join(_c(v) for v in att.exponents),
            f"target: {target}")
    job.say(*spectrum_lines(report, X, att.multipliers))
    return handle, att, target, A, eA, B, report


def _cycle_spectra(cyc, target):
    Y = np.asarray(cyc.floquet_multipliers)
    if target in (None, "slowest"):
        X = Y[:1]
    elif target in ("floquet", "all-principal", "sternberg"):
        X = Y
    else:
        X = np.array([np.exp(complex(target) * cyc.tau)])
    return X, Y


def cmd_analyze(job: Job) -> int:
    a = job.cfg.attractor
    if a.kind == "point":
        _point_setup(job, "analyze", "slowest")
    else:
        handle = build_flow(job.cfg)
        _header(job, handle, "analyze")
        cyc = locate_cycle(handle, a.guess, a.period)
        target = job.cfg.analysis.target or "slowest"
        X, Y = _cycle_spectra(cyc, target)
        report = hypothesis_report(X, Y, job.cfg)
        job.say(f"attractor: periodic orbit through x0 = {_vec(cyc.x0)}, tau = {_g(cyc.tau)}",
                "Floquet exponents: " + ", ".join(_c(v) for v in cyc.floquet_exponents),
                f"target: {target}")
        job.say(*spectrum_lines(report, X, Y))
    job.finish()
    return EXIT_OK


def _refine_grid(job: Job, model: EigenfunctionModel, mu=None):
    g = job.cfg.analysis.grid
    flags: list[str] = []
    lock = threading.Lock()

    def evaluate(x):
        res = refine_at(model, x, raise_on_divergence=False)
        if res.flagged_divergent:
            with lock:
                flags.append(f"{_vec(x)}: {res.reason}")
        return res

    extra, cols = None, ()
    if mu is not None:
        cols = ("laplace_re", "laplace_im")

        def extra(x):
            v = laplace_average_at(model, x, mu, job.cfg.analysis.laplace_horizon,
                                   raise_on_divergence=False)[0]
            return [v.real, v.imag]
    tab = grid_eval(model, g.lo, g.hi, g.n, threads=job.threads, evaluate=evaluate,
                    extra=extra, extra_columns=cols)
    job.write(job.cfg.output.grid, tab.to_csv())
    n, m = tab.n, tab.m
    conv = [r for r in tab.rows if r[n + 3 * m]]
    job.say(f"grid: {len(tab.rows)} nodes, {len(conv)} converged, written to {job.cfg.output.grid}")
    if mu is not None and conv:
        gap = max(abs(complex(r[n], r[n + m]) - complex(r[-2], r[-1])) for r in conv)
        job.say(f"Laplace average (horizon {_g(job.cfg.analysis.laplace_horizon)}) vs limit: "
                f"max difference {gap:.3e}")
    return sorted(flags)


def _eigen_job(job: Job, command: str, default_target) -> int:
    if job.cfg.attractor.kind != "point":
        raise cfgmod.ConfigError(f"{command} needs a point attractor; use the cycle command")
    handle, att, target, A, eA, B, report = _point_setup(job, command, default_target)
    job.say(*gate(report, job.force))
    try:
        P, notes = build_point_factor(handle, att, job.cfg.analysis.k, A, eA, B)
    except ResonantObstruction as exc:
        raise HypothesisFailure(f"resonant obstruction: {exc}") from exc
    job.say(*notes)
    job.write(job.cfg.output.factor, dump_factor(P))
    job.say(f"factor: degree {P.k}, {P.m} output(s), written to {job.cfg.output.factor}")
    if P.nonunique_degrees:
        job.say(f"factor is not unique at degrees {P.nonunique_degrees} (minimum-norm choice)")
    job.say(*factor_lines(P))
    an = job.cfg.analysis
    approximant = P
    if an.approximant:
        approximant = parse_map(an.approximant, handle.n, job.cfg.system.params)
        if approximant.components != P.m:
            raise cfgmod.ConfigError(f"approximant has {approximant.components} components, target needs {P.m}")
        job.say(f"approximant: {approximant.pretty()}")
    linear = P.eA if handle.discrete else P.A
    model = EigenfunctionModel(approximant, handle, linear, step=an.step, tol=an.tol,
                               max_steps=an.max_steps, divergence_threshold=an.divergence_threshold)
    flags = []
    if an.grid is not None:
        mu = None
        if an.laplace_horizon and not handle.discrete and P.m == 1:
            mu = complex(np.asarray(linear)[0, 0])
        flags = _refine_grid(job, model, mu)
    if flags:
        job.say("divergence detected at:", *[f"  {f}" for f in flags])
        if report.zone != "strict":
            job.say(f"the spectral spread {report.spread.value:.6g} exceeds k + alpha = "
                    f"{report.k + report.alpha:.6g}")
        job.finish()
        raise DivergenceDetected(
            f"{len(flags)} grid node(s) diverged; spectral spread {report.spread.value:.6g} vs "
            f"k + alpha = {report.k + report.alpha:.6g} ({report.zone})", [])
    job.finish()
    return EXIT_OK


def cmd_linearize(job: Job) -> int:
    return _eigen_job(job, "linearize", "sternberg")


def cmd_eigenfunction(job: Job) -> int:
    return _eigen_job(job, "eigenfunction", "slowest")


def cmd_cycle(job: Job) -> int:
    a = job.cfg.attractor
    if a.kind != "cycle":
        raise cfgmod.ConfigError("the cycle command needs a cycle attractor")
    handle = build_flow(job.cfg)
    _header(job, handle, "cycle")
    cyc = locate_cycle(handle, a.guess, a.period)
    target = job.cfg.analysis.target or "slowest"
    X, Y = _cycle_spectra(cyc, target)
    report = hypothesis_report(X, Y, job.cfg)
    job.say(f"attractor: periodic orbit through x0 = {_vec(cyc.x0)}",
            f"period: {_g(cyc.tau)}",
            "Floquet multipliers: " + ", ".join(_c(v) for v in cyc.floquet_multipliers),
            "Floquet exponents: " + ", ".join(_c(v) for v in cyc.floquet_exponents),
            f"shooting residual: {cyc.shooting_residual:.3e}",
            f"target: {target}")
    job.say(*spectrum_lines(report, X, Y))
    job.say(*gate(report, job.force))
    an = job.cfg.analysis
    try:
        iso = build_isostable_model(handle, cyc, max(2, an.k), target=target)
    except ResonantObstruction as exc:
        raise HypothesisFailure(f"resonant obstruction: {exc}") from exc
    pm = build_phase_model(handle, cyc)
    job.write(job.cfg.output.factor, dump_factor(iso.factor))
    job.say(f"section factor: degree {iso.k}, written to {job.cfg.output.factor}",
            "isostable generator A: " + _vec(iso.A),
            "ambient covector: " + _vec(iso.covector))
    job.say(*factor_lines(iso.factor))
    if an.grid is not None:
        def evaluate(x):
            return isostable_at(iso, x, raise_on_divergence=False)

        def extra(x):
            th = asymptotic_phase_at(pm, x)
            return [th.real, th.imag]
        tab = grid_eval(iso, an.grid.lo, an.grid.hi, an.grid.n, threads=job.threads,
                        evaluate=evaluate, extra=extra, extra_columns=("phase_re", "phase_im"))
        job.write(job.cfg.output.grid, tab.to_csv())
        conv = sum(1 for r in tab.rows if r[tab.n + 3 * tab.m])
        job.say(f"grid: {len(tab.rows)} nodes, {conv} converged, written to {job.cfg.output.grid}")
    job.finish()
    return EXIT_OK


def cmd_classify(job: Job) -> int:
    handle = build_flow(job.cfg)
    _header(job, handle, "classify")
    an = job.cfg.analysis
    a = job.cfg.attractor
    tau = None
    if an.lam:
        lam = np.asarray(an.lam, dtype=complex)
        if a.kind == "cycle":
            tau = locate_cycle(handle, a.guess, a.period).tau
    elif a.kind == "point":
        att = locate_point(handle, a.guess)
        check_semisimple(att.jacobian)
        lam = att.exponents
    else:
        cyc = locate_cycle(handle, a.guess, a.period)
        check_semisimple(cyc.restricted_monodromy)
        lam, tau = np.asarray(cyc.floquet_exponents), cyc.tau
    if not an.mu:
        raise cfgmod.ConfigError("classify needs a list of target exponents mu")
    job.say("exponents: " + ", ".join(_c(v) for v in lam))
    if tau is not None:
        job.say(f"period: {_g(tau)}")
    report = []
    for mu in an.mu:
        if tau is None:
            sols = monomial_basis_for_mu(lam, mu, an.k, an.lattice_tol)
        else:
            sols = cycle_monomials(lam, tau, mu, an.k, an.j_range, an.lattice_tol)
        job.say(f"mu = {_c(mu)}: {len(sols)} monomial(s)")
        for s in sols:
            job.say(f"  {s.to_line()}")
        for n in sols.notes:
            job.say(f"  note: {n}")
        report += [f"{_c(mu)}\t{s.to_line()}" for s in sols]
    job.write(job.cfg.output.report, "\n".join(report) + ("\n" if report else ""))
    job.finish()
    return EXIT_OK


DISPATCH = {"analyze": cmd_analyze, "linearize": cmd_linearize, "eigenfunction": cmd_eigenfunction,
            "cycle": cmd_cycle, "classify": cmd_classify}


# entry point --------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="job file")
    common.add_argument("--out", default=None, help="output directory (overrides the job file)")
    common.add_argument("--force", action="store_true", help="continue past a failed spread check")
    common.add_argument("--threads", type=int, default=1, help="threads for grid evaluation")
    common.add_argument("--seed", type=int, default=0, help="seed for sample clouds")
    p = argparse.ArgumentParser(prog="koopfactor", description="Koopman eigenfunctions and linearizing factors")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def _setup_logging():
    level = os.environ.get("KF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING) if not level.isdigit() else int(level),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging()
    try:
        job = Job(cfgmod.load(args.config), args.out, args.force, args.threads, args.seed)
        return DISPATCH[args.command](job)
    except (cfgmod.ConfigError, FieldSyntaxError) as exc:
        return _fail(EXIT_ERROR, exc)
    except (HypothesisFailure, ResonantObstruction, DefectiveLinearization) as exc:
        return _fail(EXIT_HYPOTHESIS, exc)
    except AttractorFailure as exc:
        return _fail(EXIT_ATTRACTOR, exc)
    except DivergenceDetected as exc:
        return _fail(EXIT_DIVERGENCE, exc)
    except Exception as exc:  # noqa: BLE001 - any failure must map to an exit code
        log.debug("unhandled error", exc_info=True)
        return _fail(EXIT_ERROR, exc)


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
