"""Config-driven runner: audit, solve, validate, emit artifacts.

Experiments are described by INI-style config files (flux family or DSL
expression, initial profile, delta, window, horizon, checks).  A run writes
profile CSVs, an event-log CSV and a JSON manifest; the exit status is
nonzero iff any requested check fails or a solver invariant is breached.
All randomized batteries derive from the single config seed through a
counter-based generator, so results are reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import configparser
import glob
import json
import math
import os
import sys
import time as _time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .fluxes import make_builtin_flux, audit_assumptions, certify, default_envelope
from .profiles import make_initial
from .riemann import ApproxFlux
from .stationary import solve_level, g_of, inversion_gap_bound
from .tracker import (Tracker, TrackedSolution, quantize_initial, sample_u, sample_g,
                      tv_g, l1_g_distance, EventLog)
from .validation import (QuadSpec, entropy_battery, characteristic_check,
                         flux_convergence_check, fv_reference, l1_distance,
                         ValidationReport)

ENV_OUT = "FRONTTRACK_OUT"

DEFAULT_CHECKS = ("tvd", "entropy", "lipschitz_l1")
CHECK_ORDER = {"tvd": 0, "entropy": 1, "lipschitz_l1": 2, "characteristics": 3,
               "flux_convergence": 4, "inversion_bounds": 5, "fv_crossval": 6}


class ConfigError(ValueError):
    def __init__(self, section, option, message):
        super().__init__(f"[{section}] {option}: {message}")
        self.section = section
        self.option = option


@dataclass
class RunConfig:
    flux_family: str
    flux_params: dict
    u0_name: str
    u0_params: dict
    delta: float
    window: tuple
    cells: int
    t_end: float
    output_times: list
    checks: list
    seed: int
    resolution: int = 1024
    tolerances: dict = field(default_factory=dict)

    def validate(self):
        if not self.delta > 0:
            raise ConfigError("run", "delta", "must be positive")
        if self.t_end < 0:
            raise ConfigError("run", "t_end", "must be nonnegative")
        if not self.window[1] > self.window[0]:
            raise ConfigError("run", "window", "must be a nondegenerate interval")
        if sorted(self.output_times) != list(self.output_times):
            raise ConfigError("run", "output_times", "must be sorted")
        if self.output_times and not (0.0 <= self.output_times[0]
                                      and self.output_times[-1] <= self.t_end):
            raise ConfigError("run", "output_times", "must lie within [0, t_end]")
        unknown = set(self.checks) - set(CHECK_ORDER)
        if unknown:
            raise ConfigError("checks", "names", f"unknown checks {sorted(unknown)}")
        return self

    def echo(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _parse_floats(text):
    return [float(tok) for tok in text.replace(",", " ").split()]


def load_config(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError("-", "-", f"cannot read config file {path!r}")

    def need(section, option, cast=str):
        try:
            raw = parser.get(section, option)
        except (configparser.NoSectionError, configparser.NoOptionError) as e:
            raise ConfigError(section, option, "missing") from None
        try:
            return cast(raw)
        except ValueError as e:
            raise ConfigError(section, option, f"bad value {raw!r}: {e}") from None

    def opt(section, option, default, cast=str):
        if not parser.has_option(section, option):
            return default
        return need(section, option, cast)

    flux_family = need("flux", "family")
    flux_params = {k: v for k, v in parser.items("flux") if k != "family"}
    for key in list(flux_params):
        if key != "expr":
            try:
                flux_params[key] = float(flux_params[key])
            except ValueError:
                raise ConfigError("flux", key, f"expected a number, got {flux_params[key]!r}")

    u0_name = need("initial", "profile")
    u0_params = {k: v for k, v in parser.items("initial") if k != "profile"}
    for key in list(u0_params):
        if key in ("values", "breaks"):
            u0_params[key] = _parse_floats(u0_params[key])
        elif key != "expr":
            try:
                u0_params[key] = float(u0_params[key])
            except ValueError:
                raise ConfigError("initial", key, f"expected a number, got {u0_params[key]!r}")

    window = opt("run", "window", None, _parse_floats)
    if window is None or len(window) != 2:
        raise ConfigError("run", "window", "expected two numbers, e.g. '-3, 3'")
    t_end = need("run", "t_end", float)
    out_times = opt("run", "output_times", None, _parse_floats)
    if out_times is None:
        out_times = [t_end]

    checks = opt("checks", "names", ", ".join(DEFAULT_CHECKS))
    checks = [c.strip() for c in checks.replace(",", " ").split() if c.strip()]

    tolerances = {}
    if parser.has_section("tolerances"):
        for k, v in parser.items("tolerances"):
            tolerances[k] = float(v)

    cfg = RunConfig(
        flux_family=flux_family,
        flux_params=flux_params,
        u0_name=u0_name,
        u0_params=u0_params,
        delta=need("run", "delta", float),
        window=(window[0], window[1]),
        cells=need("run", "cells", int),
        t_end=t_end,
        output_times=out_times,
        checks=checks,
        seed=opt("run", "seed", 0, int),
        resolution=opt("run", "resolution", 1024, int),
        tolerances=tolerances,
    )
    return cfg.validate()


# ---------------------------------------------------------------------------
# artifact writers (shortest round-trip float formatting, LF endings)
# ---------------------------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def emit_profile(flux, field_, window, resolution, path):
    """CSV of x,u,g at `resolution` uniform points over the given window."""
    _emit_profile_csv(flux, field_, window, resolution, path)


def emit_events(log, path):
    """CSV of the event log: t,x,consumed_ids,produced_id,tv_before,tv_after."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t,x,consumed_ids,produced_id,tv_before,tv_after\n")
        for e in log:
            consumed = ";".join(str(i) for i in e.consumed)
            produced = "" if e.produced is None else str(e.produced)
            fh.write(f"{_fmt(e.time)},{_fmt(e.position)},{consumed},{produced},"
                     f"{_fmt(e.tv_before)},{_fmt(e.tv_after)}\n")


def read_profile(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

@dataclass
class RunContext:
    config: RunConfig
    flux: object
    tracker: Tracker
    field0: object
    fields: dict        # time -> FrontField snapshots at output times (and t_end)
    log: EventLog
    envelope: object
    u_sup: float
    u0_l1: float

    def rng(self, check_name):
        key = np.array([self.config.seed % (2 ** 63), CHECK_ORDER[check_name]],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def solution(self):
        return TrackedSolution(self.tracker, self.field0)


def _check_tvd(ctx, report):
    """TV non-increasing at every event, front count budget, grid closure."""
    entries = list(ctx.log)
    worst = 0.0
    for e in entries:
        worst = max(worst, e.tv_after - e.tv_before)
    report.add("tvd.events", worst, 0.0, worst <= 0.0, events=len(entries))

    n0 = ctx.field0.n_fronts
    report.add("tvd.event_budget", float(len(entries)),
               float(max(0, n0 - 1)), len(entries) <= max(0, n0 - 1),
               initial_fronts=n0)

    final = ctx.fields[max(ctx.fields)]
    dz = np.diff(final.z) if final.n_fronts else np.zeros(0, dtype=np.int64)
    max_up = float(np.max(dz)) if dz.size else 0.0
    report.add("admissibility.upward_jumps", max_up, 1.0, max_up <= 1.0)

    # levels stay on the delta-grid: reconstruct g from samples and compare
    xs = np.linspace(*ctx.config.window, 257)
    worst_grid = 0.0
    for f_ in ctx.fields.values():
        u = sample_u(ctx.flux, f_, xs)
        g = g_of(ctx.flux, xs, u)
        z = np.round(g / f_.delta)
        worst_grid = max(worst_grid, float(np.max(np.abs(g - z * f_.delta))))
    report.add("closure.delta_grid", worst_grid, 1e-9, worst_grid <= 1e-9)


def _check_entropy(ctx, report):
    pairs = int(ctx.config.tolerances.get("entropy_pairs", 20))
    quad_n = int(ctx.config.tolerances.get("entropy_quad", 256))
    if ctx.config.t_end <= 0:
        report.add("entropy.battery", 0.0, 0.0, True, pairs=0)
        return
    quad = QuadSpec(ctx.config.window[0], ctx.config.window[1],
                    0.0, ctx.config.t_end, nx=quad_n, nt=quad_n)
    af = ApproxFlux(ctx.flux, ctx.config.delta)
    sol = ctx.solution()
    tv_u = _tv_u_estimate(ctx)
    speed = ctx.envelope.lipschitz_L(ctx.u_sup)
    rng = ctx.rng("entropy")
    records = entropy_battery(sol, af, quad, rng, pairs,
                              k_bound=1.2 * ctx.u_sup + 1e-6,
                              tv_u=tv_u, speed_bound=speed)
    worst = min((r["residual"] + r["tol"] for r in records), default=0.0)
    ok = all(r["residual"] >= -r["tol"] for r in records)
    report.add("entropy.battery", worst, 0.0, ok and worst >= 0.0,
               pairs=pairs, quad=quad_n,
               min_residual=min((r["residual"] for r in records), default=0.0),
               max_tol=max((r["tol"] for r in records), default=0.0))


def _tv_u_estimate(ctx):
    xs = np.linspace(*ctx.config.window, 1025)
    worst = 0.0
    for f_ in ctx.fields.values():
        u = sample_u(ctx.flux, f_, xs)
        worst = max(worst, float(np.sum(np.abs(np.diff(u)))))
    return worst


def _check_lipschitz_l1(ctx, report):
    pairs = int(ctx.config.tolerances.get("lipschitz_pairs", 20))
    if ctx.config.t_end <= 0 or ctx.field0.n_fronts == 0:
        report.add("lipschitz_l1", 0.0, 0.0, True, pairs=0)
        return
    rng = ctx.rng("lipschitz_l1")
    tv0 = tv_g(ctx.field0)
    L = ctx.envelope.lipschitz_L(ctx.u_sup)
    sol = ctx.solution()
    worst = -np.inf
    for _ in range(pairs):
        t = float(rng.uniform(0.0, 0.8 * ctx.config.t_end))
        h = float(rng.uniform(1e-3, max(1e-3, 0.5 * (ctx.config.t_end - t))))
        fa = sol.field_at(t)
        fb = sol.field_at(t + h)
        dist = l1_g_distance(fa, fb, *ctx.config.window)
        worst = max(worst, dist - L * tv0 * h)
    report.add("lipschitz_l1", worst, 1e-8, worst <= 1e-8,
               pairs=pairs, L=L, tv0=tv0)


def _check_characteristics(ctx, report):
    lo, hi = ctx.config.window
    x0 = lo + 0.37 * (hi - lo)
    u0 = max(ctx.u_sup, 0.1)
    T = min(1.0, max(ctx.config.t_end, 0.25))
    drift = characteristic_check(ctx.flux, x0, u0, T, 10_000)
    report.add("characteristics.drift", drift, 1e-10, drift <= 1e-10,
               x0=x0, u0=u0, T=T, steps=10_000)
    coarse = characteristic_check(ctx.flux, x0, u0, T, 100)
    fine = characteristic_check(ctx.flux, x0, u0, T, 200)
    ratio = coarse / fine if fine > 0 else float("inf")
    ok = 16 * 0.7 <= ratio <= 16 * 1.3 or coarse < 1e-13
    report.add("characteristics.order", ratio, 16.0, ok, coarse=coarse, fine=fine)


def _check_flux_convergence(ctx, report):
    lo, hi = ctx.config.window
    m = max(ctx.u_sup, 0.25)
    deltas = (0.1, 0.05, 0.02, 0.01)
    rows = flux_convergence_check(ctx.flux, deltas, ((lo, hi), (-m, m)))
    ok = all(r.ok for r in rows)
    errs = [r.sup_f_err for r in rows]
    monotone = all(b <= a * 1.000001 for a, b in zip(errs, errs[1:]))
    worst = max(max(r.sup_f_err - r.bound_f, r.sup_fx_err - r.bound_fx) for r in rows)
    report.add("flux_convergence", worst, 0.0, ok and monotone,
               deltas=list(deltas), sup_f_err=errs)


def _check_inversion_bounds(ctx, report):
    rng = ctx.rng("inversion_bounds")
    alpha = ctx.flux.require_alpha()
    xs = np.linspace(*ctx.config.window, 257)
    g_scale = max(ctx.config.delta, g_of(ctx.flux, 0.0, ctx.u_sup) if ctx.u_sup else 1.0)
    worst = -np.inf
    for _ in range(50):
        g1 = float(rng.uniform(-g_scale, g_scale))
        g2 = float(rng.uniform(-g_scale, g_scale))
        u1 = solve_level(ctx.flux, xs, np.full_like(xs, g1))
        u2 = solve_level(ctx.flux, xs, np.full_like(xs, g2))
        gap = float(np.max(np.abs(u1 - u2)))
        bound = inversion_gap_bound(g1, g2, alpha) + 1e-11
        worst = max(worst, gap - bound)
    report.add("inversion_bounds", worst, 0.0, worst <= 0.0, samples=50)


def _check_fv_crossval(ctx, report):
    cells = int(ctx.config.tolerances.get("fv_cells", 2000))
    cfl = float(ctx.config.tolerances.get("fv_cfl", 0.45))
    rel_tol = float(ctx.config.tolerances.get("fv_rel_tol", 0.05))
    if ctx.config.t_end <= 0:
        report.add("fv_crossval", 0.0, 0.0, True)
        return
    u0 = make_initial(ctx.config.u0_name, **ctx.config.u0_params)
    fv = fv_reference(ctx.flux, u0, ctx.config.window, cells, ctx.config.t_end, cfl)
    final = ctx.fields[max(ctx.fields)]
    ft_sampler = lambda x: sample_u(ctx.flux, final, x)
    dist = l1_distance(ft_sampler, fv.sampler(), ctx.config.window, cells)
    bound = rel_tol * max(ctx.u0_l1, 1e-12)
    report.add("fv_crossval", dist, bound, dist <= bound,
               fv_cells=cells, cfl=cfl, u0_l1=ctx.u0_l1)


_CHECK_IMPL = {
    "tvd": _check_tvd,
    "entropy": _check_entropy,
    "lipschitz_l1": _check_lipschitz_l1,
    "characteristics": _check_characteristics,
    "flux_convergence": _check_flux_convergence,
    "inversion_bounds": _check_inversion_bounds,
    "fv_crossval": _check_fv_crossval,
}


# ---------------------------------------------------------------------------
# the runner
# ---------------------------------------------------------------------------

def _build_flux(cfg):
    params = dict(cfg.flux_params)
    return make_builtin_flux(cfg.flux_family, **params)


def run(cfg, out_dir, verbose=False):
    """Execute one configured experiment; returns (manifest dict, exit status)."""
    started = _time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    say = print if verbose else (lambda *_: None)

    flux = _build_flux(cfg)
    u0 = make_initial(cfg.u0_name, **cfg.u0_params)

    lo, hi = cfg.window
    probe = np.linspace(lo, hi, 4097)
    u_probe = np.asarray(u0(probe), dtype=float)
    u0_sup = float(np.max(np.abs(u_probe))) if u_probe.size else 0.0
    u0_l1 = float(np.sum(0.5 * (np.abs(u_probe[:-1]) + np.abs(u_probe[1:]))
                         * np.diff(probe)))

    box_u = 2.0 * u0_sup + 1.0
    report_audit = audit_assumptions(flux, ((lo, hi), (-box_u, box_u)), grid=48)
    say(report_audit.summary())
    manifest = {
        "version": __version__,
        "config": cfg.echo(),
        "audit": {
            "passed": report_audit.passed,
            "alpha": report_audit.certified_alpha,
            "fuu_max": report_audit.fuu_max,
            "violations": [list(map(str, v)) for v in report_audit.violations[:16]],
            "samples": list(report_audit.sample_counts),
        },
    }
    if not report_audit.passed:
        manifest["error"] = "audit failed; solve aborted"
        _write_manifest(manifest, out_dir, started)
        return manifest, 2

    flux = certify(flux, report_audit)

    # state bound: levels never leave their initial range, so the initial
    # g-range bounds |u| for all time
    g0_sup = float(np.max(np.abs(g_of(flux, probe, u_probe)))) if u_probe.size else 0.0
    u_sup = math.sqrt(2.0 * max(g0_sup, cfg.delta) / flux.alpha) * 1.02
    envelope = default_envelope(flux, cfg.window, u_sup + cfg.delta)

    h_ode = float(cfg.tolerances.get("h_ode", 0.01))
    # boundary fronts created by the compact-support padding move at most at
    # the envelope speed, so the data window plus L*T margin holds all activity
    margin = envelope.lipschitz_L(u_sup) * cfg.t_end + 0.05 * (hi - lo) + cfg.delta
    work_window = (lo - margin, hi + margin)
    envelope = default_envelope(flux, work_window, u_sup + cfg.delta)
    tracker = Tracker(flux, cfg.delta, work_window, h_ode=h_ode)
    field0 = quantize_initial(flux, u0, cfg.delta, cfg.window, cfg.cells)
    say(f"quantized: {field0.n_fronts} fronts, TV(g) = {tv_g(field0)}")

    log = EventLog()
    fields = {0.0: field0}
    current = field0
    times = list(cfg.output_times)
    if not times or times[-1] < cfg.t_end:
        times = times + [cfg.t_end]
    for t in times:
        current, piece_log = tracker.advance(current, t)
        log.extend(piece_log)
        fields[t] = current

    for k, t in enumerate(cfg.output_times):
        path = os.path.join(out_dir, f"profile_{k:03d}.csv")
        _emit_profile_csv(flux, fields[t], cfg.window, cfg.resolution, path)
    emit_events(log, os.path.join(out_dir, "events.csv"))

    ctx = RunContext(config=cfg, flux=flux, tracker=tracker, field0=field0,
                     fields=fields, log=log, envelope=envelope,
                     u_sup=u_sup, u0_l1=u0_l1)
    report = ValidationReport()
    for name in sorted(cfg.checks, key=CHECK_ORDER.get):
        say(f"check: {name}")
        _CHECK_IMPL[name](ctx, report)

    manifest.update({
        "event_count": len(log),
        "final_front_count": fields[max(fields)].n_fronts,
        "initial_front_count": field0.n_fronts,
        "tv_g_initial": tv_g(field0),
        "tv_g_final": tv_g(fields[max(fields)]),
        "quantization": asdict(field0.quantization) if field0.quantization else None,
        "checks": report.to_dict(),
        "output_times": list(cfg.output_times),
    })
    _write_manifest(manifest, out_dir, started)
    status = 0 if report.passed else 1
    say(f"done: {'ok' if status == 0 else 'CHECK FAILURES'}")
    return manifest, status


def _emit_profile_csv(flux, field_, window, resolution, path):
    xs = np.linspace(window[0], window[1], int(resolution))
    us = sample_u(flux, field_, xs)
    gs = sample_g(field_, xs)
    with open(path, "w", newline="\n") as fh:
        fh.write("x,u,g\n")
        for x, u, g in zip(xs, us, gs):
            fh.write(f"{_fmt(x)},{_fmt(u)},{_fmt(g)}\n")


def _write_manifest(manifest, out_dir, started):
    manifest["wall_time_s"] = _time.perf_counter() - started
    with open(os.path.join(out_dir, "manifest.json"), "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fronttrack",
        description="front tracking solver and validation runner")
    parser.add_argument("--out", default=None, help="output directory "
                        f"(default ./out or ${ENV_OUT})")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute one config")
    p_run.add_argument("config")
    p_sweep = sub.add_parser("sweep", help="execute every config matching a glob")
    p_sweep.add_argument("pattern")
    args = parser.parse_args(argv)

    out_base = args.out or os.environ.get(ENV_OUT) or "out"

    if args.command == "run":
        paths = [args.config]
    else:
        paths = sorted(glob.glob(args.pattern))
        if not paths:
            print(f"no configs match {args.pattern!r}", file=sys.stderr)
            return 2

    worst = 0
    for path in paths:
        try:
            cfg = load_config(path)
        except ConfigError as e:
            print(f"{path}: {e}", file=sys.stderr)
            return 2
        stem = os.path.splitext(os.path.basename(path))[0]
        out_dir = os.path.join(out_base, stem) if len(paths) > 1 or args.command == "sweep" \
            else out_base
        manifest, status = run(cfg, out_dir, verbose=args.verbose)
        if status != 0:
            print(f"{path}: exit status {status}", file=sys.stderr)
        worst = max(worst, status)
    return worst


if __name__ == "__main__":
    sys.exit(main())
