"""Every checkable estimate the solver is supposed to satisfy.

Entropy residuals (exact and delta-approximate flux), flux conservation along
characteristics, domain of dependence, flux-convergence bounds, plus an
independent first-order Godunov oracle and L1 comparison tooling.  All checks
are pure functions over immutable inputs and report measured-vs-bound pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .profiles import smooth_bump, smooth_bump_prime
from .riemann import ApproxFlux
from .stationary import solve_level, g_of
from .tracker import Tracker, piece_index, quantize_initial

# peak of |d/ds bump(s)|, fixed numerically once (the bump is a module constant)
_S = np.linspace(-1.0, 1.0, 400001)
BUMP_PRIME_MAX = float(np.max(np.abs(smooth_bump_prime(_S))))
del _S

# entropy-residual noise floor: cell-crossing errors alternate sign along the
# jump curves, which knocks the worst-case first-order midpoint error down to
# ~spacing^1.5 in practice; both constants carry a 10x margin over the largest
# ratios observed while calibrating on shock/fan/multi-front and front-free runs
TOL_QUAD_C = 0.5
TOL_SMOOTH_C = 1.0


class SupportError(ValueError):
    pass


@dataclass(frozen=True)
class QuadSpec:
    """Uniform midpoint quadrature over [x_lo, x_hi] x [t_lo, t_hi].

    ``t_lo`` is the initial time of the entropy inequality; the initial-data
    line integral is evaluated there.
    """

    x_lo: float
    x_hi: float
    t_lo: float
    t_hi: float
    nx: int = 256
    nt: int = 256

    @property
    def dx(self):
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def dt(self):
        return (self.t_hi - self.t_lo) / self.nt

    def x_mids(self):
        return self.x_lo + (np.arange(self.nx) + 0.5) * self.dx

    def t_mids(self):
        return self.t_lo + (np.arange(self.nt) + 0.5) * self.dt


@dataclass(frozen=True)
class TestFunction:
    """Tensor product of two smooth bumps: phi(x,t) = B((x-xc)/xr) B((t-tc)/tr).

    Nonnegative, C-infinity, compactly supported; spatial support must sit
    strictly inside the quadrature box, while the temporal support may be
    clipped at the initial time (that is what the initial-data term is for).
    """

    x_center: float
    x_radius: float
    t_center: float
    t_radius: float
    kind: str = "tensor_bump"

    __test__ = False  # not a pytest class, despite the name

    def phi(self, x, t):
        return (smooth_bump((np.asarray(x, dtype=float) - self.x_center) / self.x_radius)
                * smooth_bump((t - self.t_center) / self.t_radius))

    def phi_x(self, x, t):
        return (smooth_bump_prime((np.asarray(x, dtype=float) - self.x_center) / self.x_radius)
                / self.x_radius
                * smooth_bump((t - self.t_center) / self.t_radius))

    def phi_t(self, x, t):
        return (smooth_bump((np.asarray(x, dtype=float) - self.x_center) / self.x_radius)
                * smooth_bump_prime((t - self.t_center) / self.t_radius) / self.t_radius)

    @property
    def max_phi(self):
        return 1.0

    @property
    def max_phi_x(self):
        return BUMP_PRIME_MAX / self.x_radius

    @property
    def max_phi_t(self):
        return BUMP_PRIME_MAX / self.t_radius

    def check_support(self, quad):
        if not (quad.x_lo < self.x_center - self.x_radius
                and self.x_center + self.x_radius < quad.x_hi):
            raise SupportError(f"x-support of {self} escapes the quadrature box")
        if not self.t_center + self.t_radius < quad.t_hi:
            raise SupportError(f"t-support of {self} escapes the quadrature box")


def _as_sampler(solution):
    if hasattr(solution, "sample_u"):
        return solution.sample_u
    return solution


# ---------------------------------------------------------------------------
# entropy residuals
# ---------------------------------------------------------------------------

def _residual_core(u_of, k, phi, quad, f_of, f_row_k, fx_row_k):
    xs = quad.x_mids()
    total = 0.0
    for t in quad.t_mids():
        u = np.asarray(u_of(xs, t), dtype=float)
        sgn = np.sign(u - k)
        q = sgn * (f_of(xs, u) - f_row_k)
        total += float(np.sum(np.abs(u - k) * phi.phi_t(xs, t)
                              + q * phi.phi_x(xs, t)
                              - sgn * fx_row_k * phi.phi(xs, t)))
    total *= quad.dx * quad.dt
    u0 = np.asarray(u_of(xs, quad.t_lo), dtype=float)
    total += float(np.sum(np.abs(u0 - k) * phi.phi(xs, quad.t_lo))) * quad.dx
    return total


def kruzkov_residual(solution, flux, k, phi, quad):
    """Entropy-inequality residual for the exact flux; >= 0 for entropy solutions
    up to quadrature error.

    R is the space-time integral of |u-k| phi_t + sgn(u-k)(f(x,u)-f(x,k)) phi_x
    - sgn(u-k) f_x(x,k) phi, plus the initial line integral of |u0-k| phi(.,0).
    """
    phi.check_support(quad)
    u_of = _as_sampler(solution)
    xs = quad.x_mids()
    k_row = np.full_like(xs, float(k))
    f_row = np.asarray(flux.f(xs, k_row), dtype=float)
    fx_row = np.asarray(flux.fx(xs, k_row), dtype=float)
    return _residual_core(u_of, float(k), phi, quad, flux.f, f_row, fx_row)


def approx_kruzkov_residual(solution, af, k, phi, quad):
    """Entropy residual with f and f_x replaced by the delta-approximate flux.

    Front-tracking output is an exact entropy solution of the approximate
    conservation law, so this must be >= -tol_quad for every (k, phi).
    """
    phi.check_support(quad)
    u_of = _as_sampler(solution)
    xs = quad.x_mids()
    f_row = np.asarray(af.eval(xs, np.full_like(xs, float(k))), dtype=float)
    fx_row = np.asarray(af.eval_dx(xs, np.full_like(xs, float(k))), dtype=float)

    def f_of(x, u):
        return af.eval(x, u)

    return _residual_core(u_of, float(k), phi, quad, f_of, f_row, fx_row)


def entropy_tol(quad, phi, tv_u, speed_bound, src_sup, state_scale=1.0):
    """Reported quadrature-noise bound for one (k, phi) residual.

    Two calibrated parts: jump curves cross O(extent/spacing) cells, each
    contributing O(spacing^2 * jump * phi-derivative) with pseudo-random
    signs (net ~spacing^1.5 times the jump mass); plus the plain composite
    midpoint error of the smooth integrand, second order against the
    test-function curvature.
    """
    weight = (phi.max_phi_t + (1.0 + speed_bound) * phi.max_phi_x
              + src_sup * phi.max_phi)
    spacing = max(quad.dx, quad.dt)
    jump_part = TOL_QUAD_C * spacing ** 1.5 * tv_u * weight
    smooth_part = TOL_SMOOTH_C * state_scale * (
        (quad.dt / phi.t_radius) ** 2 * phi.x_radius / phi.t_radius
        + (quad.dx / phi.x_radius) ** 2 * (1.0 + speed_bound) * phi.t_radius / phi.x_radius)
    return jump_part + smooth_part


def entropy_battery(solution, af, quad, rng, pairs, k_bound, tv_u, speed_bound):
    """Randomized (k, phi) battery of approximate entropy residuals.

    Returns one record per pair with the residual and its reported tolerance.
    """
    xs = quad.x_mids()
    records = []
    x_span = quad.x_hi - quad.x_lo
    t_span = quad.t_hi - quad.t_lo
    for _ in range(pairs):
        k = float(rng.uniform(-k_bound, k_bound))
        xr = float(rng.uniform(0.12, 0.35)) * x_span / 2.0
        xc = float(rng.uniform(quad.x_lo + 1.05 * xr, quad.x_hi - 1.05 * xr))
        tr = float(rng.uniform(0.15, 0.45)) * t_span
        tc = float(rng.uniform(quad.t_lo, quad.t_hi - 1.05 * tr))
        phi = TestFunction(x_center=xc, x_radius=xr, t_center=tc, t_radius=tr)
        residual = approx_kruzkov_residual(solution, af, k, phi, quad)
        src_sup = float(np.max(np.abs(af.eval_dx(xs, np.full_like(xs, k)))))
        tol = entropy_tol(quad, phi, tv_u, speed_bound, src_sup,
                          state_scale=abs(k) + k_bound)
        records.append({"k": k, "phi": phi, "residual": residual, "tol": tol})
    return records


# ---------------------------------------------------------------------------
# characteristics
# ---------------------------------------------------------------------------

def characteristic_check(flux, x0, u0, T, steps, window=None):
    """RK4-integrate the characteristic system and report the flux drift.

    The pair (y, z) follows dy = f_u(y, z), dz = -f_x(y, z); f(y, z) is a
    conserved quantity, so the returned max |f(y,z) - f(x0,u0)| measures pure
    integrator error (fourth order in the step).
    """
    y, z = float(x0), float(u0)
    f0 = float(flux.f(y, z))
    h = float(T) / int(steps)
    drift = 0.0

    def rhs(yy, zz):
        return float(flux.fu(yy, zz)), -float(flux.fx(yy, zz))

    for _ in range(int(steps)):
        k1y, k1z = rhs(y, z)
        k2y, k2z = rhs(y + 0.5 * h * k1y, z + 0.5 * h * k1z)
        k3y, k3z = rhs(y + 0.5 * h * k2y, z + 0.5 * h * k2z)
        k4y, k4z = rhs(y + h * k3y, z + h * k3z)
        y += (h / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
        z += (h / 6.0) * (k1z + 2 * k2z + 2 * k3z + k4z)
        if window is not None and not (window[0] <= y <= window[1]):
            raise ValueError(f"characteristic left the window at y={y}, t~{h * steps}")
        drift = max(drift, abs(float(flux.f(y, z)) - f0))
    return drift


def characteristic_fan(flux, x_origin, g_l, g_r, T, n_chars=64, steps=2000):
    """Exact rarefaction oracle: the fan of characteristics from one point.

    Integrates the characteristic system from z(0) spanning [u_l, u_r] at the
    jump and returns a sampler for u(., T) (profiles outside the fan, linear
    interpolation along the fan).  This is the only place the exact fan is
    materialized; the solver itself never uses it.
    """
    u_l = float(solve_level(flux, x_origin, g_l))
    u_r = float(solve_level(flux, x_origin, g_r))
    z0 = np.linspace(u_l, u_r, n_chars)
    ys = np.full(n_chars, float(x_origin))
    zs = z0.copy()
    h = float(T) / steps

    def rhs(y, z):
        return np.asarray(flux.fu(y, z), dtype=float), -np.asarray(flux.fx(y, z), dtype=float)

    for _ in range(steps):
        k1y, k1z = rhs(ys, zs)
        k2y, k2z = rhs(ys + 0.5 * h * k1y, zs + 0.5 * h * k1z)
        k3y, k3z = rhs(ys + 0.5 * h * k2y, zs + 0.5 * h * k2z)
        k4y, k4z = rhs(ys + h * k3y, zs + h * k3z)
        ys = ys + (h / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
        zs = zs + (h / 6.0) * (k1z + 2 * k2z + 2 * k3z + k4z)

    def sampler(x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        inside = (x >= ys[0]) & (x <= ys[-1])
        out = np.empty_like(x)
        out[inside] = np.interp(x[inside], ys, zs)
        left = x < ys[0]
        right = x > ys[-1]
        if np.any(left):
            out[left] = solve_level(flux, x[left], g_l)
        if np.any(right):
            out[right] = solve_level(flux, x[right], g_r)
        return float(out[0]) if scalar else out

    return sampler


class SingleFrontSolution:
    """Independent oracle for one front: scipy RK45 on the jump ODE with
    brentq-based profile inversion (shares no numerics with the tracker)."""

    def __init__(self, flux, g_l, g_r, x0, t_max, rtol=1e-12, atol=1e-13):
        self.flux = flux
        self.g_l = float(g_l)
        self.g_r = float(g_r)
        alpha = flux.require_alpha()

        def invert(x, g):
            if g == 0.0:
                return 0.0
            hi = math.sqrt(2.0 * abs(g) / alpha) * 1.02 + 1e-12
            s = 1.0 if g > 0 else -1.0
            return s * brentq(lambda w: float(flux.f(x, s * w)) - abs(g),
                              0.0, hi, xtol=1e-14, rtol=8.9e-16)

        self._invert = invert

        def rhs(_t, y):
            ul = invert(y[0], self.g_l)
            ur = invert(y[0], self.g_r)
            return [(abs(self.g_l) - abs(self.g_r)) / (ul - ur)]

        self._sol = solve_ivp(rhs, (0.0, float(t_max)), [float(x0)],
                              method="RK45", dense_output=True,
                              rtol=rtol, atol=atol, max_step=t_max / 50.0)
        if not self._sol.success:
            raise RuntimeError(f"oracle integration failed: {self._sol.message}")

    def position(self, t):
        return float(self._sol.sol(t)[0])

    def sample_u(self, x, t):
        """Trace sampler; the independence of the oracle lives in the
        trajectory, so the profile evaluation may share the library inversion."""
        x = np.asarray(x, dtype=float)
        y = self.position(t)
        g = np.where(x < y, self.g_l, self.g_r)
        out = solve_level(self.flux, x, g)
        return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# finite-volume oracle
# ---------------------------------------------------------------------------

class CFLError(RuntimeError):
    pass


@dataclass
class FVGrid:
    window: tuple
    cells: int
    dx: float
    u: np.ndarray
    t: float
    cfl: float

    def x_mids(self):
        lo = self.window[0]
        return lo + (np.arange(self.cells) + 0.5) * self.dx

    def sampler(self):
        """Piecewise-constant cell sampler (for L1 comparisons)."""
        lo, hi = self.window
        edges = lo + np.arange(1, self.cells) * self.dx
        u = self.u.copy()

        def sample(x):
            idx = np.clip(np.searchsorted(edges, np.asarray(x, dtype=float),
                                          side="right"), 0, self.cells - 1)
            return u[idx]

        return sample


def fv_reference(flux, u0, window, cells, T, cfl=0.45):
    """First-order Godunov oracle with interface-frozen flux.

    With stationarity at zero, f(x, .) has its minimum 0 at u = 0 for every x,
    so the Godunov interface flux is f(x*, clamp(0 into [u_l, u_r])) for
    undercompressive data and max(f(x*, u_l), f(x*, u_r)) otherwise.
    """
    if not 0.0 < cfl <= 0.45:
        raise ValueError(f"cfl must be in (0, 0.45], got {cfl}")
    alpha = flux.require_alpha()
    lo, hi = float(window[0]), float(window[1])
    cells = int(cells)
    dx = (hi - lo) / cells
    mids = lo + (np.arange(cells) + 0.5) * dx
    ifaces = lo + np.arange(cells + 1) * dx  # includes both window edges

    u = np.asarray(u0(mids), dtype=float)
    if u.shape != mids.shape:
        u = np.array([float(u0(x)) for x in mids])
    if not np.all(np.isfinite(u)):
        raise ValueError("initial data not finite on the grid")

    g_max = float(np.max(np.abs(g_of(flux, mids, u)))) if cells else 0.0
    m_bound = math.sqrt(2.0 * max(g_max, 1e-300) / alpha) * 1.05 + 1e-9
    v_max = float(max(np.max(np.abs(flux.fu(ifaces, m_bound))),
                      np.max(np.abs(flux.fu(ifaces, -m_bound)))))
    v_max = max(v_max, 1e-12)

    T = float(T)
    if T <= 0.0:
        return FVGrid(window=(lo, hi), cells=cells, dx=dx, u=u, t=0.0, cfl=cfl)
    dt_raw = cfl * dx / v_max
    steps = max(1, math.ceil(T / dt_raw))
    dt = T / steps

    for _ in range(steps):
        ul = np.concatenate((u[:1], u))  # outflow ghosts (zero for compact data)
        ur = np.concatenate((u, u[-1:]))
        speeds = np.maximum(np.abs(flux.fu(ifaces, ul)), np.abs(flux.fu(ifaces, ur)))
        if float(np.max(speeds)) * dt / dx > cfl * (1.0 + 1e-9):
            raise CFLError(
                f"CFL violated: max speed {float(np.max(speeds))} exceeds bound {v_max}"
            )
        undercomp = ul <= ur
        sonic = np.minimum(np.maximum(ul, 0.0), ur)  # clamp 0 into [ul, ur]
        f_min = flux.f(ifaces, sonic)
        f_max = np.maximum(flux.f(ifaces, ul), flux.f(ifaces, ur))
        flux_iface = np.where(undercomp, f_min, f_max)
        u = u - (dt / dx) * (flux_iface[1:] - flux_iface[:-1])

    return FVGrid(window=(lo, hi), cells=cells, dx=dx, u=u, t=T, cfl=cfl)


# ---------------------------------------------------------------------------
# L1 metrics and the dependence cone
# ---------------------------------------------------------------------------

def l1_distance(sampler_a, sampler_b, window, resolution):
    """Midpoint-rule L1 norm of the difference of two samplers over window."""
    lo, hi = float(window[0]), float(window[1])
    n = int(resolution)
    dx = (hi - lo) / n
    xs = lo + (np.arange(n) + 0.5) * dx
    a = np.asarray(sampler_a(xs), dtype=float)
    b = np.asarray(sampler_b(xs), dtype=float)
    return float(np.sum(np.abs(a - b)) * dx)


def l1_u_fields(flux, field_a, field_b, lo, hi, pts_per_piece=8):
    """L1 distance in u between two front fields on [lo, hi].

    Pieces with identical integer levels contribute exactly zero; differing
    pieces are integrated by midpoint rule on the piece.
    """
    cuts = np.unique(np.concatenate((
        [lo, hi],
        field_a.positions[(field_a.positions > lo) & (field_a.positions < hi)],
        field_b.positions[(field_b.positions > lo) & (field_b.positions < hi)],
    )))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        za = field_a.z[int(piece_index(field_a, mid))]
        zb = field_b.z[int(piece_index(field_b, mid))]
        ga = field_a.delta * float(za)
        gb = field_b.delta * float(zb)
        if ga == gb:
            continue
        xs = a + (np.arange(pts_per_piece) + 0.5) * (b - a) / pts_per_piece
        ua = solve_level(flux, xs, np.full(pts_per_piece, ga))
        ub = solve_level(flux, xs, np.full(pts_per_piece, gb))
        total += float(np.sum(np.abs(ua - ub))) * (b - a) / pts_per_piece
    return total


def domain_of_dependence_check(flux, u0, u0_perturbed, delta, window, cells, T, R,
                               h_ode=0.01):
    """Run both initial data and measure the L1 difference of u on [-R, R] at T."""
    tr = Tracker(flux, delta, window, h_ode=h_ode)
    fa = quantize_initial(flux, u0, delta, window, cells)
    fb = quantize_initial(flux, u0_perturbed, delta, window, cells)
    Fa, _ = tr.advance(fa, T)
    Fb, _ = tr.advance(fb, T)
    return l1_u_fields(flux, Fa, Fb, -float(R), float(R))


# ---------------------------------------------------------------------------
# flux convergence (the uniform bounds under delta-refinement)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluxConvergenceRow:
    delta: float
    sup_f_err: float
    bound_f: float
    sup_fx_err: float
    bound_fx: float

    @property
    def ok(self):
        return self.sup_f_err <= self.bound_f and self.sup_fx_err <= self.bound_fx


def flux_convergence_check(flux, deltas, box, nx=48, nu=96):
    """Sup errors of the approximate flux and its x-derivative per delta.

    Bounds: sqrt(2 delta/alpha)(1 + max theta(+-(M+delta))) + delta for f, and
    sqrt(2 delta/alpha)(C1 + 3 C2 C3) for f_x, with the constants read off the
    sampled box (C1 = sup|f_xu|, C2 = sup f_uu, C3 = sup_level sup_x |dU/dx|).
    """
    (x_lo, x_hi), (u_lo, u_hi) = box
    alpha = flux.require_alpha()
    xs = np.linspace(x_lo, x_hi, nx)
    us = np.linspace(u_lo, u_hi, nu)
    X, U = np.meshgrid(xs, us, indexing="ij")
    M = float(max(abs(u_lo), abs(u_hi)))

    h = 1e-5
    c1 = float(np.max(np.abs(
        (np.asarray(flux.fu(X + h, U)) - np.asarray(flux.fu(X - h, U))) / (2 * h))))
    c2 = float(np.max(np.abs(np.asarray(flux.fuu(X, U)))))

    f_exact = np.asarray(flux.f(X, U), dtype=float)
    fx_exact = np.asarray(flux.fx(X, U), dtype=float)

    g_box = float(np.max(np.abs(g_of(flux, X, U))))

    rows = []
    for delta in deltas:
        delta = float(delta)
        af = ApproxFlux(flux, delta)
        f_err = float(np.max(np.abs(af.eval(X.ravel(), U.ravel()).reshape(X.shape)
                                    - f_exact)))
        fx_err = float(np.max(np.abs(af.eval_dx(X.ravel(), U.ravel()).reshape(X.shape)
                                     - fx_exact)))
        theta_hi = float(np.max(np.abs(flux.fu(xs, M + delta))))
        theta_lo = float(np.max(np.abs(flux.fu(xs, -(M + delta)))))
        bound_f = math.sqrt(2.0 * delta / alpha) * (1.0 + max(theta_hi, theta_lo)) + delta

        # C3 over all levels the box can reach (one cell above, both signs)
        g_levels = np.linspace(-(g_box + delta), g_box + delta, 81)
        g_levels = g_levels[np.abs(g_levels) > 1e-14]
        XL, GL = np.meshgrid(xs, g_levels, indexing="ij")
        u_prof = solve_level(flux, XL, GL)
        with np.errstate(divide="ignore", invalid="ignore"):
            du = -np.asarray(flux.fx(XL, u_prof)) / np.asarray(flux.fu(XL, u_prof))
        c3 = float(np.max(np.abs(np.where(np.isfinite(du), du, 0.0))))
        bound_fx = math.sqrt(2.0 * delta / alpha) * (c1 + 3.0 * c2 * c3)

        rows.append(FluxConvergenceRow(delta=delta, sup_f_err=f_err, bound_f=bound_f,
                                       sup_fx_err=fx_err, bound_fx=bound_fx))
    return rows


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    measured: float
    bound: float
    passed: bool
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "measured": self.measured, "bound": self.bound,
                "passed": bool(self.passed), "params": self.params}


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, measured, bound, passed, **params):
        self.checks.append(CheckResult(name, float(measured), float(bound),
                                       bool(passed), params))

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}
