"""Event-driven front tracking for piecewise-stationary states.

State is a time-stamped ordered list of fronts separating pieces on which the
g-field is constant.  Levels are stored as integer multiples of delta so that
closure under the scheme (levels stay on the delta-grid), total-variation
bookkeeping and merge detection are exact; floating point enters only through
front positions.  Between interactions each front obeys its own autonomous
Rankine-Hugoniot ODE; interactions are located by stepping onto predicted
contact times with a bisection fallback, and always resolve into at most one
front.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .stationary import solve_level, g_of

# fronts closer than this at a common time are one interaction point
TOL_POS = 1e-10
# time resolution of the earliest-contact bisection
TOL_EVENT = 1e-11
# default integrator step before event capping
H_ODE_DEFAULT = 0.01

KIND_SHOCK = 0
KIND_FAN = 1
_KIND_NAMES = {KIND_SHOCK: "shock", KIND_FAN: "fan_front"}

_MAX_LOOP = 500_000


class FrontFieldError(ValueError):
    pass


class AdmissibilityError(RuntimeError):
    """An interaction produced an upward jump above delta.

    The theory rules this out, so it can only be a solver defect; the state
    dump is attached for forensics.
    """

    def __init__(self, message, dump):
        self.dump = dump
        super().__init__(f"{message}\n{dump}")


class WindowExitError(RuntimeError):
    def __init__(self, position, time):
        self.position = position
        self.time = time
        super().__init__(f"front left the working window at x={position!r}, t={time!r}")


@dataclass(frozen=True)
class Front:
    """View of one tracked discontinuity (levels in real g units)."""

    id: int
    position: float
    g_left: float
    g_right: float
    kind: str
    birth_time: float


@dataclass(frozen=True)
class Event:
    time: float
    position: float
    consumed: tuple
    produced: Optional[int]
    tv_before: float
    tv_after: float
    grazing: bool = False


@dataclass
class EventLog:
    entries: list = field(default_factory=list)

    def append(self, event):
        if event.tv_after > event.tv_before:
            raise AssertionError("TV increased across an event")
        self.entries.append(event)

    def extend(self, other):
        for e in other.entries:
            self.append(e)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class FrontField:
    """Piecewise-stationary state: n fronts separating n+1 constant g-levels.

    ``z`` holds the integer level indices (g = delta * z), so adjacent pieces
    always chain consistently by construction.
    """

    time: float
    delta: float
    positions: np.ndarray  # shape (n,)
    z: np.ndarray          # shape (n+1,), int64
    ids: np.ndarray        # shape (n,), int64
    kinds: np.ndarray      # shape (n,), int8
    births: np.ndarray     # shape (n,)
    next_id: int = 0
    quantization: Optional["QuantizationDiagnostics"] = None

    @property
    def n_fronts(self):
        return len(self.positions)

    @property
    def g_leftmost(self):
        return self.delta * float(self.z[0])

    @property
    def fronts(self):
        d = self.delta
        return tuple(
            Front(int(self.ids[k]), float(self.positions[k]),
                  d * float(self.z[k]), d * float(self.z[k + 1]),
                  _KIND_NAMES[int(self.kinds[k])], float(self.births[k]))
            for k in range(self.n_fronts)
        )

    def tv_z(self):
        return int(np.sum(np.abs(np.diff(self.z)))) if self.n_fronts else 0

    def validate(self, strict_positions=True):
        n = self.n_fronts
        if len(self.z) != n + 1 or len(self.ids) != n or len(self.kinds) != n:
            raise FrontFieldError("inconsistent array lengths")
        if n == 0:
            return self
        if not np.all(np.isfinite(self.positions)):
            raise FrontFieldError("non-finite front position")
        gaps = np.diff(self.positions)
        if strict_positions and np.any(gaps <= 0):
            raise FrontFieldError("front positions not strictly increasing")
        if not strict_positions and np.any(gaps < 0):
            raise FrontFieldError("front positions not ordered")
        dz = np.diff(self.z)
        if np.any(dz == 0):
            raise FrontFieldError("null front (equal adjacent levels)")
        if np.any(dz > 1):
            raise FrontFieldError("upward jump above delta")
        fan = dz == 1
        if np.any(fan != (self.kinds == KIND_FAN)):
            raise FrontFieldError("front kind inconsistent with its level jump")
        if len(np.unique(self.ids)) != n:
            raise FrontFieldError("duplicate front ids")
        return self


def tv_g(field):
    """Spatial total variation of the g-field (exact: delta times integer TV)."""
    return field.delta * field.tv_z()


def empty_field(delta, time=0.0):
    return FrontField(
        time=time, delta=delta,
        positions=np.empty(0), z=np.zeros(1, dtype=np.int64),
        ids=np.empty(0, dtype=np.int64), kinds=np.empty(0, dtype=np.int8),
        births=np.empty(0), next_id=0,
    )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def piece_index(field, x):
    """Index of the constant piece containing x, right-continuous at fronts."""
    return np.searchsorted(field.positions, np.asarray(x, dtype=float), side="right")


def sample_z(field, x):
    return field.z[piece_index(field, x)]


def sample_g(field, x):
    out = field.delta * sample_z(field, x).astype(float)
    return float(out) if np.ndim(x) == 0 else out


def sample_u(flux, field, x):
    """u = U[g-level](x) on the piece containing x (cadlag at fronts)."""
    g = field.delta * sample_z(field, x).astype(float)
    u = solve_level(flux, np.asarray(x, dtype=float), g)
    return float(u) if np.ndim(x) == 0 else u


# ---------------------------------------------------------------------------
# quantization and initial fronts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantizationDiagnostics:
    l1_bound: float       # (delta/2)|window| + modulus-of-continuity term
    l1_sampled: float     # sum |G0(x_i) - delta z_i| dx over the cells
    lipschitz_est: float  # max adjacent |dG0/dx| from the samples
    dx: float


def _round_toward_zero(t):
    # nearest integer with ties broken toward 0
    return np.copysign(np.ceil(np.abs(t) - 0.5), t).astype(np.int64)


def quantize_initial(flux, u0, delta, window, cells):
    """Sample g(x, u0(x)) at cell midpoints, round to the delta-grid, merge.

    Levels outside the window are forced to zero (compact support), so the
    outermost pieces are the zero solution and all activity stays inside the
    window plus a speed-times-horizon margin.
    """
    flux.require_alpha()
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ValueError(f"degenerate window {window}")
    cells = int(cells)
    if cells < 1:
        raise ValueError("need at least one cell")
    dx = (hi - lo) / cells
    mids = lo + (np.arange(cells) + 0.5) * dx

    try:
        u_samples = np.asarray(u0(mids), dtype=float)
        if u_samples.shape != mids.shape:
            raise TypeError
    except (TypeError, ValueError):
        u_samples = np.array([float(u0(x)) for x in mids])
    if not np.all(np.isfinite(u_samples)):
        bad = mids[~np.isfinite(u_samples)][0]
        raise ValueError(f"initial data is not finite at x={bad!r}")

    g0 = np.asarray(g_of(flux, mids, u_samples), dtype=float)
    z_cells = _round_toward_zero(g0 / delta)

    # run-length encode the cells, with zero-level padding outside the window
    change = np.flatnonzero(np.diff(z_cells)) + 1
    starts = np.concatenate(([0], change))
    levels = list(z_cells[starts])
    breaks = list(lo + change * dx)
    levels = [0] + levels + [0]
    breaks = [lo] + breaks + [hi]
    # drop boundary breaks that separate equal levels
    k = 0
    while k < len(breaks):
        if levels[k] == levels[k + 1]:
            del breaks[k], levels[k + 1]
        else:
            k += 1

    lip = float(np.max(np.abs(np.diff(g0)))) / dx if cells > 1 else 0.0
    diag = QuantizationDiagnostics(
        l1_bound=(delta / 2.0) * (hi - lo) + (lip * dx / 2.0) * (hi - lo),
        l1_sampled=float(np.sum(np.abs(g0 - delta * z_cells)) * dx),
        lipschitz_est=lip,
        dx=dx,
    )
    field_ = initial_fronts(breaks, levels, delta)
    return replace(field_, quantization=diag)


def initial_fronts(breaks, levels, delta, time=0.0):
    """Resolve each raw jump of a piecewise-constant g-field into its fronts.

    Downward jumps become one entropic shock; an upward jump of m levels
    becomes its m-front fan, all co-located at the jump (convexity separates
    them on the first step).  Levels are integer multiples of delta.
    """
    levels = [int(z) for z in levels]
    breaks = [float(b) for b in breaks]
    if len(levels) != len(breaks) + 1:
        raise FrontFieldError("need one more level than break positions")
    if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
        raise FrontFieldError("break positions must be strictly increasing")

    pos, zs, kinds = [], [levels[0]], []
    for k, b in enumerate(breaks):
        z_l, z_r = levels[k], levels[k + 1]
        dz = z_r - z_l
        if dz == 0:
            raise FrontFieldError(f"null jump at x={b}")
        if dz < 0:
            pos.append(b)
            zs.append(z_r)
            kinds.append(KIND_SHOCK)
        else:
            for step in range(dz):
                pos.append(b)
                zs.append(z_l + step + 1)
                kinds.append(KIND_FAN)
    n = len(pos)
    field_ = FrontField(
        time=time, delta=float(delta),
        positions=np.asarray(pos, dtype=float),
        z=np.asarray(zs, dtype=np.int64),
        ids=np.arange(n, dtype=np.int64),
        kinds=np.asarray(kinds, dtype=np.int8),
        births=np.full(n, time, dtype=float),
        next_id=n,
    )
    return field_.validate(strict_positions=False)


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------

class _State:
    """Mutable working copy of a FrontField during one advance call."""

    __slots__ = ("t", "y", "z", "ids", "kinds", "births", "next_id", "ul", "ur")

    def __init__(self, f):
        self.t = f.time
        self.y = f.positions.copy()
        self.z = f.z.copy()
        self.ids = f.ids.copy()
        self.kinds = f.kinds.copy()
        self.births = f.births.copy()
        self.next_id = f.next_id
        self.ul = None  # warm-start caches for the profile inversions
        self.ur = None

    def remove_range(self, a, b, produced=None):
        """Replace fronts a..b (inclusive) by ``produced`` (or nothing)."""
        keep = np.ones(len(self.y), dtype=bool)
        keep[a:b + 1] = False
        if produced is None:
            self.y = self.y[keep]
            self.ids = self.ids[keep]
            self.kinds = self.kinds[keep]
            self.births = self.births[keep]
            self.z = np.delete(self.z, np.arange(a + 1, b + 2))
            self.ul = self.ur = None
            return
        rho, fid, kind, birth = produced
        self.y = np.concatenate((self.y[:a], [rho], self.y[b + 1:]))
        self.ids = np.concatenate((self.ids[:a], [fid], self.ids[b + 1:]))
        self.kinds = np.concatenate(
            (self.kinds[:a], np.array([kind], dtype=np.int8), self.kinds[b + 1:]))
        self.births = np.concatenate((self.births[:a], [birth], self.births[b + 1:]))
        self.z = np.delete(self.z, np.arange(a + 1, b + 1))
        self.ul = self.ur = None

    def tv_z(self):
        return int(np.sum(np.abs(np.diff(self.z)))) if len(self.y) else 0

    def to_field(self, delta, quantization=None):
        return FrontField(
            time=self.t, delta=delta,
            positions=self.y.copy(), z=self.z.copy(), ids=self.ids.copy(),
            kinds=self.kinds.copy(), births=self.births.copy(),
            next_id=self.next_id, quantization=quantization,
        )

    def dump(self):
        return (f"t={self.t!r}\npositions={self.y!r}\nz={self.z!r}\n"
                f"ids={self.ids!r}\nkinds={self.kinds!r}")


class Tracker:
    """Front tracking engine for one flux / delta / working window."""

    def __init__(self, flux, delta, window, h_ode=H_ODE_DEFAULT):
        flux.require_alpha()
        self.flux = flux
        self.delta = float(delta)
        self.window = (float(window[0]), float(window[1]))
        self.h_ode = float(h_ode)
        self._vmax_cache = {}

    # -- speeds -------------------------------------------------------------

    def _speeds(self, st, y):
        """Rankine-Hugoniot speeds of all fronts at positions y (vectorized)."""
        d = self.delta
        gl = d * st.z[:-1].astype(float)
        gr = d * st.z[1:].astype(float)
        ul = solve_level(self.flux, y, gl, guess=st.ul)
        ur = solve_level(self.flux, y, gr, guess=st.ur)
        st.ul, st.ur = ul, ur
        den = ul - ur
        if np.any(np.abs(den) < 1e-9 * np.maximum(1.0, np.maximum(np.abs(ul), np.abs(ur)))):
            raise RuntimeError("degenerate front states; adjacent levels should have merged")
        return (np.abs(gl) - np.abs(gr)) / den

    def _rk4(self, st, y, h):
        k1 = self._speeds(st, y)
        k2 = self._speeds(st, y + 0.5 * h * k1)
        k3 = self._speeds(st, y + 0.5 * h * k2)
        k4 = self._speeds(st, y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def v_max(self, field):
        """Speed bound for the field's level range (levels never grow, so the
        bound from the initial range is valid for all time)."""
        zmax = int(np.max(np.abs(field.z))) if len(field.z) else 0
        hit = self._vmax_cache.get(zmax)
        if hit is not None:
            return hit
        if zmax == 0:
            self._vmax_cache[0] = 0.0
            return 0.0
        g_max = self.delta * zmax
        m = np.sqrt(2.0 * g_max / self.flux.require_alpha()) * 1.01
        xs = np.linspace(self.window[0], self.window[1], 2048)
        v = float(max(np.max(np.abs(self.flux.fu(xs, m))),
                      np.max(np.abs(self.flux.fu(xs, -m)))))
        self._vmax_cache[zmax] = v
        return v

    # -- events ---------------------------------------------------------------

    def _resolve_leftmost_cluster(self, st, contact, v_app, graze_v, log):
        """Merge the leftmost run of in-contact pairs into a single front."""
        first = int(np.flatnonzero(contact)[0])
        last = first
        while last + 1 < len(contact) and contact[last + 1]:
            last += 1
        a, b = first, last + 1  # fronts a..b collide
        z_l = int(st.z[a])
        z_r = int(st.z[b + 1])
        rho = 0.5 * (float(st.y[a]) + float(st.y[b]))
        consumed = tuple(int(i) for i in st.ids[a:b + 1])
        grazing = bool(np.all(np.abs(v_app[first:last + 1]) <= graze_v))
        tv_before = st.tv_z()

        dz = z_r - z_l
        if dz > 1:
            raise AdmissibilityError(
                f"interaction at (t={st.t}, x={rho}) would create upward jump "
                f"of {dz} levels (z_l={z_l}, z_r={z_r})", st.dump())
        if dz == 0:
            st.remove_range(a, b)
            produced = None
        else:
            fid = st.next_id
            st.next_id += 1
            kind = KIND_FAN if dz == 1 else KIND_SHOCK
            st.remove_range(a, b, produced=(rho, fid, kind, st.t))
            produced = fid
        tv_after = st.tv_z()
        if tv_after > tv_before:
            raise AdmissibilityError(
                f"TV increased {tv_before} -> {tv_after} at (t={st.t}, x={rho})",
                st.dump())
        log.append(Event(
            time=st.t, position=rho, consumed=consumed, produced=produced,
            tv_before=self.delta * tv_before, tv_after=self.delta * tv_after,
            grazing=grazing,
        ))

    # -- main loop ------------------------------------------------------------

    def advance(self, field_, t_target):
        """Integrate the field to t_target, resolving interactions on the way.

        Returns (new field, event log).  The input field is not modified.
        """
        t_target = float(t_target)
        if t_target < field_.time:
            raise ValueError(f"cannot advance backwards: {field_.time} -> {t_target}")
        if field_.delta != self.delta:
            raise ValueError("field delta does not match tracker delta")
        log = EventLog()
        st = _State(field_)
        vmax = self.v_max(field_)
        graze_v = 1e-12 * (1.0 + vmax)

        for _ in range(_MAX_LOOP):
            if st.t >= t_target:
                break
            n = len(st.y)
            if n == 0:
                st.t = t_target
                break

            v = self._speeds(st, st.y)
            if n == 1:
                gaps = np.empty(0)
                v_app = np.empty(0)
            else:
                gaps = np.diff(st.y)
                v_app = v[:-1] - v[1:]  # positive when the pair approaches

            # resolve contacts at the current time (approaching or grazing only;
            # freshly split fan siblings separate and are excluded naturally)
            contact = (gaps <= TOL_POS) & (v_app >= -graze_v)
            if np.any(contact):
                self._resolve_leftmost_cluster(st, contact, v_app, graze_v, log)
                continue

            # step: aim at the earliest predicted pairwise contact
            h = min(self.h_ode, t_target - st.t)
            approaching = v_app > 0.0
            if np.any(approaching):
                h = min(h, float(np.min(gaps[approaching] / v_app[approaching])))
            y_try = self._rk4(st, st.y, h)

            trouble = np.empty(0, dtype=bool)
            if n > 1:
                gaps_try = np.diff(y_try)
                trouble = (gaps_try <= TOL_POS) & (gaps_try < gaps)
            if not np.any(trouble):
                if n > 1 and gaps_try.min() <= 0.0:
                    raise RuntimeError("ordering lost without a contact flag")
                st.y = y_try
                st.t += h
                self._check_window(st)
                continue

            # bisect the earliest time any troubled pair reaches contact range
            t_idx = np.flatnonzero(trouble)
            lo, hi = 0.0, h
            while hi - lo > TOL_EVENT:
                mid = 0.5 * (lo + hi)
                y_mid = self._rk4(st, st.y, mid)
                if np.min(y_mid[t_idx + 1] - y_mid[t_idx]) <= TOL_POS:
                    hi = mid
                else:
                    lo = mid
            st.y = self._rk4(st, st.y, hi)
            st.t += hi
            self._check_window(st)
            # the triggering pair is now in contact; next iteration resolves it
        else:
            raise RuntimeError(
                f"advance exceeded {_MAX_LOOP} iterations at t={st.t} "
                f"(front count {len(st.y)}); suspect a pathological grazing cycle")

        out = st.to_field(self.delta, quantization=field_.quantization)
        out = replace(out, time=t_target)
        # a (near-)no-op advance may leave just-born fan siblings co-located
        strict = t_target - field_.time > TOL_EVENT
        return out.validate(strict_positions=strict), log

    def _check_window(self, st):
        if len(st.y) == 0:
            return
        lo, hi = self.window
        slack = 1e-12 * (1.0 + abs(hi - lo))
        if st.y[0] < lo - slack or st.y[-1] > hi + slack:
            pos = float(st.y[0]) if st.y[0] < lo - slack else float(st.y[-1])
            raise WindowExitError(pos, st.t)

    # -- conveniences -----------------------------------------------------------

    def initial_field(self, u0, window, cells):
        return quantize_initial(self.flux, u0, self.delta, window, cells)

    def sample_u(self, field_, x):
        return sample_u(self.flux, field_, x)


class TrackedSolution:
    """Space-time sampler over a run: snapshots are created on demand.

    Queries may come in any order; each new time advances from the latest
    earlier snapshot, so a time-sorted sweep costs one full integration.
    """

    def __init__(self, tracker, field0):
        self.tracker = tracker
        self._times = [field0.time]
        self._fields = [field0]

    def field_at(self, t):
        t = float(t)
        k = bisect.bisect_right(self._times, t) - 1
        if k < 0:
            raise ValueError(f"time {t} precedes the initial data ({self._times[0]})")
        if self._times[k] == t:
            return self._fields[k]
        advanced, _ = self.tracker.advance(self._fields[k], t)
        self._times.insert(k + 1, t)
        self._fields.insert(k + 1, advanced)
        return advanced

    def sample_u(self, x, t):
        return sample_u(self.tracker.flux, self.field_at(t), x)

    def sample_g(self, x, t):
        return sample_g(self.field_at(t), x)

    def __call__(self, x, t):
        return self.sample_u(x, t)


def l1_g_distance(field_a, field_b, lo, hi):
    """Exact L1 distance between two piecewise-constant g-fields on [lo, hi]."""
    cuts = np.unique(np.concatenate((
        [lo, hi],
        field_a.positions[(field_a.positions > lo) & (field_a.positions < hi)],
        field_b.positions[(field_b.positions > lo) & (field_b.positions < hi)],
    )))
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    ga = field_a.delta * field_a.z[piece_index(field_a, mids)].astype(float)
    gb = field_b.delta * field_b.z[piece_index(field_b, mids)].astype(float)
    return float(np.sum(np.abs(ga - gb) * np.diff(cuts)))
