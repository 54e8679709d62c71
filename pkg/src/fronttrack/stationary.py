"""Stationary profiles: the sign-flux map g and its inversion U[g].

g(x, u) = sgn(u) f(x, u) is strictly increasing in u, so fixing a level g
and solving f(x, u) = |g| on the branch sgn(u) = sgn(g) yields the unique
stationary profile U[g].  Front positions are the only dynamic quantities in
the tracker; everything else is evaluated through these profiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# inversion residual target, relative to max(1, |level|); root-finding on a
# C^2 monotone branch is cheap and downstream event geometry needs tight levels
TOL_INV = 1e-12

# analytically guaranteed bracket: f >= alpha u^2/2 makes f(x, 1.01*sqrt(2g/alpha))
# overshoot the target level
BRACKET_PAD = 1.01

_MAX_NEWTON = 100


class InversionError(RuntimeError):
    """Level exceeds the flux's reachable range at some x (bad alpha or box)."""

    def __init__(self, x, level):
        self.x = x
        self.level = level
        super().__init__(f"cannot bracket level {level!r} at x={x!r}")


def g_of(flux, x, u):
    """Sign-flux map sgn(u) f(x, u); strictly increasing in u at fixed x."""
    return np.sign(u) * flux.f(x, u)


def solve_level(flux, x, g, guess=None, tol_rel=TOL_INV):
    """Vectorized inversion: u with f(x, u) = |g| and sgn(u) = sgn(g).

    Newton on the monotone branch, started from the analytic upper bracket
    (or a warm ``guess``).  Convexity makes the from-above iteration monotone,
    so no bisection safeguard is needed beyond clipping into [0, bracket].
    """
    alpha = flux.require_alpha()
    x, g = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(g, dtype=float))
    g_abs = np.abs(g)
    s = np.sign(g)
    nonzero = g_abs > 0.0
    u_hi = np.sqrt(2.0 * g_abs / alpha) * BRACKET_PAD
    tol = tol_rel * np.maximum(1.0, g_abs)

    if guess is None:
        w = u_hi / BRACKET_PAD
    else:
        w = np.clip(np.abs(np.broadcast_to(np.asarray(guess, dtype=float), g.shape)),
                    0.0, u_hi)
        w = np.where(w > 0.0, w, u_hi / BRACKET_PAD)
    w = np.where(nonzero, w, 0.0)

    active = nonzero.copy()
    for _ in range(_MAX_NEWTON):
        phi = flux.f(x, s * w) - g_abs
        active = nonzero & (np.abs(phi) > tol)
        if not np.any(active):
            break
        dphi = s * flux.fu(x, s * w)  # |f_u| on the branch, > 0 away from u=0
        step = np.where(active, phi / np.where(dphi > 0.0, dphi, 1.0), 0.0)
        w = np.clip(w - step, 0.0, u_hi)
    else:
        bad = np.argwhere(active)[0]
        raise InversionError(float(x[tuple(bad)]), float(g[tuple(bad)]))
    return s * w


@dataclass
class StationaryProfile:
    """Lazy stationary solution x -> U[level](x) for one g-level.

    Scalar queries are memoized per profile; the cache is transparent (pure
    function semantics, identical results with or without it).
    """

    flux: object
    level: float
    _cache: dict = field(default_factory=dict, repr=False)

    def eval_u(self, x):
        if np.ndim(x) == 0:
            x = float(x)
            hit = self._cache.get(x)
            if hit is None:
                hit = float(solve_level(self.flux, x, self.level))
                self._cache[x] = hit
            return hit
        return solve_level(self.flux, np.asarray(x, dtype=float), self.level)

    def eval_dx(self, x):
        """Implicit differentiation: dU/dx = -f_x / f_u along the profile."""
        if self.level == 0.0:
            return 0.0 if np.ndim(x) == 0 else np.zeros(np.shape(x))
        u = self.eval_u(x)
        out = -self.flux.fx(x, u) / self.flux.fu(x, u)
        return float(out) if np.ndim(x) == 0 else out

    def min_abs(self, window, n=1024):
        """Sampled min of |U| over a window; diagnostic only (the theory keeps
        nonzero profiles away from zero but gives no closed-form bound)."""
        xs = np.linspace(window[0], window[1], n)
        return float(np.min(np.abs(self.eval_u(xs))))

    def __call__(self, x):
        return self.eval_u(x)


def stationary_profile(flux, level):
    """Profile U[level]; level 0 is the zero solution, others are root-backed."""
    flux.require_alpha()
    return StationaryProfile(flux=flux, level=float(level))


def inversion_gap_bound(g1, g2, alpha):
    """Uniform sup-norm bound on U[g1] - U[g2] from the convexity constant.

    Same-sign levels (or one zero): sqrt(2 |g1 - g2| / alpha).  Strictly
    opposite signs: sqrt(2/alpha) (sqrt|g1| + sqrt|g2|), via the zero profile.
    """
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if g1 * g2 < 0.0:
        return np.sqrt(2.0 / alpha) * (np.sqrt(abs(g1)) + np.sqrt(abs(g2)))
    return np.sqrt(2.0 * abs(g1 - g2) / alpha)
