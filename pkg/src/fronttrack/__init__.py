"""Front tracking for scalar conservation laws with heterogeneous convex flux.

Solves u_t + f(x, u)_x = 0 for fluxes that vanish to first order at u = 0,
are uniformly convex in u and have finite propagation speeds.  The solver
state is piecewise stationary: the sign-flux field g(x, u) = sgn(u) f(x, u)
is piecewise constant on the delta-grid and only front positions evolve,
each along its own Rankine-Hugoniot ODE, with interactions resolved exactly
into single fronts.
"""

__version__ = "0.1.0"

from .fluxes import (Flux, SpeedEnvelope, AssumptionReport, make_builtin_flux,
                     audit_assumptions, certify, speed_envelope, default_envelope,
                     InvalidFluxParams)
from .stationary import (g_of, solve_level, stationary_profile, StationaryProfile,
                         inversion_gap_bound, InversionError, TOL_INV)
from .riemann import (classify, front_speed, build_fan, solve_riemann, RiemannFan,
                      ApproxFlux, approx_flux_eval, approx_flux_dx,
                      DegenerateStatesError)
from .tracker import (Front, FrontField, Event, EventLog, Tracker, TrackedSolution,
                      quantize_initial, initial_fronts, sample_u, sample_g, tv_g,
                      l1_g_distance, empty_field, AdmissibilityError,
                      WindowExitError, TOL_POS, TOL_EVENT)
from .profiles import make_initial, smooth_bump, smooth_bump_prime
from .validation import (TestFunction, QuadSpec, kruzkov_residual,
                         approx_kruzkov_residual, entropy_battery, entropy_tol,
                         characteristic_check, characteristic_fan,
                         SingleFrontSolution, FVGrid, fv_reference, l1_distance,
                         l1_u_fields, domain_of_dependence_check,
                         flux_convergence_check, ValidationReport, CheckResult)

__all__ = [name for name in dir() if not name.startswith("_")]
