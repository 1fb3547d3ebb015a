"""Spontaneous localization events on twisted-periodic wave functions.

Collapses hit at rate r(x|psi) = <psi| L(x) psi>, where L(x) multiplies by a
Gaussian bump of width ``a`` centred at x (wrapped geodesic distance on the
ring, one bump per particle, summed for identical particles).  A collapse
at x maps psi to L(x)^(1/2) psi, renormalized.  The bump is a function on
the base lifted to the cover, so in the gauge-fixed storage a collapse is a
real periodic multiplier: it maps twisted-periodic states to
twisted-periodic states with the same factor, and commutes with the
exchange (anti)symmetrization.

The event times form an inhomogeneous Poisson process simulated by exact
thinning against a grid-sup rate bound, refreshed every ``bound_refresh``
propagation steps; the collapse centre is drawn from r(x|psi) / total rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covering import TWO_PI
from .errors import ConfigError, PhysicsError, ToleranceError
from .ensembles import sample_from_grid_density
from .propagation import evolve

TWIST_PRESERVATION_TOL = 1e-9


def wrapped_distance(x, q):
    """Geodesic distance on the circle of circumference 2 pi."""
    d = np.mod(np.asarray(q) - x, TWO_PI)
    return np.minimum(d, TWO_PI - d)


def localization_bump(theta, x, a):
    d = wrapped_distance(x, theta)
    return np.exp(-d ** 2 / (2.0 * a ** 2))


def collapse_multiplier(state, x, lam, a, label=None):
    """The rate-operator multiplier on the state's base grid.

    One particle: lam * bump(theta).  Two particles: lam * (bump(theta_1) +
    bump(theta_2)) for the identical-particle variant (label None), or the
    single labelled bump for the distinguishable variant.
    """
    if a <= 0:
        raise ConfigError("localization width a must be positive")
    theta = state.theta
    if state.space.kind == "ring":
        if label is not None:
            raise ConfigError("labels apply to multi-particle states")
        return lam * localization_bump(theta, x, a)
    g = localization_bump(theta, x, a)
    if label is None:
        return lam * (g[:, None] + g[None, :])
    if label == 0:
        return lam * np.broadcast_to(g[:, None], state.values.shape).copy()
    if label == 1:
        return lam * np.broadcast_to(g[None, :], state.values.shape).copy()
    raise ConfigError(f"label must be None, 0 or 1, got {label!r}")


def collapse_rate(state, x, lam, a, label=None):
    """r(x|psi): expectation of the rate operator in the current state."""
    mult = collapse_multiplier(state, x, lam, a, label)
    rho = state.density()
    if state.space.kind == "ring":
        return float(np.sum(mult * rho) * state.dx)
    return float(np.sum(mult * rho) * state.dx ** 2)


def rate_over_centers(state, lam, a):
    """r(x|psi) for every grid centre x at once (circular convolution)."""
    n = state.n_points
    theta = state.theta
    kernel = localization_bump(theta, 0.0, a)
    kernel_hat = np.fft.fft(kernel)
    if state.space.kind == "ring":
        rho = state.density()
        conv = np.real(np.fft.ifft(kernel_hat * np.fft.fft(rho)))
        return lam * conv * state.dx
    rho = state.density()
    marg1 = rho.sum(axis=1) * state.dx
    marg2 = rho.sum(axis=0) * state.dx
    conv = np.real(np.fft.ifft(kernel_hat * np.fft.fft(marg1 + marg2)))
    return lam * conv * state.dx


def total_rate(state, lam, a):
    """Integral of r(x|psi) over the ring of centres (grid quadrature)."""
    return float(np.sum(rate_over_centers(state, lam, a)) * state.dx)


@dataclass
class CollapseEvent:
    time: float
    center: float
    pre_norm: float
    post_norm: float
    label: object = None

    def csv_row(self):
        return (f"{self.time:.9g}", f"{self.center:.12g}",
                f"{self.pre_norm:.12g}", f"{self.post_norm:.12g}",
                "" if self.label is None else str(self.label))


def apply_collapse(state, x, lam, a, label=None):
    """Multiply by the square-root bump profile and renormalize.

    Returns (new_state, event).  Raises when the rate at x vanishes (a
    collapse there is impossible).  The multiplier is a real positive
    base-side profile, so the twist sector and exchange sector survive.
    """
    rate = collapse_rate(state, x, lam, a, label)
    if rate <= 0:
        raise PhysicsError(f"collapse rate vanishes at x={x}; cannot collapse there")
    mult = np.sqrt(collapse_multiplier(state, x, lam, a, label))
    pre_norm = state.norm()
    if state.space.kind == "ring":
        values = state.values * mult[None, :]
    else:
        values = state.values * mult
    collapsed = state.with_values(values)
    post_norm = collapsed.norm()
    event = CollapseEvent(time=math.nan, center=float(x),
                          pre_norm=pre_norm, post_norm=post_norm, label=label)
    return collapsed.with_values(values / post_norm), event


def draw_center(state, lam, a, rng):
    """Sample a collapse centre from r(x|psi) / integral r."""
    return float(sample_from_grid_density(rate_over_centers(state, lam, a),
                                          1, rng)[0])


@dataclass
class GrwResult:
    final_state: object
    events: list
    log: list = field(default_factory=list)
    max_twist_residual: float = 0.0
    max_exchange_residual: float = 0.0

    @property
    def n_events(self):
        return len(self.events)


def simulate_grw(state, potential, t_final, lam, a, seed, dt=1e-3,
                 bound_refresh=100, bound_safety=1.05, allow_aperiodic=False):
    """Schrodinger evolution punctuated by thinning-sampled collapses.

    Between events the state follows the split-step propagator; candidate
    event times come from a homogeneous Poisson clock at the grid-sup rate
    bound and are accepted with probability (actual total rate) / bound.  A
    stale bound (actual rate above it) is refreshed and the interval retried,
    with a log entry.  Deterministic for a given seed.

    Twist preservation is monitored at every event boundary; a residual
    above 1e-9 raises unless ``allow_aperiodic`` opts out of the periodicity
    bookkeeping (the collapse operator itself never needs it).
    """
    if lam < 0:
        raise ConfigError("collapse rate constant must be nonnegative")
    rng = np.random.default_rng(seed)
    state = state.normalized()
    two_particle = state.space.kind == "two_particle_ring"
    events = []
    log = []
    result = GrwResult(final_state=state, events=events, log=log)

    def monitor(s, when):
        res = s.twist_residual()
        result.max_twist_residual = max(result.max_twist_residual, res)
        if res > TWIST_PRESERVATION_TOL and not allow_aperiodic:
            raise ToleranceError(f"twist-preservation@{when}", res,
                                 TWIST_PRESERVATION_TOL)
        if two_particle:
            xres = s.exchange_residual()
            result.max_exchange_residual = max(result.max_exchange_residual, xres)

    t = 0.0
    if lam == 0.0:
        steps = int(round(t_final / dt))
        state = evolve(state, potential, dt, steps)
        remainder = t_final - steps * dt
        if remainder > 1e-15:
            state = evolve(state, potential, remainder, 1)
        monitor(state, "final")
        result.final_state = state
        return result

    bound = bound_safety * total_rate(state, lam, a)
    steps_since_refresh = 0
    while t < t_final - 1e-15:
        wait = rng.exponential(1.0 / bound)
        t_candidate = min(t + wait, t_final)
        # advance in dt chunks, refreshing the bound on schedule
        span = t_candidate - t
        n_full = int(span / dt)
        for _ in range(n_full):
            state = evolve(state, potential, dt, 1)
            steps_since_refresh += 1
            if steps_since_refresh >= bound_refresh:
                bound = max(bound, bound_safety * total_rate(state, lam, a))
                steps_since_refresh = 0
        remainder = span - n_full * dt
        if remainder > 1e-15:
            state = evolve(state, potential, remainder, 1)
        t = t_candidate
        if t >= t_final - 1e-15:
            break
        actual = total_rate(state, lam, a)
        if actual > bound:
            log.append({"t": t, "event": "stale-bound",
                        "bound": bound, "actual": actual})
            bound = bound_safety * actual
            continue  # retry the interval from the refreshed bound
        if rng.random() * bound <= actual:
            center = draw_center(state, lam, a, rng)
            state, event = apply_collapse(state, center, lam, a)
            event.time = t
            events.append(event)
            monitor(state, f"event-{len(events)}")
            bound = bound_safety * total_rate(state, lam, a)
            steps_since_refresh = 0
    monitor(state, "final")
    result.final_state = state
    return result
