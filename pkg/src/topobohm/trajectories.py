"""Bohmian velocity fields and trajectory integration on the base space.

The velocity on the ring, in the gauge-fixed storage, is

    v(theta) = [ Im(chi, d chi) + sum_j (beta_j / 2 pi) |chi_j|^2 ]
               / (chi, chi) / radius^2

which reproduces the cover-side phase-gradient formula; for a flux-gauge
state the constant -e A shift appears instead of the twist angles.  Fields
derived this way are deck equivariant, so the motion downstairs does not
depend on the choice of lift.

Integration is RK4 in the base coordinates with spectral (trigonometric)
interpolation of the wave in space and half-step propagation in time; the
half-step states keep RK4's formal order without temporal interpolation.
Trajectories halt cleanly when they reach a node (interpolated density
below eps_node times the grid maximum); nodes carry zero measure, so the
halt policy does not disturb ensemble statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covering import TWO_PI, RingPoint, Winding
from .errors import ConfigError, PhysicsError
from .propagation import evolve, evolve_vector_potential, fourier_modes

DEFAULT_EPS_NODE = 1e-12

STATUS_COMPLETED = "completed"
STATUS_HALTED = "halted-at-node"
STATUS_LEFT_RESOLUTION = "left-resolution"  # never emitted on compact grids


# ---------------------------------------------------------------------------
# velocity fields
# ---------------------------------------------------------------------------

def velocity_field(state, flux_gauge=None, eps_node=DEFAULT_EPS_NODE):
    """Velocity samples on the base grid plus a node mask.

    ``flux_gauge`` is None for twisted states, or (flux, charge) when the
    state lives in the plainly periodic vector-potential gauge.  Returns
    (v, node_mask): velocity is meaningless where the density is below
    eps_node times its maximum, and those samples are flagged.
    """
    if state.space.kind == "two_particle_ring":
        return _velocity_field_torus(state, eps_node)
    values = state.values
    n = state.n_points
    modes = fourier_modes(n)
    coeffs = np.fft.fft(values, axis=1)
    dvalues = np.fft.ifft(1j * modes[None, :] * coeffs, axis=1)
    rho = np.sum(np.abs(values) ** 2, axis=0)
    current = np.sum(np.imag(np.conj(values) * dvalues), axis=0)
    current = current + np.sum(
        (state.sector_betas[:, None] / TWO_PI) * np.abs(values) ** 2, axis=0)
    if flux_gauge is not None:
        flux, charge = flux_gauge
        current = current - charge * flux / TWO_PI * rho
    node_mask = rho < eps_node * np.max(rho)
    v = np.zeros_like(rho)
    ok = ~node_mask
    v[ok] = current[ok] / rho[ok] / state.radius ** 2
    return v, node_mask


def _velocity_field_torus(state, eps_node):
    values = state.values
    n = state.n_points
    modes = fourier_modes(n)
    coeffs = np.fft.fft2(values)
    d1 = np.fft.ifft2(1j * modes[:, None] * coeffs)
    d2 = np.fft.ifft2(1j * modes[None, :] * coeffs)
    rho = np.abs(values) ** 2
    node_mask = rho < eps_node * np.max(rho)
    v = np.zeros(values.shape + (2,))
    ok = ~node_mask
    v[..., 0][ok] = np.imag(np.conj(values[ok]) * d1[ok]) / rho[ok]
    v[..., 1][ok] = np.imag(np.conj(values[ok]) * d2[ok]) / rho[ok]
    return v / state.radius ** 2, node_mask


def velocity_sheets(state, n_sheets=3):
    """Cover-side velocity on deck translates, for the projectability test.

    Sheet arrays are computed honestly from the reconstructed psi on each
    sheet (not copied), so the deck-equivariance check is a real check.
    """
    sheets = state.reconstruct_sheets(n_sheets)
    modes = fourier_modes(state.n_points)
    out = {}
    for winding, psi in sheets.items():
        dpsi = np.fft.ifft(1j * modes[None, :] * np.fft.fft(psi, axis=1), axis=1)
        rho = np.sum(np.abs(psi) ** 2, axis=0)
        current = np.sum(np.imag(np.conj(psi) * dpsi), axis=0)
        out[winding] = current / rho / state.radius ** 2
    return out


class _RingEvaluator:
    """Spectral point evaluation of the velocity of one wave snapshot.

    Fourier coefficients below 1e-13 of the spectral peak are dropped before
    evaluation; a smooth packet occupies a few dozen modes, which makes the
    per-point trigonometric sums cheap without leaving band-limited-exact
    territory at any tolerance the trajectories care about.
    """

    COEFF_CUT = 1e-13

    def __init__(self, state, flux_gauge=None, velocity_factor=1.0):
        n = state.n_points
        modes = fourier_modes(n)
        coeffs = np.fft.fft(state.values, axis=1) / n              # (k, n)
        weight = np.max(np.abs(coeffs), axis=0)
        keep = weight > self.COEFF_CUT * np.max(weight)
        self.modes = modes[keep]
        self.coeffs = coeffs[:, keep]
        self.dcoeffs = self.coeffs * (1j * self.modes[None, :])
        self.betas = state.sector_betas / TWO_PI
        self.offset = 0.0
        if flux_gauge is not None:
            flux, charge = flux_gauge
            self.offset = -charge * flux / TWO_PI
        self.inv_r2 = 1.0 / state.radius ** 2
        self.max_density = float(np.max(np.sum(np.abs(state.values) ** 2, axis=0)))
        self.velocity_factor = velocity_factor

    def __call__(self, thetas):
        basis = np.exp(1j * np.outer(thetas, self.modes))          # (M, m)
        chi = basis @ self.coeffs.T                                # (M, k)
        dchi = basis @ self.dcoeffs.T
        rho = np.sum(np.abs(chi) ** 2, axis=1)
        current = np.sum(np.imag(np.conj(chi) * dchi), axis=1)
        current += np.abs(chi) ** 2 @ self.betas
        current += self.offset * rho
        safe = np.maximum(rho, 1e-300)
        return self.velocity_factor * current / safe * self.inv_r2, rho


class _TorusEvaluator:
    def __init__(self, state, velocity_factor=1.0):
        n = state.n_points
        self.modes = fourier_modes(n)
        self.coeffs = np.fft.fft2(state.values) / n ** 2
        self.inv_r2 = 1.0 / state.radius ** 2
        self.max_density = float(np.max(np.abs(state.values) ** 2))
        self.velocity_factor = velocity_factor

    def __call__(self, q):
        e1 = np.exp(1j * np.outer(q[:, 0], self.modes))            # (M, n)
        e2 = np.exp(1j * np.outer(q[:, 1], self.modes))
        t = e1 @ self.coeffs                                       # (M, n)
        psi = np.sum(t * e2, axis=1)
        d1 = np.sum((e1 * (1j * self.modes)) @ self.coeffs * e2, axis=1)
        d2 = np.sum(t * (e2 * (1j * self.modes)), axis=1)
        rho = np.abs(psi) ** 2
        safe = np.maximum(rho, 1e-300)
        v = np.stack([np.imag(np.conj(psi) * d1) / safe,
                      np.imag(np.conj(psi) * d2) / safe], axis=1)
        return self.velocity_factor * v * self.inv_r2, rho


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------

@dataclass
class TransportResult:
    times: np.ndarray          # (n_records,)
    positions: np.ndarray      # (n_records, M) or (n_records, M, 2), unwrapped
    status: np.ndarray         # (M,) strings
    halt_times: np.ndarray     # (M,) float, nan when not halted

    @property
    def node_halt_fraction(self):
        return float(np.mean(self.status != STATUS_COMPLETED))


def transport(state, potential, q0, dt, n_steps, eps_node=DEFAULT_EPS_NODE,
              flux_gauge=None, velocity_factor=1.0, record_every=1):
    """Integrate a bundle of Bohmian trajectories driven by the evolving wave.

    The wave advances by two half-steps per trajectory step, providing the
    mid-step snapshot RK4 needs.  ``velocity_factor`` rescales the guiding
    field (the -1 setting is the deliberately wrong field used as a negative
    control in the equivariance tests).  Positions are returned unwrapped
    (continuous lifts); reduce mod 2 pi for base angles.
    """
    two_particle = state.space.kind == "two_particle_ring"
    if two_particle:
        q = np.asarray(q0, dtype=float).reshape(-1, 2).copy()
    else:
        q = np.asarray(q0, dtype=float).reshape(-1).copy()

    def make_eval(s):
        if two_particle:
            return _TorusEvaluator(s, velocity_factor)
        return _RingEvaluator(s, flux_gauge, velocity_factor)

    def advance(s, tau):
        if flux_gauge is not None:
            flux, charge = flux_gauge
            return evolve_vector_potential(s, flux, potential, tau, 1, charge)
        return evolve(s, potential, tau, 1)

    m = q.shape[0]
    active = np.ones(m, dtype=bool)
    status = np.array([STATUS_COMPLETED] * m, dtype=object)
    halt_times = np.full(m, np.nan)
    times = [0.0]
    records = [q.copy()]
    ev0 = make_eval(state)
    t = 0.0
    for step in range(n_steps):
        s_half = advance(state, 0.5 * dt)
        s_full = advance(s_half, 0.5 * dt)
        ev_half = make_eval(s_half)
        ev_full = make_eval(s_full)
        if np.any(active):
            qa = q[active]
            k1, r1 = ev0(qa)
            k2, r2 = ev_half(qa + 0.5 * dt * k1)
            k3, r3 = ev_half(qa + 0.5 * dt * k2)
            k4, r4 = ev_full(qa + dt * k3)
            threshold = eps_node * ev0.max_density
            hit_node = (r1 < threshold) | (r2 < threshold) \
                | (r3 < threshold) | (r4 < threshold)
            move = (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if np.ndim(move) > 1:
                move[hit_node] = 0.0
            else:
                move = np.where(hit_node, 0.0, move)
            q_new = qa + move
            q[active] = q_new
            if np.any(hit_node):
                idx = np.flatnonzero(active)[hit_node]
                status[idx] = STATUS_HALTED
                halt_times[idx] = t
                active[idx] = False
        state = s_full
        ev0 = ev_full
        t = (step + 1) * dt
        if (step + 1) % record_every == 0 or step == n_steps - 1:
            times.append(t)
            records.append(q.copy())
    return TransportResult(
        times=np.array(times),
        positions=np.stack(records),
        status=status,
        halt_times=halt_times,
    ), state


# ---------------------------------------------------------------------------
# single trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Time-indexed path on the base, wrapped angle plus winding counter."""

    times: np.ndarray
    unwrapped: np.ndarray      # (S,) or (S, 2) continuous coordinates
    status: str
    halt_time: float = None

    @property
    def angles(self):
        return np.mod(self.unwrapped, TWO_PI)

    @property
    def windings(self):
        return np.floor_divide(self.unwrapped, TWO_PI).astype(int)

    @property
    def final_position(self):
        return self.angles[-1]

    def csv_rows(self):
        one_d = self.unwrapped.ndim == 1
        for i, t in enumerate(self.times):
            if one_d:
                yield (f"{t:.9g}", f"{self.angles[i]:.12g}",
                       str(self.windings[i]), self.status)
            else:
                yield (f"{t:.9g}",
                       f"{self.angles[i][0]:.12g}", f"{self.angles[i][1]:.12g}",
                       str(self.windings[i][0]), str(self.windings[i][1]),
                       self.status)


def integrate_trajectory(state, potential, q0, dt, t_final,
                         eps_node=DEFAULT_EPS_NODE, flux_gauge=None,
                         record_every=1):
    """Single Bohmian trajectory from q0 over [0, t_final]."""
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ConfigError("t_final must be an integer multiple of dt")
    single = np.atleast_1d(np.asarray(q0, dtype=float))
    q0_arr = single.reshape(1, -1) if single.size > 1 else single
    result, _ = transport(state, potential, q0_arr, dt, n_steps,
                          eps_node=eps_node, flux_gauge=flux_gauge,
                          record_every=record_every)
    path = result.positions[:, 0]
    halt = result.halt_times[0]
    return Trajectory(times=result.times, unwrapped=path,
                      status=str(result.status[0]),
                      halt_time=None if np.isnan(halt) else float(halt))


def lift_trajectory(traj, q0_hat):
    """Continuous lift of a base trajectory starting at the cover point q0_hat.

    The lift is rebuilt from the wrapped angles by minimal-jump unwrapping,
    so the continuity requirement is genuinely checked: an angle step of pi
    or more between samples is ambiguous and rejected.  Lifts from deck
    translates of the starting point differ by that fixed translate for all
    times.
    """
    angles = np.asarray(traj.angles if isinstance(traj, Trajectory) else traj,
                        dtype=float)
    if angles.ndim != 1:
        raise ConfigError("lifting is supported for ring trajectories")
    if isinstance(q0_hat, RingPoint):
        start = q0_hat.unwrapped
    else:
        start = float(q0_hat)
    if abs(np.mod(start, TWO_PI) - angles[0]) > 1e-9 \
            and abs(abs(np.mod(start, TWO_PI) - angles[0]) - TWO_PI) > 1e-9:
        raise ConfigError("q0_hat does not project to the trajectory start")
    increments = np.diff(angles)
    increments = np.mod(increments + np.pi, TWO_PI) - np.pi
    if np.any(np.abs(increments) >= np.pi * (1 - 1e-12)):
        raise PhysicsError(
            "trajectory samples jump by half a turn or more; the continuous "
            "lift is ambiguous")
    lifted = np.concatenate([[start], start + np.cumsum(increments)])
    return lifted


def trajectory_deck_offset(lift_a, lift_b):
    """The constant deck translate separating two lifts of one trajectory."""
    diff = np.asarray(lift_a) - np.asarray(lift_b)
    k = diff[0] / TWO_PI
    if np.max(np.abs(diff - diff[0])) > 1e-9 or abs(k - round(k)) > 1e-9:
        raise PhysicsError("paths are not lifts of the same base trajectory")
    return Winding(int(round(k)))
