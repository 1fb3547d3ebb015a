"""Time evolution of twisted-periodic wave functions on ring covers.

Storage is gauge fixed: instead of a wave function psi on the cover obeying
psi(theta + 2 pi) = Gamma psi(theta), we keep the strictly periodic field

    chi(theta) = Gamma^(-theta / 2 pi) psi(theta),

so the twist is a structural property of the container rather than a
numerically drifting constraint.  In this gauge the kinetic operator acts in
Fourier space with shifted wavenumbers (n + beta / 2 pi) per character
sector, which enforces the twist exactly; a matrix factor is first split
into character sectors by simultaneous diagonalization of its generators.

Two slow reference integrators ship in-tree:

* a dense Crank-Nicolson propagator on the same periodic grid, the
  independent time-integration oracle for cross checks;
* a Dirichlet-walled multi-sheet integrator in the ungauged psi
  representation, used as the negative control that shows the twist decay
  when the factor does not commute with the potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .covering import TWO_PI, CoveringSpace, Winding
from .errors import (
    ConfigError,
    IncompatibleFactorError,
    PhysicsError,
    ToleranceError,
)
from .factors import (
    Character,
    MatrixRep,
    check_commutes,
    max_abs,
    unitary_eig,
)

DEFAULT_N_POINTS = 256
DEFAULT_DT = 1e-3

STATE_SCHEMA = "topobohm/state/1"


def angle_grid(n_points):
    return np.arange(n_points) * (TWO_PI / n_points)


def fourier_modes(n_points):
    """Integer wavenumbers in FFT order."""
    return np.fft.fftfreq(n_points, d=1.0 / n_points)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """Potential on the base grid.

    kind:
      zero       -- free motion
      scalar     -- real field, shape (n,) on the ring or (n, n) on the torus
      matrix     -- Hermitian k x k field on the ring, shape (n, k, k)
      covariant  -- cover-side Hermitian field stored in its gauge-fixed
                    periodic form, shape (n, k, k); covariance under the deck
                    action then holds for any periodic data by construction
    """

    kind: str
    values: np.ndarray = None
    label: str = ""

    @classmethod
    def zero(cls):
        return cls(kind="zero", label="V=0")

    @classmethod
    def scalar(cls, values, label="scalar"):
        arr = np.asarray(values, dtype=float)
        return cls(kind="scalar", values=arr, label=label)

    @classmethod
    def from_callable(cls, fn, n_points, label="scalar"):
        return cls.scalar(fn(angle_grid(n_points)), label=label)

    @classmethod
    def matrix_constant(cls, matrix, n_points, label="matrix"):
        m = np.asarray(matrix, dtype=complex)
        if max_abs(m - m.conj().T) > 1e-12:
            raise ConfigError("matrix potential must be Hermitian")
        return cls(kind="matrix", values=np.broadcast_to(
            m, (n_points,) + m.shape).copy(), label=label)

    @classmethod
    def matrix_field(cls, values, label="matrix"):
        arr = np.asarray(values, dtype=complex)
        if max_abs(arr - np.conj(np.swapaxes(arr, -1, -2))) > 1e-12:
            raise ConfigError("matrix potential must be Hermitian pointwise")
        return cls(kind="matrix", values=arr, label=label)

    @classmethod
    def covariant(cls, gauge_fixed_values, label="covariant"):
        arr = np.asarray(gauge_fixed_values, dtype=complex)
        if max_abs(arr - np.conj(np.swapaxes(arr, -1, -2))) > 1e-12:
            raise ConfigError("covariant field must be Hermitian pointwise")
        return cls(kind="covariant", values=arr, label=label)

    @property
    def is_zero(self):
        return self.kind == "zero"

    def sample_matrices(self, dim):
        """Representative Hermitian samples for the commutation gate."""
        if self.kind == "zero":
            return [np.zeros((dim, dim))]
        if self.kind == "scalar":
            flat = np.unique(np.round(np.asarray(self.values).ravel(), 14))
            picks = flat[:: max(1, len(flat) // 8)]
            return [v * np.eye(dim) for v in picks]
        step = max(1, self.values.shape[0] // 16)
        return [self.values[i] for i in range(0, self.values.shape[0], step)]


# ---------------------------------------------------------------------------
# wave grids
# ---------------------------------------------------------------------------

def _require_power_of_two(n):
    if n < 4 or (n & (n - 1)) != 0:
        raise ConfigError(f"n_points must be a power of two, got {n}")


@dataclass(frozen=True)
class WaveGrid:
    """Gauge-fixed periodic wave function data.

    Ring states store ``values`` with shape (k, n): strictly periodic sector
    components, expressed in the eigenbasis of the twist factor when that
    factor is a matrix (``sector_basis`` maps sector components back to the
    original value space; ``sector_betas`` holds each component's twist
    angle).  Two-particle states store psi itself on the torus, shape
    (n, n), with the exchange sign as the twist.

    Norm convention: sum |chi|^2 dtheta = 1.
    """

    space: CoveringSpace
    values: np.ndarray
    twist: object
    sector_betas: np.ndarray = None
    sector_basis: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))
        if self.space.kind == "ring":
            if self.values.ndim != 2:
                raise ConfigError("ring values must have shape (components, n)")
            _require_power_of_two(self.values.shape[1])
            if self.sector_betas is None:
                raise ConfigError("ring states need sector twist angles")
            object.__setattr__(self, "sector_betas",
                               np.asarray(self.sector_betas, dtype=float))
        elif self.space.kind == "two_particle_ring":
            if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
                raise ConfigError("two-particle values must be square (n, n)")
            _require_power_of_two(self.values.shape[0])
        else:
            raise ConfigError(f"no grid storage for space kind {self.space.kind!r}")

    # -- geometry -----------------------------------------------------------

    @property
    def n_points(self):
        return self.values.shape[-1]

    @property
    def n_components(self):
        return self.values.shape[0] if self.space.kind == "ring" else 1

    @property
    def dx(self):
        return TWO_PI / self.n_points

    @property
    def theta(self):
        return angle_grid(self.n_points)

    @property
    def radius(self):
        return self.space.radius

    # -- norms and densities --------------------------------------------------

    def norm(self):
        if self.space.kind == "ring":
            return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.dx))
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.dx ** 2))

    def density(self):
        """Base-side probability density (the local inner product)."""
        if self.space.kind == "ring":
            return np.sum(np.abs(self.values) ** 2, axis=0)
        return np.abs(self.values) ** 2

    def normalized(self):
        return self.with_values(self.values / self.norm())

    def with_values(self, values):
        return replace(self, values=values)

    # -- twist bookkeeping ----------------------------------------------------

    @property
    def is_scalar(self):
        return self.space.kind == "ring" and self.values.shape[0] == 1

    @property
    def beta(self):
        """Twist angle of a single-sector ring state."""
        if self.space.kind != "ring":
            raise ConfigError("beta is defined for ring states")
        betas = np.unique(np.round(self.sector_betas, 12))
        if len(betas) != 1:
            raise ConfigError("state has several twist sectors; no single beta")
        return float(self.sector_betas[0])

    @property
    def exchange_sign(self):
        if self.space.kind != "two_particle_ring":
            raise ConfigError("exchange sign is defined for two-particle states")
        return +1 if self.twist.parity_exponent == 0 else -1

    def psi(self):
        """Reconstruct the physical wave function on the fundamental sheet."""
        if self.space.kind == "two_particle_ring":
            return self.values.copy()
        phases = np.exp(1j * np.outer(self.sector_betas, self.theta) / TWO_PI)
        sector_psi = self.values * phases
        if self.sector_basis is None:
            return sector_psi
        return self.sector_basis @ sector_psi

    def reconstruct_sheets(self, n_sheets=3):
        """Physical psi on deck translates, keyed by winding, for checks."""
        if self.space.kind == "two_particle_ring":
            from .covering import Permutation
            return {
                Permutation.identity(2): self.values.copy(),
                Permutation.swap(2, 0, 1): self.values.T.copy(),
            }
        out = {}
        for s in range(n_sheets):
            phases = np.exp(
                1j * self.sector_betas[:, None]
                * (self.theta[None, :] + TWO_PI * s) / TWO_PI)
            sector_psi = self.values * phases
            psi_s = sector_psi if self.sector_basis is None \
                else self.sector_basis @ sector_psi
            out[Winding(s)] = psi_s
        return out

    def twist_residual(self, n_sheets=3):
        """Max deviation of psi(sigma qhat) from Gamma_sigma psi(qhat)."""
        if self.space.kind == "two_particle_ring":
            sign = self.exchange_sign
            return max_abs(self.values.T - sign * self.values)
        sheets = self.reconstruct_sheets(n_sheets)
        base = sheets[Winding(0)]
        worst = 0.0
        for winding, psi_s in sheets.items():
            gamma = self._factor_matrix(winding)
            worst = max(worst, max_abs(psi_s - gamma @ base))
        return worst

    def _factor_matrix(self, winding):
        if isinstance(self.twist, Character):
            return self.twist.value(winding) * np.eye(self.n_components)
        return self.twist.evaluate(winding)

    def exchange_residual(self):
        """Deviation from the declared exchange sector (torus states)."""
        sign = self.exchange_sign
        return max_abs(self.values.T - sign * self.values)


# ---------------------------------------------------------------------------
# state builders
# ---------------------------------------------------------------------------

def wrapped_gaussian(theta, center, width, momentum=0.0, n_images=6):
    """Periodic Gaussian profile: image sum over deck translates.

    Each image carries the plane-wave phase of its own unwrapped argument,
    which keeps the sum exactly periodic for any real momentum.
    """
    out = np.zeros_like(theta, dtype=complex)
    for w in range(-n_images, n_images + 1):
        u = theta - center + TWO_PI * w
        out += np.exp(-(u ** 2) / (4.0 * width ** 2) + 1j * momentum * u)
    return out


def twist_embed(data, factor, space=None, data_is_periodic=True):
    """Build a gauge-fixed WaveGrid from wave data and a topological factor.

    ``data`` is either strictly periodic gauge-fixed data (interpreted as
    chi, the default) or one-sheet cover samples of psi itself
    (``data_is_periodic=False``), in which case the factor is peeled off by
    its fractional power.  Matrix factors must have normal, commuting
    generators; they are split into character sectors.  The result is
    normalized.
    """
    if space is None:
        space = CoveringSpace.ring()
    arr = np.asarray(data, dtype=complex)
    if arr.ndim == 1:
        arr = arr[None, :]
    n = arr.shape[1]
    _require_power_of_two(n)
    theta = angle_grid(n)

    if isinstance(factor, Character):
        if factor.group_id[0] != "ring":
            raise ConfigError("ring embedding expects a ring character")
        if arr.shape[0] != 1:
            raise ConfigError("a character twists a single component")
        if not data_is_periodic:
            arr = arr * np.exp(-1j * factor.beta * theta / TWO_PI)
        state = WaveGrid(space=space, values=arr, twist=factor,
                         sector_betas=np.array([factor.beta]))
        return state.normalized()

    if not isinstance(factor, MatrixRep) or factor.group_id != ("ring",):
        raise ConfigError("ring embedding takes a ring character or matrix factor")
    k = factor.dim
    if arr.shape[0] != k:
        raise ConfigError(f"spinor data needs {k} components")
    eigvals, basis = unitary_eig(factor.generators[0])
    betas = np.angle(eigvals)  # branch (-pi, pi]
    if not data_is_periodic:
        # peel psi -> chi with the continuous fractional power of the factor
        power = np.exp(-1j * np.outer(betas, theta) / TWO_PI)
        arr = power * (basis.conj().T @ arr)
    else:
        arr = basis.conj().T @ arr
    state = WaveGrid(space=space, values=arr, twist=factor,
                     sector_betas=betas, sector_basis=basis)
    return state.normalized()


def make_eigenstate(n, factor, n_points=DEFAULT_N_POINTS, space=None):
    """Twisted kinetic eigenstate: chi is the plane wave of integer mode n."""
    theta = angle_grid(n_points)
    chi = np.exp(1j * n * theta) / math.sqrt(TWO_PI)
    return twist_embed(chi, factor, space=space)


def make_gaussian_state(factor, center, width, momentum=0.0,
                        n_points=DEFAULT_N_POINTS, space=None):
    theta = angle_grid(n_points)
    chi = wrapped_gaussian(theta, center, width, momentum)
    return twist_embed(chi, factor, space=space)


def make_spinor_state(component_data, factor, space=None):
    return twist_embed(np.stack(component_data), factor, space=space)


def make_plain_state(psi_values, space=None):
    """Untwisted periodic state (the vector-potential gauge lives here)."""
    return twist_embed(np.asarray(psi_values, dtype=complex),
                       Character.ring(0.0), space=space)


SECTOR_TOL = 1e-10


def make_two_particle_state(values, sector, space=None, enforce=True):
    """Two-particle torus state in a declared exchange sector (+1 or -1)."""
    if space is None:
        space = CoveringSpace.two_particle_ring()
    arr = np.asarray(values, dtype=complex)
    twist = Character.exchange(2, sector)
    state = WaveGrid(space=space, values=arr, twist=twist)
    norm = state.norm()
    if norm == 0:
        raise ConfigError("two-particle data vanishes after symmetrization")
    state = state.with_values(arr / norm)
    if enforce and state.exchange_residual() > SECTOR_TOL * max_abs(state.values):
        raise PhysicsError(
            f"initial data violates the declared exchange sector "
            f"(residual {state.exchange_residual():.2e})")
    return state


def symmetrized_product_state(f1, f2, sector, n_points=DEFAULT_N_POINTS, space=None):
    """(Anti)symmetrized product of two single-particle profiles."""
    theta = angle_grid(n_points)
    a = np.asarray(f1(theta), dtype=complex)
    b = np.asarray(f2(theta), dtype=complex)
    product = np.outer(a, b) + sector * np.outer(b, a)
    return make_two_particle_state(product, sector, space=space)


def pair_eigenstate(n1, n2, sector, n_points=DEFAULT_N_POINTS, space=None):
    return symmetrized_product_state(
        lambda t: np.exp(1j * n1 * t), lambda t: np.exp(1j * n2 * t),
        sector, n_points, space)


# ---------------------------------------------------------------------------
# the split-step propagator
# ---------------------------------------------------------------------------

def _sector_potential(state, potential):
    """Potential term of the gauge-fixed equation, in the sector basis.

    Returns ("none", None), ("scalar", (n,) real) or ("matrix", (n,k,k)).
    """
    if potential.is_zero:
        return ("none", None)
    if potential.kind == "scalar":
        v = np.asarray(potential.values, dtype=float)
        if v.shape != (state.n_points,):
            raise ConfigError("scalar potential grid does not match the state")
        return ("scalar", v)
    v = np.asarray(potential.values, dtype=complex)
    if v.shape != (state.n_points, state.n_components, state.n_components):
        raise ConfigError("matrix potential shape does not match the state")
    if state.sector_basis is not None:
        v = np.einsum("ab,nbc,cd->nad",
                      state.sector_basis.conj().T, v, state.sector_basis)
    return ("matrix", v)


def _gate_factor_potential(state, potential):
    """Refuse to step unless the factor is compatible with the potential.

    Scalar potentials and covariant cover-side fields always pass; a matrix
    potential must commute with the factor at every sampled point, else the
    periodicity condition would not be preserved by the evolution.
    """
    if potential.kind != "matrix":
        return
    if isinstance(state.twist, Character):
        return
    if not check_commutes(state.twist, potential.sample_matrices(state.n_components)):
        raise IncompatibleFactorError(
            "matrix potential does not commute with the topological factor at "
            "every configuration point; the twist would not survive the "
            "evolution, so the step is refused")


def _kinetic_phase(state, dt):
    modes = fourier_modes(state.n_points)
    k = (modes[None, :] + state.sector_betas[:, None] / TWO_PI) / state.radius
    return np.exp(-0.5j * dt * k ** 2)


def _potential_half_phase(kind, data, dt):
    if kind == "none":
        return None
    if kind == "scalar":
        return np.exp(-0.5j * dt * data)
    eigvals, eigvecs = np.linalg.eigh(data)
    phase = np.exp(-0.5j * dt * eigvals)
    return np.einsum("nab,nb,ncb->nac", eigvecs, phase, eigvecs.conj())


def _apply_half_potential(values, kind, phase):
    if kind == "none":
        return values
    if kind == "scalar":
        return values * phase[None, :]
    return np.einsum("nab,bn->an", phase, values)


def evolve(state, potential, dt, n_steps, renormalize=False):
    """Advance a state by n_steps Strang-split steps of size dt."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if n_steps == 0:
        return state
    if state.space.kind == "two_particle_ring":
        return _evolve_two_particle(state, potential, dt, n_steps)
    _gate_factor_potential(state, potential)
    kind, data = _sector_potential(state, potential)
    half_v = _potential_half_phase(kind, data, dt)
    kinetic = _kinetic_phase(state, dt)
    values = state.values
    for _ in range(n_steps):
        values = _apply_half_potential(values, kind, half_v)
        values = np.fft.ifft(kinetic * np.fft.fft(values, axis=1), axis=1)
        values = _apply_half_potential(values, kind, half_v)
    out = state.with_values(values)
    if renormalize:
        out = out.normalized()
    return out


def step_splitstep(state, potential, dt):
    """One Strang split V/2 - T - V/2 step in the gauge-fixed storage."""
    return evolve(state, potential, dt, 1)


def _evolve_two_particle(state, potential, dt, n_steps):
    if potential.is_zero:
        v = None
    elif potential.kind == "scalar":
        v = np.asarray(potential.values, dtype=float)
        if v.shape != state.values.shape:
            raise ConfigError("two-particle potential grid mismatch")
        if max_abs(v - v.T) > 1e-12:
            raise PhysicsError(
                "potential is not symmetric under particle exchange; it would "
                "break the declared exchange sector")
    else:
        raise ConfigError("two-particle stepping supports scalar potentials")
    n = state.n_points
    modes = fourier_modes(n) / state.radius
    ksq = modes[:, None] ** 2 + modes[None, :] ** 2
    kinetic = np.exp(-0.5j * dt * ksq)
    half_v = None if v is None else np.exp(-0.5j * dt * v)
    values = state.values
    for _ in range(n_steps):
        if half_v is not None:
            values = values * half_v
        values = np.fft.ifft2(kinetic * np.fft.fft2(values))
        if half_v is not None:
            values = values * half_v
    return state.with_values(values)


def step_two_particle(state, potential, dt):
    return _evolve_two_particle(state, potential, dt, 1)


# ---------------------------------------------------------------------------
# vector-potential gauge (flux representation)
# ---------------------------------------------------------------------------

def _require_untwisted_scalar(state):
    if state.space.kind != "ring" or not state.is_scalar:
        raise ConfigError("the flux gauge handles scalar ring states")
    if abs(math.remainder(state.beta, TWO_PI)) > 1e-12:
        raise PhysicsError(
            "the vector-potential representation is the untwisted gauge; "
            "got a twisted state")


def evolve_vector_potential(state, flux, potential, dt, n_steps, charge=1.0):
    """Evolution with kinetic term ((n - e A))^2 / 2, A = flux / 2 pi.

    The state stays plainly periodic; the flux enters only through the
    shifted kinetic wavenumbers.  At zero flux this is bit-identical to the
    untwisted split step.
    """
    _require_untwisted_scalar(state)
    kind, data = _sector_potential(state, potential)
    half_v = _potential_half_phase(kind, data, dt)
    modes = fourier_modes(state.n_points)
    k = (modes - charge * flux / TWO_PI) / state.radius
    kinetic = np.exp(-0.5j * dt * k ** 2)[None, :]
    values = state.values
    for _ in range(n_steps):
        values = _apply_half_potential(values, kind, half_v)
        values = np.fft.ifft(kinetic * np.fft.fft(values, axis=1), axis=1)
        values = _apply_half_potential(values, kind, half_v)
    return state.with_values(values)


def step_vector_potential(state, a_const, potential, dt, charge=1.0):
    return evolve_vector_potential(state, a_const * TWO_PI, potential, dt, 1,
                                   charge=charge)


def _flux_twist_angle(flux, charge):
    beta = math.fmod(-charge * flux + math.pi, TWO_PI)
    if beta <= 0:
        beta += TWO_PI
    return beta - math.pi  # principal branch (-pi, pi]


def gauge_map(state_a, flux, charge=1.0):
    """Map a flux-gauge state to the equivalent twisted state.

    Pointwise multiplication by exp(-i e A theta) turns the plainly periodic
    flux-gauge wave into one twisted by exp(-i e flux); the twist angle is
    stored on its principal branch and the leftover integer winding is
    absorbed into the periodic data.
    """
    _require_untwisted_scalar(state_a)
    beta = _flux_twist_angle(flux, charge)
    m = (charge * flux + beta) / TWO_PI
    m_int = round(m)
    if abs(m - m_int) > 1e-9:
        raise ConfigError("inconsistent flux/charge twist bookkeeping")
    chi = state_a.values * np.exp(-1j * m_int * state_a.theta)[None, :]
    return WaveGrid(space=state_a.space, values=chi,
                    twist=Character.ring(beta), sector_betas=np.array([beta]))


def gauge_unmap(state_twisted, flux, charge=1.0):
    """Inverse of gauge_map; composes with it to the identity."""
    if state_twisted.space.kind != "ring" or not state_twisted.is_scalar:
        raise ConfigError("the flux gauge handles scalar ring states")
    beta = state_twisted.beta
    m = (charge * flux + beta) / TWO_PI
    m_int = round(m)
    if abs(m - m_int) > 1e-9:
        raise PhysicsError(
            "state twist is not gauge-equivalent to the given flux")
    psi_a = state_twisted.values * np.exp(1j * m_int * state_twisted.theta)[None, :]
    return WaveGrid(space=state_twisted.space, values=psi_a,
                    twist=Character.ring(0.0), sector_betas=np.array([0.0]))


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def _dense_hamiltonian(n_points, betas, potential, radius=1.0, charge_flux=None):
    """Dense grid Hamiltonian: spectral kinetic term plus the potential.

    ``betas`` is the per-sector twist angle array; ``charge_flux`` switches
    the kinetic shift to the flux-gauge form (n - e flux / 2 pi).
    """
    modes = fourier_modes(n_points)
    k_sectors = []
    for beta in betas:
        if charge_flux is None:
            k = (modes + beta / TWO_PI) / radius
        else:
            e, flux = charge_flux
            k = (modes - e * flux / TWO_PI) / radius
        k_sectors.append(k)
    n_comp = len(betas)
    eye = np.eye(n_points, dtype=complex)
    f_eye = np.fft.fft(eye, axis=0)
    size = n_comp * n_points
    h = np.zeros((size, size), dtype=complex)
    for c, k in enumerate(k_sectors):
        kin = np.fft.ifft(0.5 * (k[:, None] ** 2) * f_eye, axis=0)
        sl = slice(c * n_points, (c + 1) * n_points)
        h[sl, sl] = kin
    if potential is not None and not potential.is_zero:
        if potential.kind == "scalar":
            v = np.asarray(potential.values, dtype=float)
            for c in range(n_comp):
                sl = slice(c * n_points, (c + 1) * n_points)
                h[sl, sl] += np.diag(v)
        else:
            v = np.asarray(potential.values, dtype=complex)
            if v.shape[1] != n_comp:
                raise ConfigError(
                    f"matrix potential dimension {v.shape[1]} does not match "
                    f"the {n_comp} factor sector(s)")
            for a in range(n_comp):
                for b in range(n_comp):
                    h[a * n_points:(a + 1) * n_points,
                      b * n_points:(b + 1) * n_points] += np.diag(v[:, a, b])
    return h


def spectrum(factor_or_flux, potential=None, n_levels=8,
             n_points=DEFAULT_N_POINTS, radius=1.0):
    """Lowest eigenvalues of the discretized twisted Hamiltonian.

    ``factor_or_flux`` is a ring Character, a ring MatrixRep (split into
    character sectors), or a ("flux", flux, charge) tuple for the
    vector-potential gauge.  Dense Hermitian diagonalization of the grid
    operator; with V = 0 the levels are ((n + beta / 2 pi) / radius)^2 / 2.
    """
    if n_levels > n_points // 4:
        raise ConfigError("n_levels must not exceed n_points / 4")
    charge_flux = None
    sector_basis = None
    if isinstance(factor_or_flux, tuple) and factor_or_flux[0] == "flux":
        _, flux, charge = factor_or_flux
        betas = np.array([0.0])
        charge_flux = (charge, flux)
    elif isinstance(factor_or_flux, Character):
        betas = np.array([factor_or_flux.beta])
    elif isinstance(factor_or_flux, MatrixRep):
        eigvals, sector_basis = unitary_eig(factor_or_flux.generators[0])
        betas = np.angle(eigvals)
    else:
        raise ConfigError("expected a Character, MatrixRep or ('flux', f, e)")
    pot = potential
    if pot is not None and pot.kind in ("matrix", "covariant") and sector_basis is not None:
        v = np.einsum("ab,nbc,cd->nad", sector_basis.conj().T,
                      np.asarray(pot.values, dtype=complex), sector_basis)
        pot = Potential(kind="matrix", values=v, label=pot.label)
    h = _dense_hamiltonian(n_points, betas, pot, radius, charge_flux)
    herm = max_abs(h - h.conj().T)
    if herm > 1e-10:
        raise ToleranceError("hamiltonian-hermiticity", herm, 1e-10)
    levels = np.linalg.eigvalsh((h + h.conj().T) / 2.0)
    return np.sort(levels)[:n_levels]


# ---------------------------------------------------------------------------
# reference integrators
# ---------------------------------------------------------------------------

def crank_nicolson_evolve(state, potential, dt, n_steps):
    """Dense Crank-Nicolson reference on the same periodic grid.

    Independent time-integration oracle: one step solves
    (1 + i dt H / 2) psi' = (1 - i dt H / 2) psi against the explicitly
    built grid Hamiltonian.  Scalar ring states only; slow by design.
    """
    if state.space.kind != "ring" or not state.is_scalar:
        raise ConfigError("the Crank-Nicolson reference handles scalar ring states")
    h = _dense_hamiltonian(state.n_points, state.sector_betas, potential,
                           state.radius)
    h = (h + h.conj().T) / 2.0
    eye = np.eye(state.n_points, dtype=complex)
    lhs = eye + 0.5j * dt * h
    rhs = eye - 0.5j * dt * h
    lu, piv = scipy.linalg.lu_factor(lhs)
    psi = state.values[0].copy()
    for _ in range(n_steps):
        psi = scipy.linalg.lu_solve((lu, piv), rhs @ psi)
    return state.with_values(psi[None, :])


class SheetWindowIntegrator:
    """Ungauged cover-sheet reference integrator (negative control).

    Evolves psi directly on a window of cover sheets (a Dirichlet-walled
    segment of the cover) with the lifted potential, imposing the twist only
    on the initial data.  When the factor commutes with the potential the
    interior twist relation survives; when it does not, the relation decays
    visibly within a few steps.  Finite differences + Crank-Nicolson; this
    integrator is deliberately independent of the gauge-fixed machinery.
    """

    def __init__(self, factor, potential_matrix, n_points=64, n_sheets=7,
                 radius=1.0):
        if isinstance(factor, Character):
            self.gamma = np.array([[np.exp(1j * factor.beta)]])
        else:
            self.gamma = factor.generators[0]
        self.k = self.gamma.shape[0]
        self.n = n_points
        self.n_sheets = n_sheets
        self.radius = radius
        v = np.asarray(potential_matrix, dtype=complex)
        if v.ndim == 2:
            v = np.broadcast_to(v, (n_points, self.k, self.k))
        self.v_base = v

    def _hamiltonian(self):
        n_total = self.n * self.n_sheets
        dx = TWO_PI / self.n * self.radius
        main = np.full(n_total, 1.0 / dx ** 2)
        h_kin = (np.diag(main)
                 - 0.5 / dx ** 2 * np.eye(n_total, k=1)
                 - 0.5 / dx ** 2 * np.eye(n_total, k=-1))
        h = np.kron(h_kin, np.eye(self.k, dtype=complex)).astype(complex)
        for j in range(n_total):
            vj = self.v_base[j % self.n]
            h[j * self.k:(j + 1) * self.k, j * self.k:(j + 1) * self.k] += vj
        return h

    def initial_from_profile(self, chi_profile):
        """Twisted initial data: packet on the middle sheet, neighbours scaled
        by the matching powers of the factor."""
        mid = self.n_sheets // 2
        psi = np.zeros((self.n_sheets, self.n, self.k), dtype=complex)
        profile = np.asarray(chi_profile, dtype=complex)
        if profile.ndim == 1:
            profile = np.tile(profile[:, None], (1, self.k)) / math.sqrt(self.k)
        gamma_inv = self.gamma.conj().T
        for s in range(self.n_sheets):
            power = s - mid
            gpow = np.linalg.matrix_power(self.gamma if power >= 0 else gamma_inv,
                                          abs(power))
            psi[s] = profile @ gpow.T
        return psi.reshape(-1)

    def initial_from_state(self, state):
        """The physical wave of a gauge-fixed WaveGrid, laid out on the window
        (sheet s carries Gamma^s times the fundamental-sheet wave)."""
        if state.n_points != self.n:
            raise ConfigError("state grid does not match the sheet window")
        return self.initial_from_profile(state.psi().T)

    def central_sheet(self, psi_flat):
        """(k, n) wave on the fundamental (middle) sheet."""
        psi = psi_flat.reshape(self.n_sheets, self.n, self.k)
        return psi[self.n_sheets // 2].T.copy()

    def twist_residual(self, psi_flat):
        """Relative violation of psi(theta + 2 pi) = Gamma psi(theta) on the
        two central sheets."""
        psi = psi_flat.reshape(self.n_sheets, self.n, self.k)
        mid = self.n_sheets // 2
        lhs = psi[mid + 1]
        rhs = psi[mid] @ self.gamma.T
        scale = max(max_abs(psi[mid]), 1e-300)
        return max_abs(lhs - rhs) / scale

    def run(self, chi_profile, dt, n_steps, residual_every=10):
        return self.run_from(self.initial_from_profile(chi_profile), dt,
                             n_steps, residual_every)

    def run_from(self, psi_flat, dt, n_steps, residual_every=10):
        h = self._hamiltonian()
        eye = np.eye(h.shape[0], dtype=complex)
        lu, piv = scipy.linalg.lu_factor(eye + 0.5j * dt * h)
        rhs_op = eye - 0.5j * dt * h
        psi = np.asarray(psi_flat, dtype=complex).reshape(-1)
        history = [(0, self.twist_residual(psi))]
        for step in range(1, n_steps + 1):
            psi = scipy.linalg.lu_solve((lu, piv), rhs_op @ psi)
            if step % residual_every == 0 or step == n_steps:
                history.append((step, self.twist_residual(psi)))
        return psi, history


# ---------------------------------------------------------------------------
# state serialization
# ---------------------------------------------------------------------------

def _twist_to_dict(twist):
    if isinstance(twist, Character):
        if twist.group_id[0] == "ring":
            return {"type": "character", "group": "ring", "beta": twist.beta}
        if twist.group_id[0] == "sym":
            sign = +1 if twist.parity_exponent == 0 else -1
            return {"type": "exchange", "n": twist.group_id[1], "sign": sign}
        raise ConfigError(f"cannot serialize character on {twist.group_id}")
    if isinstance(twist, MatrixRep):
        return {
            "type": "matrix",
            "group": list(twist.group_id),
            "generators": [_complex_matrix_to_pairs(g) for g in twist.generators],
        }
    raise ConfigError(f"cannot serialize twist {twist!r}")


def _twist_from_dict(d):
    if d["type"] == "character":
        return Character.ring(float(d["beta"]))
    if d["type"] == "exchange":
        return Character.exchange(int(d["n"]), int(d["sign"]))
    if d["type"] == "matrix":
        gens = [_complex_matrix_from_pairs(g) for g in d["generators"]]
        return MatrixRep(group_id=tuple(d["group"]), generators=tuple(gens))
    raise ConfigError(f"unknown twist type {d['type']!r}")


def _complex_matrix_to_pairs(m):
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _complex_matrix_from_pairs(rows):
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def state_to_dict(state):
    """Versioned, binary-free JSON layout for a WaveGrid."""
    d = {
        "schema": STATE_SCHEMA,
        "space": {
            "kind": state.space.kind,
            "radius": state.space.radius,
            "sheet_window": state.space.sheet_window,
        },
        "units": {"hbar": 1.0, "mass": 1.0, "charge": 1.0},
        "n_points": state.n_points,
        "twist": _twist_to_dict(state.twist),
        "components": _complex_matrix_to_pairs(state.values),
    }
    if state.space.kind == "ring":
        d["sector_betas"] = [float(b) for b in state.sector_betas]
        if state.sector_basis is not None:
            d["sector_basis"] = _complex_matrix_to_pairs(state.sector_basis)
    return d


def state_from_dict(d):
    if d.get("schema") != STATE_SCHEMA:
        raise ConfigError(f"unknown state schema {d.get('schema')!r}")
    sp = d["space"]
    twist = _twist_from_dict(d["twist"])
    if sp["kind"] == "ring":
        space = CoveringSpace.ring(radius=sp["radius"],
                                   sheet_window=sp["sheet_window"])
        values = _complex_matrix_from_pairs(d["components"])
        basis = (_complex_matrix_from_pairs(d["sector_basis"])
                 if "sector_basis" in d else None)
        return WaveGrid(space=space, values=values, twist=twist,
                        sector_betas=np.array(d["sector_betas"]),
                        sector_basis=basis)
    space = CoveringSpace.two_particle_ring(radius=sp["radius"],
                                            sheet_window=sp["sheet_window"])
    values = _complex_matrix_from_pairs(d["components"])
    return WaveGrid(space=space, values=values, twist=twist)
