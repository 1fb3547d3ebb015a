"""Spontaneous collapse: rates, collapse maps, and the event process."""

import numpy as np
import pytest
import scipy.stats

from topobohm.covering import TWO_PI
from topobohm.errors import ConfigError, PhysicsError
from topobohm.factors import Character
from topobohm.propagation import (
    Potential,
    angle_grid,
    evolve,
    make_eigenstate,
    make_gaussian_state,
    symmetrized_product_state,
    twist_embed,
    wrapped_gaussian,
)
from topobohm.collapse import (
    apply_collapse,
    collapse_multiplier,
    collapse_rate,
    draw_center,
    localization_bump,
    rate_over_centers,
    simulate_grw,
    total_rate,
    wrapped_distance,
)
from topobohm.ensembles import density_bin_masses

LAM, A = 1.0, 0.3


def quadrature_bump_mass(a, n=200_001):
    """Independent Riemann quadrature of the wrapped Gaussian bump."""
    x = np.linspace(0, TWO_PI, n, endpoint=False)
    return float(np.sum(localization_bump(x, 0.0, a)) * (TWO_PI / n))


class TestRates:
    def test_uniform_state_rate_is_rotation_invariant(self):
        state = make_eigenstate(0, Character.ring(0.0))
        rates = [collapse_rate(state, x, LAM, A)
                 for x in np.linspace(0, TWO_PI, 9, endpoint=False)]
        assert np.max(rates) - np.min(rates) <= 1e-12

    def test_total_rate_matches_quadrature_oracle(self):
        state = make_gaussian_state(Character.ring(np.pi), 3.0, 0.5, 2.0)
        oracle = LAM * quadrature_bump_mass(A)  # norm-1 state, one particle
        assert total_rate(state, LAM, A) == pytest.approx(oracle, rel=1e-8)
        # and approximately lam * sqrt(2 pi a^2) for a << 2 pi
        assert total_rate(state, LAM, A) == pytest.approx(
            LAM * np.sqrt(2 * np.pi * A ** 2), rel=1e-10)

    def test_two_identical_particles_rates_add(self):
        state = symmetrized_product_state(
            lambda t: wrapped_gaussian(t, 2.0, 0.5),
            lambda t: wrapped_gaussian(t, 4.3, 0.5), -1, n_points=64)
        x = 1.0
        rho = state.density()
        theta = state.theta
        bump = localization_bump(theta, x, A)
        marg1 = rho.sum(axis=1) * state.dx
        marg2 = rho.sum(axis=0) * state.dx
        oracle = LAM * (np.sum(bump * marg1) + np.sum(bump * marg2)) * state.dx
        assert collapse_rate(state, x, LAM, A) == pytest.approx(oracle, rel=1e-10)

    def test_labelled_variant_sums_to_total(self):
        state = symmetrized_product_state(
            lambda t: wrapped_gaussian(t, 2.0, 0.5),
            lambda t: wrapped_gaussian(t, 4.3, 0.5), +1, n_points=64)
        x = 2.5
        total = collapse_rate(state, x, LAM, A)
        labelled = sum(collapse_rate(state, x, LAM, A, label=i) for i in (0, 1))
        assert total == pytest.approx(labelled, rel=1e-12)

    def test_negative_width_rejected(self):
        state = make_eigenstate(0, Character.ring(0.0))
        with pytest.raises(ConfigError, match="positive"):
            collapse_rate(state, 0.0, LAM, -0.1)

    def test_wrapped_distance(self):
        assert wrapped_distance(0.1, TWO_PI - 0.1) == pytest.approx(0.2)
        assert wrapped_distance(1.0, 1.0 + np.pi) == pytest.approx(np.pi)


class TestApplyCollapse:
    def test_wide_profile_leaves_state_unchanged(self):
        state = make_gaussian_state(Character.ring(0.0), 2.0, 0.5, 1.0,
                                    n_points=64)
        collapsed, _ = apply_collapse(state, 4.0, LAM, 1e6)
        assert np.max(np.abs(collapsed.values - state.values)) <= 1e-9

    def test_antisymmetric_sector_preserved(self):
        state = symmetrized_product_state(
            lambda t: wrapped_gaussian(t, 2.0, 0.5),
            lambda t: wrapped_gaussian(t, 4.3, 0.5), -1, n_points=64)
        collapsed, event = apply_collapse(state, 2.0, LAM, A)
        assert collapsed.exchange_residual() <= 1e-12
        assert collapsed.norm() == pytest.approx(1.0, abs=1e-10)
        assert event.post_norm == pytest.approx(
            np.sqrt(collapse_rate(state, 2.0, LAM, A)), rel=1e-10)

    def test_mass_concentrates_at_nearer_bump(self):
        theta = angle_grid(128)
        two_bump = twist_embed(
            wrapped_gaussian(theta, 1.5, 0.3) + wrapped_gaussian(theta, 4.5, 0.3),
            Character.ring(0.0))
        collapsed, _ = apply_collapse(two_bump, 1.5, LAM, A)
        peak = theta[np.argmax(collapsed.density())]
        assert wrapped_distance(peak, 1.5) <= A

    def test_twist_sector_preserved(self):
        state = make_gaussian_state(Character.ring(np.pi), 2.0, 0.5, 1.0)
        collapsed, _ = apply_collapse(state, 3.0, LAM, A)
        assert collapsed.twist_residual() <= 1e-9

    def test_zero_rate_rejected(self):
        # state concentrated opposite a very narrow bump: rate underflows to 0
        state = make_gaussian_state(Character.ring(0.0), 0.0, 0.05, 0.0,
                                    n_points=128)
        with pytest.raises(PhysicsError, match="rate vanishes"):
            apply_collapse(state, np.pi, LAM, 0.01)

    def test_collapse_commutes_with_symmetrization(self, rng):
        # the identical-particle multiplier is exchange symmetric, so
        # collapsing then projecting equals projecting then collapsing
        raw = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
        from topobohm.propagation import make_two_particle_state
        state = make_two_particle_state(raw - raw.T, -1)
        mult = np.sqrt(collapse_multiplier(state, 2.0, LAM, A))
        collapsed_then_projected = state.values * mult
        collapsed_then_projected = (collapsed_then_projected
                                    - collapsed_then_projected.T) / 2
        projected_then_collapsed = ((state.values - state.values.T) / 2) * mult
        assert np.max(np.abs(collapsed_then_projected
                             - projected_then_collapsed)) <= 1e-10


class TestSimulate:
    def test_zero_rate_is_pure_schroedinger(self):
        state = make_gaussian_state(Character.ring(np.pi), 3.0, 0.5, 1.0,
                                    n_points=64)
        v = Potential.from_callable(lambda t: 0.3 * np.cos(t), 64)
        result = simulate_grw(state, v, 0.2, 0.0, A, seed=1, dt=1e-3)
        assert result.events == []
        reference = evolve(state.normalized(), v, 1e-3, 200)
        assert np.max(np.abs(result.final_state.values
                             - reference.values)) <= 1e-12

    def test_event_times_increase_and_twist_survives(self):
        state = make_gaussian_state(Character.ring(np.pi), 3.0, 0.5, 1.0,
                                    n_points=128)
        t_final = 5.0 / (LAM * np.sqrt(2 * np.pi * A ** 2))
        result = simulate_grw(state, Potential.zero(), t_final, LAM, A,
                              seed=33, dt=2e-3)
        times = [e.time for e in result.events]
        assert times == sorted(times)
        assert result.max_twist_residual <= 1e-9
        assert result.final_state.norm() == pytest.approx(1.0, abs=1e-10)

    def test_seed_determinism(self):
        state = make_gaussian_state(Character.ring(np.pi), 3.0, 0.5, 1.0,
                                    n_points=64)
        a = simulate_grw(state, Potential.zero(), 2.0, LAM, A, seed=5, dt=2e-3)
        b = simulate_grw(state, Potential.zero(), 2.0, LAM, A, seed=5, dt=2e-3)
        assert [e.time for e in a.events] == [e.time for e in b.events]
        assert [e.center for e in a.events] == [e.center for e in b.events]
        assert np.array_equal(a.final_state.values, b.final_state.values)

    def test_outcome_distribution_matches_rate_density(self):
        state = make_gaussian_state(Character.ring(np.pi), 2.0, 0.6, 0.0,
                                    n_points=128)
        rng = np.random.default_rng(5)
        n = 10_000
        xs = np.array([draw_center(state, LAM, A, rng) for _ in range(n)])
        masses = density_bin_masses(rate_over_centers(state, LAM, A), 32)
        counts, _ = np.histogram(xs, bins=32, range=(0, TWO_PI))
        _, p = scipy.stats.chisquare(counts, masses * n)
        assert p > 0.001

    def test_two_particle_collapse_in_process(self):
        state = symmetrized_product_state(
            lambda t: wrapped_gaussian(t, 2.0, 0.5),
            lambda t: wrapped_gaussian(t, 4.3, 0.5), -1, n_points=64)
        result = simulate_grw(state, Potential.zero(), 1.0, LAM, A,
                              seed=41, dt=2e-3)
        assert result.max_exchange_residual <= 1e-9


def test_spinor_collapse_preserves_twist():
    from topobohm.factors import MatrixRep
    from topobohm.propagation import make_spinor_state
    from topobohm.scenario import spin_exponential
    rep = MatrixRep.ring(spin_exponential(0.7, [0, 0, 1]))
    profile = wrapped_gaussian(angle_grid(128), 3.0, 0.5)
    state = make_spinor_state([0.8 * profile, 0.6j * profile], rep)
    collapsed, _ = apply_collapse(state, 3.5, LAM, A)
    assert collapsed.twist_residual() <= 1e-9
    assert collapsed.norm() == pytest.approx(1.0, abs=1e-10)


def test_allow_aperiodic_escape_hatch():
    # the flag only disables the twist-residual monitor raising; the collapse
    # operator itself never needs the periodicity bookkeeping
    state = make_gaussian_state(Character.ring(np.pi), 3.0, 0.5, 1.0,
                                n_points=64)
    result = simulate_grw(state, Potential.zero(), 1.0, LAM, A, seed=3,
                          dt=2e-3, allow_aperiodic=True)
    assert result.final_state.norm() == pytest.approx(1.0, abs=1e-10)
