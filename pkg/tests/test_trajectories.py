"""Velocity fields and Bohmian trajectory integration."""

import numpy as np
import pytest

from topobohm.covering import TWO_PI, RingPoint, Winding, is_projectable_field
from topobohm.errors import ConfigError, PhysicsError
from topobohm.factors import Character
from topobohm.propagation import (
    Potential,
    angle_grid,
    evolve,
    gauge_map,
    make_eigenstate,
    make_gaussian_state,
    symmetrized_product_state,
    twist_embed,
    wrapped_gaussian,
)
from topobohm.trajectories import (
    STATUS_COMPLETED,
    STATUS_HALTED,
    integrate_trajectory,
    lift_trajectory,
    trajectory_deck_offset,
    transport,
    velocity_field,
    velocity_sheets,
)


class TestVelocityField:
    def test_twisted_eigenstate_constant_half(self):
        state = make_eigenstate(0, Character.ring(np.pi))
        v, mask = velocity_field(state)
        assert not mask.any()
        assert np.allclose(v, 0.5, atol=1e-12)

    def test_real_packet_is_stationary(self):
        state = make_gaussian_state(Character.ring(0.0), np.pi, 0.5, 0.0)
        v, _ = velocity_field(state)
        assert np.max(np.abs(v)) <= 1e-10

    def test_flux_gauge_matches_twisted_gauge(self):
        flux, e = np.pi, 1.0
        sa = make_gaussian_state(Character.ring(0.0), 3.0, 0.6, 1.0)
        st = gauge_map(sa, flux, e)
        va, _ = velocity_field(sa, flux_gauge=(flux, e))
        vt, _ = velocity_field(st)
        assert np.max(np.abs(va - vt)) <= 1e-10

    def test_node_samples_flagged(self):
        # psi = 1 + e^{i theta} vanishes at theta = pi
        theta = angle_grid(1024)
        state = twist_embed(1.0 + np.exp(1j * theta), Character.ring(0.0))
        _, mask = velocity_field(state, eps_node=1e-6)
        assert mask.any()
        assert mask[512]

    def test_evolved_fields_stay_projectable(self):
        state = make_gaussian_state(Character.ring(np.pi / 2), 2.0, 0.5, 2.0)
        v = Potential.from_callable(lambda t: 0.4 * np.cos(t), 256)
        for _ in range(5):
            state = evolve(state, v, 1e-3, 40)
            assert is_projectable_field(velocity_sheets(state, 3), tol=1e-9)


class TestIntegrateTrajectory:
    def test_constant_velocity_winds_half_turn(self):
        state = make_eigenstate(0, Character.ring(np.pi))
        dt = TWO_PI / 1000
        traj = integrate_trajectory(state, Potential.zero(), 0.0, dt, TWO_PI)
        assert traj.status == STATUS_COMPLETED
        assert traj.unwrapped[-1] == pytest.approx(np.pi, abs=1e-9)
        assert traj.final_position == pytest.approx(np.pi, abs=1e-9)
        assert traj.windings[-1] == 0

    def test_full_turn_increments_winding(self):
        state = make_eigenstate(1, Character.ring(0.0))  # v = 1
        dt = TWO_PI / 500
        traj = integrate_trajectory(state, Potential.zero(), 0.5, dt, 2 * TWO_PI)
        assert traj.windings[-1] == 2
        assert traj.final_position == pytest.approx(0.5, abs=1e-9)

    def test_real_packet_agrees_with_fine_dt_reference(self):
        state = make_gaussian_state(Character.ring(0.0), np.pi, 0.5, 0.0)
        coarse = integrate_trajectory(state, Potential.zero(), 2.5, 5e-3, 0.4)
        fine = integrate_trajectory(state, Potential.zero(), 2.5, 5e-4, 0.4)
        assert abs(coarse.unwrapped[-1] - fine.unwrapped[-1]) <= 1e-8
        # starts at rest: negligible motion before the dispersion time 2 w0^2,
        # then the spreading flow carries it outward
        assert abs(coarse.unwrapped[10] - 2.5) <= 0.01   # t = 0.05
        assert coarse.unwrapped[-1] < 2.5                # moving away from center

    def test_node_halt_recorded(self):
        # psi = 1 + e^{i theta} has a node at pi; a trajectory started inside
        # the low-density window halts immediately and stays frozen
        theta = angle_grid(512)
        state = twist_embed(1.0 + np.exp(1j * theta), Character.ring(0.0))
        traj = integrate_trajectory(state, Potential.zero(), 3.14, 1e-2, 0.5,
                                    eps_node=1e-4)
        assert traj.status == STATUS_HALTED
        assert traj.halt_time == pytest.approx(0.0)
        assert np.all(traj.unwrapped == 3.14)

    def test_trajectory_chasing_a_node_never_halts(self):
        # the node of 1 + e^{i theta} drifts at speed 1/2, exactly the
        # trajectory velocity: the pursuer stays behind it forever
        theta = angle_grid(512)
        state = twist_embed(1.0 + np.exp(1j * theta), Character.ring(0.0))
        traj = integrate_trajectory(state, Potential.zero(), 2.0, 1e-2, 3.0,
                                    eps_node=1e-4)
        assert traj.status == STATUS_COMPLETED
        assert traj.unwrapped[-1] == pytest.approx(2.0 + 0.5 * 3.0, abs=1e-6)

    def test_time_step_fourth_order(self):
        theta = angle_grid(256)
        chi = wrapped_gaussian(theta, 2.0, 0.45, 4.0) \
            + 0.8 * wrapped_gaussian(theta, 3.6, 0.5, -2.0)
        state = twist_embed(chi, Character.ring(np.pi))
        reference = integrate_trajectory(state, Potential.zero(), 2.2,
                                         6.25e-4, 0.4)
        errors = []
        for dt in (2e-2, 1e-2, 5e-3):
            traj = integrate_trajectory(state, Potential.zero(), 2.2, dt, 0.4)
            errors.append(abs(traj.unwrapped[-1] - reference.unwrapped[-1]))
        for coarse, finer in zip(errors, errors[1:]):
            assert 8.0 <= coarse / finer <= 32.0

    def test_gauge_invariance_of_trajectories(self):
        flux, e = np.pi, 1.0
        sa = make_gaussian_state(Character.ring(0.0), 3.0, 0.6, 1.0)
        st = gauge_map(sa, flux, e)
        for q0 in (0.5, 3.0):
            ta = integrate_trajectory(sa, Potential.zero(), q0, 1e-3, 0.25,
                                      flux_gauge=(flux, e))
            tt = integrate_trajectory(st, Potential.zero(), q0, 1e-3, 0.25)
            assert np.max(np.abs(ta.unwrapped - tt.unwrapped)) <= 1e-6

    def test_t_final_must_divide(self):
        state = make_eigenstate(0, Character.ring(0.0))
        with pytest.raises(ConfigError, match="multiple"):
            integrate_trajectory(state, Potential.zero(), 0.0, 1e-3, 0.0015)


class TestBundles:
    def test_no_crossing_in_bundle(self):
        state = make_gaussian_state(Character.ring(np.pi), 2.0, 0.45, 2.0)
        rng = np.random.default_rng(77)
        starts = np.sort(rng.uniform(1.0, 3.0, 100))
        result, _ = transport(state, Potential.zero(), starts, 2e-3, 250,
                              record_every=25)
        for snapshot in result.positions:
            gaps = np.diff(np.sort(snapshot))
            assert np.all(gaps > 0.0)

    def test_antisymmetric_pair_never_meets(self):
        state = symmetrized_product_state(
            lambda t: wrapped_gaussian(t, 2.0, 0.5, 1.0),
            lambda t: wrapped_gaussian(t, 4.3, 0.5, -1.0), -1, n_points=64)
        starts = np.array([[2.0, 4.3], [1.7, 4.0], [2.4, 4.8]])
        result, _ = transport(state, Potential.zero(), starts, 2e-3, 250,
                              record_every=10)
        sep = np.abs(result.positions[..., 0] - result.positions[..., 1])
        sep = np.minimum(np.mod(sep, TWO_PI), TWO_PI - np.mod(sep, TWO_PI))
        assert np.min(sep) > 1e-3


class TestLift:
    def test_lift_accumulates_windings(self):
        state = make_eigenstate(1, Character.ring(0.0))
        dt = TWO_PI / 500
        traj = integrate_trajectory(state, Potential.zero(), 0.25, dt, 2 * TWO_PI)
        lift = lift_trajectory(traj, RingPoint(0, 0.25))
        assert np.all(np.diff(lift) > 0)
        assert lift[-1] - lift[0] == pytest.approx(2 * TWO_PI, abs=1e-9)

    def test_lifts_differ_by_deck_element(self):
        state = make_eigenstate(0, Character.ring(np.pi))
        traj = integrate_trajectory(state, Potential.zero(), 1.0, 1e-2, 1.0)
        l0 = lift_trajectory(traj, RingPoint(0, 1.0))
        l1 = lift_trajectory(traj, RingPoint(1, 1.0))
        assert np.allclose(l1 - l0, TWO_PI)
        assert trajectory_deck_offset(l1, l0) == Winding(1)

    def test_projection_returns_original(self):
        state = make_eigenstate(0, Character.ring(np.pi))
        traj = integrate_trajectory(state, Potential.zero(), 1.0, 1e-2, 1.0)
        lift = lift_trajectory(traj, RingPoint(2, 1.0))
        assert np.allclose(np.mod(lift, TWO_PI), traj.angles, atol=1e-12)

    def test_stationary_trajectory_constant_lift(self):
        state = make_gaussian_state(Character.ring(0.0), np.pi, 0.4, 0.0)
        traj = integrate_trajectory(state, Potential.zero(), np.pi, 1e-2, 0.1)
        lift = lift_trajectory(traj, RingPoint(0, traj.angles[0]))
        assert np.max(np.abs(lift - lift[0])) < 1e-4

    def test_discontinuous_input_rejected(self):
        jumpy = np.array([0.1, 0.2, 0.2 + np.pi, 0.4])
        with pytest.raises(PhysicsError, match="ambiguous"):
            lift_trajectory(jumpy, 0.1)

    def test_wrong_start_rejected(self):
        with pytest.raises(ConfigError, match="project"):
            lift_trajectory(np.array([0.1, 0.2, 0.3]), 1.0)


class TestTorusFields:
    def test_velocity_projectable_under_exchange(self):
        # pushing the field forward by the swap exchanges components and
        # arguments; for a sector state it must reproduce itself
        state = symmetrized_product_state(
            lambda t: wrapped_gaussian(t, 2.0, 0.5, 1.0),
            lambda t: wrapped_gaussian(t, 4.3, 0.5, -1.0), -1, n_points=64)
        v, mask = velocity_field(state)
        ok = ~(mask | mask.T)
        assert np.max(np.abs(v[..., 0].T - v[..., 1])[ok]) <= 1e-9

    def test_two_particle_equivariance(self):
        from topobohm.ensembles import sample_density
        state = symmetrized_product_state(
            lambda t: wrapped_gaussian(t, 2.0, 0.5, 2.0),
            lambda t: wrapped_gaussian(t, 4.3, 0.5, -1.0), -1, n_points=64)
        n = 4000
        samples = sample_density(state, n, seed=9)
        result, evolved = transport(state, Potential.zero(), samples, 4e-3, 75)
        final = np.mod(result.positions[-1], TWO_PI)

        def tv(points, rho, bins=16):
            h, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=bins,
                                     range=[[0, TWO_PI], [0, TWO_PI]])
            cell = rho.reshape(bins, rho.shape[0] // bins,
                               bins, rho.shape[1] // bins).sum(axis=(1, 3))
            return 0.5 * np.sum(np.abs(h / h.sum() - cell / cell.sum()))

        moved = tv(final, evolved.density())
        stale = tv(final, state.density())
        assert moved <= 0.03 + 2 * np.sqrt(256 / n)
        # the initial density is no longer a match after t = 0.3
        assert stale > moved + 0.1
