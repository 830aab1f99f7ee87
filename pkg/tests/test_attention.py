import math

import numpy as np
import pytest

from memory.models import AttentionState, FlowField, Frame
from services.attention import (
    AttentionParams,
    AttentionSimulator,
    compute_masses,
    initial_state,
    potential_gradient,
    simulate_trajectory,
    step_attention,
    update_inhibition,
)
from services.errors import NonFiniteError


def _frame(pixels):
    return Frame(pixels=np.asarray(pixels, dtype=np.float64)[..., None], index=0)


def _still_flow(h, w):
    return FlowField(velocities=np.zeros((h, w, 2), dtype=np.float32))


class TestComputeMasses:
    def test_uniform_frame_has_no_mass(self):
        mu = compute_masses(_frame(np.full((5, 6), 0.4)), _still_flow(5, 6), None, AttentionParams())
        assert not mu.any()

    def test_motion_mass(self):
        v = np.zeros((4, 4, 2), dtype=np.float32)
        v[2, 1] = (3.0, 0.0)
        mu = compute_masses(_frame(np.zeros((4, 4))), FlowField(v), None, AttentionParams(alpha_b=0.0, alpha_m=1.0))
        assert mu[2, 1] == 3.0
        assert mu.sum() == 3.0

    def test_vertical_step_edge(self):
        img = np.zeros((4, 6))
        img[:, 3:] = 1.0
        mu = compute_masses(_frame(img), _still_flow(4, 6), None, AttentionParams(alpha_b=1.0, alpha_m=0.0))
        np.testing.assert_allclose(mu[:, 2], 0.5)
        np.testing.assert_allclose(mu[:, 3], 0.5)
        assert not mu[:, [0, 1, 4, 5]].any()

    def test_inhibition_clamps_at_zero(self):
        v = np.ones((3, 3, 2), dtype=np.float32)
        mu = compute_masses(_frame(np.zeros((3, 3))), FlowField(v), np.full((3, 3), 5.0), AttentionParams())
        assert mu.min() == 0.0


class TestPotentialGradient:
    def test_single_mass_attracts(self):
        mu = np.zeros((5, 5))
        mu[2, 3] = 1.0                                  # pixel (x=4, y=3)
        g = potential_gradient(mu, (3.0, 3.0), 0.25)
        np.testing.assert_allclose(g, [1.0 / (2.0 * math.pi), 0.0], atol=1e-15)

    def test_symmetric_masses_cancel(self):
        mu = np.zeros((5, 5))
        for y, x in ((1, 2), (3, 2), (2, 1), (2, 3)):
            mu[y, x] = 2.0
        np.testing.assert_allclose(potential_gradient(mu, (3.0, 3.0), 0.25), [0.0, 0.0], atol=1e-15)

    def test_zero_mass(self):
        assert not potential_gradient(np.zeros((3, 4)), (2.0, 2.0), 0.25).any()

    def test_linear_in_mass(self, rng):
        mu = rng.uniform(0, 1, size=(6, 7))
        a = potential_gradient(mu, (2.3, 4.1), 0.25)
        np.testing.assert_allclose(potential_gradient(3.0 * mu, (2.3, 4.1), 0.25), 3.0 * a, rtol=1e-12)

    def test_singularity_floor(self):
        mu = np.zeros((3, 3))
        mu[1, 1] = 1.0
        g = potential_gradient(mu, (2.1, 2.0), 0.25)
        assert np.all(np.isfinite(g))
        np.testing.assert_allclose(g[0], -0.1 / 0.25 / (2.0 * math.pi))


class TestStepAttention:
    def test_velocity_decays_without_mass(self):
        params = AttentionParams(rho=0.5, dt=1.0)
        state = AttentionState(position=(5.0, 5.0), velocity=(1.0, 0.0), saccade=False)
        nxt = step_attention(state, np.zeros((10, 10)), params)
        assert nxt.velocity == (0.5, 0.0)
        assert nxt.position == (5.5, 5.0)

    def test_equilibrium(self):
        state = AttentionState(position=(3.0, 4.0), velocity=(0.0, 0.0), saccade=False)
        for _ in range(5):
            state = step_attention(state, np.zeros((8, 8)), AttentionParams())
        assert state.position == (3.0, 4.0)

    def test_contraction(self):
        params = AttentionParams(rho=0.25, dt=1.0)
        state = AttentionState(position=(20.0, 20.0), velocity=(0.6, -0.8), saccade=False)
        nxt = step_attention(state, np.zeros((40, 40)), params)
        assert math.hypot(*nxt.velocity) == pytest.approx(0.75, rel=1e-12)

    def test_moves_toward_distant_mass(self):
        mu = np.zeros((20, 20))
        mu[15, 17] = 10.0                               # pixel (x=18, y=16)
        state = AttentionState(position=(4.0, 5.0), velocity=(0.0, 0.0), saccade=False)
        nxt = step_attention(state, mu, AttentionParams())
        direction = np.array([18.0 - 4.0, 16.0 - 5.0])
        assert np.dot(nxt.velocity, direction) > 0
        assert nxt.velocity[0] * 11.0 == pytest.approx(nxt.velocity[1] * 14.0)

    def test_clamp_zeroes_normal_velocity(self):
        state = AttentionState(position=(9.5, 2.0), velocity=(3.0, 1.0), saccade=False)
        nxt = step_attention(state, np.zeros((10, 10)), AttentionParams(rho=0.1, dt=1.0))
        assert nxt.position[0] == 10.0
        assert nxt.velocity[0] == 0.0
        assert nxt.velocity[1] == pytest.approx(0.9)

    def test_saccade_threshold(self):
        state = AttentionState(position=(20.0, 20.0), velocity=(10.0, 0.0), saccade=False)
        fast = step_attention(state, np.zeros((40, 40)), AttentionParams(rho=0.5, nu=4.0))
        slow = step_attention(state, np.zeros((40, 40)), AttentionParams(rho=0.5, nu=5.0))
        assert fast.saccade and not slow.saccade

    def test_non_finite_state(self):
        state = AttentionState(position=(2.0, 2.0), velocity=(math.inf, 0.0), saccade=False)
        with pytest.raises(NonFiniteError):
            step_attention(state, np.zeros((4, 4)), AttentionParams())


class TestInhibition:
    def test_decay_and_deposit(self):
        params = AttentionParams(inhibition_strength=2.0, inhibition_radius=1.0, inhibition_decay=0.5)
        field = update_inhibition(np.ones((5, 5)), (3.0, 3.0), params)
        assert field[2, 2] == 2.5
        assert field[2, 3] == 2.5
        assert field[0, 0] == 0.5

    def test_disabled_by_default(self):
        field = update_inhibition(np.zeros((4, 4)), (2.0, 2.0), AttentionParams(inhibition_strength=0.0))
        assert not field.any()


class TestSimulation:
    def test_first_frame_is_the_initial_state(self, tiny_stream):
        traj = simulate_trajectory(tiny_stream, AttentionParams())
        assert traj[0] == initial_state(24, 24, (0.0, 0.0))
        assert traj[0].position == (12.5, 12.5)
        assert len(traj) == len(tiny_stream)

    def test_deterministic(self, tiny_stream):
        a = simulate_trajectory(tiny_stream, AttentionParams())
        b = simulate_trajectory(tiny_stream, AttentionParams())
        assert a == b

    def test_positions_stay_in_frame(self, tiny_stream):
        for s in simulate_trajectory(tiny_stream, AttentionParams(alpha_m=5.0)):
            assert 1.0 <= s.position[0] <= 24.0 and 1.0 <= s.position[1] <= 24.0
            assert s.saccade == (math.hypot(*s.velocity) > AttentionParams().nu)

    def test_zero_mass_stream_decays_in_a_straight_line(self):
        sim = AttentionSimulator(16, 16, AttentionParams(rho=0.5, alpha_b=0.0),
                                 start=initial_state(16, 16, (1.0, 0.5)))
        frame = _frame(np.zeros((16, 16)))
        states = [sim.observe(frame, _still_flow(16, 16)) for _ in range(4)]
        assert [s.velocity for s in states] == [(1.0, 0.5), (0.5, 0.25), (0.25, 0.125), (0.125, 0.0625)]
        assert all(s.position[1] - 8.5 == pytest.approx((s.position[0] - 8.5) / 2) for s in states)
