import math

import numpy as np
import pytest

from fapp.errors import NonFiniteState
from fapp.flatness import CommandInput, QuadrotorParams, QuadrotorState
from fapp.simulator import (
    NO_WIND,
    SimState,
    WindMode,
    WindModel,
    energy,
    estimate_flat_state,
    hover_state,
    step,
)

PARAMS = QuadrotorParams()
HOVER_CMD = CommandInput(0.0, 0.0, 0.0, 0.0)


def run(state, cmd, seconds, wind=NO_WIND, dt=1 / 200):
    states = [state]
    for _ in range(int(round(seconds / dt))):
        state = step(state, cmd, wind=wind, dt=dt)
        states.append(state)
    return states


class TestEquilibria:
    def test_hover(self):
        start = hover_state([1.0, -2.0, 1.5], yaw=0.3)
        end = run(start, CommandInput(0.0, 0.0, 0.0, 0.0), 2.0)[-1]
        np.testing.assert_allclose(end.quad.position, [1.0, -2.0, 1.5], atol=1e-9)
        np.testing.assert_allclose(end.quad.velocity, 0.0, atol=1e-9)
        np.testing.assert_allclose(end.quad.rotation, start.quad.rotation, atol=1e-9)
        assert end.thrust == pytest.approx(PARAMS.mass * PARAMS.gravity, abs=1e-9)

    def test_free_fall(self):
        start = SimState(quad=hover_state([0, 0, 10.0]).quad, thrust=0.0)
        cmd = CommandInput(-100.0, 0.0, 0.0, 0.0)
        states = run(start, cmd, 0.1)
        assert states[-1].time == pytest.approx(0.1)
        assert states[-1].quad.velocity[2] == pytest.approx(-0.981, abs=1e-12)
        assert states[-1].quad.position[2] == pytest.approx(10.0 - 0.5 * 9.81 * 0.01, abs=1e-12)
        assert states[-1].thrust == 0.0

    def test_energy_conserved_without_thrust(self):
        quad = QuadrotorState(position=np.array([0, 0, 20.0]), velocity=np.array([1.0, -0.5, 2.0]),
                              rotation=np.eye(3), body_rates=np.array([0.0, 0.0, 3.0]))
        start = SimState(quad=quad, thrust=0.0)
        cmd = CommandInput(-100.0, 0.0, 0.0, 3.0)
        states = run(start, cmd, 2.0)
        e0 = energy(start)
        drift = max(abs(energy(s) - e0) for s in states)
        assert drift < 1e-6

    def test_rotation_stays_orthonormal(self):
        state = hover_state([0, 0, 1.0])
        cmd = CommandInput(0.0, 0.3, -0.2, 2.0)
        for s in run(state, cmd, 3.0)[::50]:
            R = s.quad.rotation
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self):
        cmd = CommandInput(0.2, 0.1, -0.1, 0.5)
        a = run(hover_state([0, 0, 1.0]), cmd, 1.0)[-1]
        b = run(hover_state([0, 0, 1.0]), cmd, 1.0)[-1]
        assert np.array_equal(a.quad.position, b.quad.position)
        assert np.array_equal(a.quad.rotation, b.quad.rotation)

    def test_non_finite_state_raises(self):
        quad = hover_state([0, 0, 1.0]).quad
        bad = SimState(quad=QuadrotorState(quad.position, np.array([np.nan, 0, 0]),
                                           quad.rotation, quad.body_rates), thrust=1.0)
        with pytest.raises(NonFiniteState):
            step(bad, HOVER_CMD)


class TestInnerLoop:
    def test_roll_step_response(self):
        target = 0.2
        states = run(hover_state([0, 0, 1.0]), CommandInput(0.0, target, 0.0, 0.0), 1.5)
        phi = np.array([s.quad.euler_angles()[0] for s in states])
        t = np.array([s.time for s in states])
        assert phi.max() < 1.10 * target
        outside = np.flatnonzero(np.abs(phi - target) > 0.02 * target)
        settle = t[outside[-1] + 1]
        assert settle <= 5 * PARAMS.tau

    def test_climb_rate_tracking(self):
        states = run(hover_state([0, 0, 1.0]), CommandInput(0.5, 0.0, 0.0, 0.0), 3.0)
        assert states[-1].quad.velocity[2] == pytest.approx(0.5, abs=1e-3)

    def test_yaw_rate_tracking(self):
        states = run(hover_state([0, 0, 1.0]), CommandInput(0.0, 0.0, 0.0, 1.0), 1.5)
        assert states[-1].quad.body_rates[2] == pytest.approx(1.0, abs=1e-3)


class TestWind:
    def test_constant_force_acceleration(self):
        wind = WindModel(mode=WindMode.CONSTANT_FORCE, force=(0.5, 0.0, 0.0))
        states = run(hover_state([0, 0, 1.0]), HOVER_CMD, 1.0, wind=wind)
        # attitude is held level by the inner loop, so the wind acts alone in x
        dt = states[-1].time - states[-2].time
        true_acc = (states[-1].quad.velocity[0] - states[-2].quad.velocity[0]) / dt
        assert true_acc == pytest.approx(0.5 / PARAMS.mass, rel=1e-9)
        est = estimate_flat_state(states[-1])
        assert est.z[2] == pytest.approx(0.0, abs=1e-9)
        assert true_acc - est.z[2] == pytest.approx(0.5 / PARAMS.mass, rel=1e-9)

    def test_window(self):
        wind = WindModel(mode=WindMode.CONSTANT_FORCE, force=(0, -1.5, 0), start=2.0, duration=4.0)
        assert not wind.active(1.999)
        np.testing.assert_array_equal(wind.force_at(2.0), [0, -1.5, 0])
        np.testing.assert_array_equal(wind.force_at(5.99), [0, -1.5, 0])
        assert not wind.active(6.0)

    def test_gust_pulse_profile(self):
        wind = WindModel(mode="GustPulse", force=(1.0, 0, 0), start=1.0, duration=2.0)
        assert wind.force_at(1.0)[0] == pytest.approx(0.0)
        assert wind.force_at(2.0)[0] == pytest.approx(1.0)
        assert wind.force_at(1.5)[0] == pytest.approx(0.5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            WindModel(mode="GustPulse", force=(1, 0, 0), duration=0.0)
        with pytest.raises(ValueError):
            WindModel(mode="ConstantForce", force=(1, 0))
        with pytest.raises(ValueError):
            WindModel(mode="Hurricane")

    def test_no_wind(self):
        assert not NO_WIND.active(3.0)


class TestEstimator:
    def test_hover(self):
        est = estimate_flat_state(hover_state([1, 2, 3.0], yaw=0.4))
        assert est.valid
        expected = np.zeros(14)
        expected[[0, 4, 8, 12]] = [1, 2, 3, 0.4]
        np.testing.assert_allclose(est.z, expected, atol=1e-12)

    def test_steady_climb(self):
        states = run(hover_state([0, 0, 1.0]), CommandInput(0.5, 0.0, 0.0, 0.0), 6.0)
        est = estimate_flat_state(states[-1])
        np.testing.assert_allclose(est.z[[1, 5, 9]], [0, 0, 0.5], atol=1e-6)
        np.testing.assert_allclose(est.z[[2, 6, 10]], 0.0, atol=1e-6)

    def test_yaw_unwrapping(self):
        state = hover_state([0, 0, 1.0], yaw=math.pi - 0.01)
        est = estimate_flat_state(state, psi_prev=-math.pi + 0.02)
        assert est.z[12] == pytest.approx(-math.pi - 0.01)

    def test_zero_thrust_invalid(self):
        state = SimState(quad=hover_state([0, 0, 1.0]).quad, thrust=0.0)
        assert not estimate_flat_state(state).valid
