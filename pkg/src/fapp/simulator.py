"""Nonlinear quadrotor simulation with an on-board inner loop and wind.

The integrated state is position, velocity, rotation matrix, body rates and
rotor thrust. The inner loop converts a `CommandInput` into a thrust set point
and body torques:

* thrust set point ``m (g + k_z (zdot_cmd - z')) / R33``, saturated, followed by
  the rotors with time constant ``thrust_tau``;
* roll/pitch rate set points ``(angle_cmd - angle) / tau`` tracked by a rate
  loop of bandwidth ``rate_gain``;
* yaw rate following ``r_cmd`` with time constant ``tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import NonFiniteState
from .flatness import (
    E3,
    EPS_THRUST,
    FLAT_STATE_DIM,
    CommandInput,
    QuadrotorParams,
    QuadrotorState,
    euler_from_rotation,
    euler_rates,
    flat_thrust,
    phi_state,
    psi_inverse,
    rotation_from_euler,
    unwrap_near,
)

SIM_DT = 1.0 / 200.0


class WindMode(str, Enum):
    NONE = "None"
    CONSTANT_FORCE = "ConstantForce"
    GUST_PULSE = "GustPulse"


@dataclass(frozen=True)
class WindModel:
    """External force on the airframe.

    ``ConstantForce`` applies ``force`` on ``[start, start + duration)``;
    ``GustPulse`` ramps it in and out with a sin^2 profile over the same window.
    """

    mode: WindMode = WindMode.NONE
    force: tuple = (0.0, 0.0, 0.0)
    start: float = 0.0
    duration: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "mode", WindMode(self.mode))
        object.__setattr__(self, "force", tuple(float(c) for c in self.force))
        if len(self.force) != 3:
            raise ValueError("wind force must be a 3-vector")
        if self.mode is WindMode.GUST_PULSE and not self.duration > 0:
            raise ValueError("gust pulse needs a positive duration")

    def force_at(self, t):
        if self.mode is WindMode.NONE:
            return np.zeros(3)
        elapsed = t - self.start
        if elapsed < 0 or elapsed >= self.duration:
            return np.zeros(3)
        if self.mode is WindMode.CONSTANT_FORCE:
            return np.array(self.force)
        return np.array(self.force) * math.sin(math.pi * elapsed / self.duration) ** 2

    def active(self, t):
        return bool(np.any(self.force_at(t)))


NO_WIND = WindModel()


@dataclass(frozen=True)
class SimState:
    quad: QuadrotorState
    thrust: float
    torques: np.ndarray = field(default_factory=lambda: np.zeros(3))
    command: CommandInput = CommandInput(0.0, 0.0, 0.0, 0.0)
    time: float = 0.0


@dataclass(frozen=True)
class EstimatedFlatState:
    z: np.ndarray
    valid: bool


def hover_state(position, params=QuadrotorParams(), yaw=0.0, time=0.0):
    """Vehicle at rest at ``position`` with hover thrust."""
    quad = QuadrotorState(
        position=np.asarray(position, dtype=float).copy(),
        velocity=np.zeros(3),
        rotation=rotation_from_euler(0.0, 0.0, yaw),
        body_rates=np.zeros(3),
    )
    return SimState(quad=quad, thrust=params.mass * params.gravity,
                    command=CommandInput(0.0, 0.0, 0.0, 0.0), time=time)


def state_from_flat(z, v, params=QuadrotorParams(), time=0.0):
    """Full simulator state (including inner-loop internals) matching a flat state."""
    quad = phi_state(z, v, params)
    thrust, _ = flat_thrust(z, v, params)
    cmd = psi_inverse(z, v, params)
    return SimState(quad=quad, thrust=thrust, command=cmd, time=time)


def thrust_setpoint(velocity_z, rotation, cmd, params):
    R33 = max(rotation[2, 2], 0.1)
    sp = params.mass * (params.gravity + params.k_z * (cmd.zdot_cmd - velocity_z)) / R33
    return min(max(sp, 0.0), params.mass * params.max_thrust_accel)


def inner_loop(rotation, body_rates, cmd, params):
    """Desired body angular acceleration and the torque producing it."""
    phi, theta, _ = euler_from_rotation(rotation)
    p, q, r = body_rates
    p_sp = (cmd.phi_cmd - phi) / params.tau
    q_sp = (cmd.theta_cmd - theta) / params.tau
    omega_dot = np.array([
        params.rate_gain * (p_sp - p),
        params.rate_gain * (q_sp - q),
        (cmd.r_cmd - r) / params.tau,
    ])
    J = np.asarray(params.inertia)
    torque = J * omega_dot + np.cross(body_rates, J * body_rates)
    return omega_dot, torque


def _hat(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _pack(state):
    q = state.quad
    return np.concatenate([q.position, q.velocity, q.rotation.ravel(), q.body_rates, [state.thrust]])


def _derivative(x, t, cmd, wind, params):
    vel = x[3:6]
    R = x[6:15].reshape(3, 3)
    omega = x[15:18]
    thrust = x[18]
    J = np.asarray(params.inertia)
    _, torque = inner_loop(R, omega, cmd, params)
    omega_dot = (torque - np.cross(omega, J * omega)) / J
    acc = -params.gravity * E3 + (thrust / params.mass) * R[:, 2] + wind.force_at(t) / params.mass
    R_dot = R @ _hat(omega)
    thrust_dot = (thrust_setpoint(vel[2], R, cmd, params) - thrust) / params.thrust_tau
    return np.concatenate([vel, acc, R_dot.ravel(), omega_dot, [thrust_dot]])


def orthonormalize(R):
    U, _, Vt = np.linalg.svd(R)
    out = U @ Vt
    if np.linalg.det(out) < 0:
        U[:, -1] *= -1
        out = U @ Vt
    return out


def step(state, cmd, wind=NO_WIND, dt=SIM_DT, params=QuadrotorParams()):
    """Advance the simulation by one inner-loop period with RK4.

    ``cmd`` is held over the step; a callable ``cmd(t)`` is evaluated at every
    RK4 stage instead (continuous-time command).
    """
    command_at = cmd if callable(cmd) else (lambda _t: cmd)
    t = state.time
    x = _pack(state)
    k1 = _derivative(x, t, command_at(t), wind, params)
    k2 = _derivative(x + 0.5 * dt * k1, t + 0.5 * dt, command_at(t + 0.5 * dt), wind, params)
    k3 = _derivative(x + 0.5 * dt * k2, t + 0.5 * dt, command_at(t + 0.5 * dt), wind, params)
    k4 = _derivative(x + dt * k3, t + dt, command_at(t + dt), wind, params)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteState(f"non-finite state at t={t + dt:.4f}")
    R = orthonormalize(x_new[6:15].reshape(3, 3))
    held = command_at(t + dt)
    quad = QuadrotorState(position=x_new[0:3], velocity=x_new[3:6], rotation=R,
                          body_rates=x_new[15:18])
    _, torque = inner_loop(R, quad.body_rates, held, params)
    return SimState(quad=quad, thrust=float(max(x_new[18], 0.0)), torques=torque,
                    command=held, time=t + dt)


def estimate_flat_state(state, params=QuadrotorParams(), psi_prev=None):
    """Model-based flat state estimate.

    Position and velocity are copied. Acceleration and jerk come from the
    thrust/attitude model, so an external force such as wind is invisible to
    the estimate. ``psi`` is unwrapped towards ``psi_prev`` when given.
    """
    quad = state.quad
    R = quad.rotation
    p, q, r = quad.body_rates
    xb, yb, zb = R[:, 0], R[:, 1], R[:, 2]
    c = state.thrust / params.mass
    acc = -params.gravity * E3 + c * zb
    valid = c > EPS_THRUST
    if valid:
        c_dot = (thrust_setpoint(quad.velocity[2], R, state.command, params)
                 - state.thrust) / (params.thrust_tau * params.mass)
        jerk = c_dot * zb + c * (q * xb - p * yb)
    else:
        jerk = np.zeros(3)
    phi, theta, psi = euler_from_rotation(R)
    if psi_prev is not None:
        psi = unwrap_near(psi, psi_prev)
    _, _, psi_dot = euler_rates(phi, theta, quad.body_rates)

    z = np.empty(FLAT_STATE_DIM)
    for axis in range(3):
        z[4 * axis: 4 * axis + 4] = (quad.position[axis], quad.velocity[axis], acc[axis], jerk[axis])
    z[12], z[13] = psi, psi_dot
    return EstimatedFlatState(z=z, valid=bool(valid))


def energy(state, params=QuadrotorParams()):
    """Kinetic (translational + rotational) plus potential energy [J]."""
    quad = state.quad
    J = np.asarray(params.inertia)
    kinetic = 0.5 * params.mass * float(quad.velocity @ quad.velocity)
    rotational = 0.5 * float(quad.body_rates @ (J * quad.body_rates))
    return kinetic + rotational + params.mass * params.gravity * float(quad.position[2])


def with_time(state, time):
    return replace(state, time=time)
