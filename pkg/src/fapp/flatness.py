"""Differential flatness of the quadrotor with its on-board inner loop.

Flat output is ``(x, y, z, psi)``. The flat state stacks each output with its
derivatives up to the order below the flat input::

    z = (x, x', x'', x''', y, ..., y''', z, ..., z''', psi, psi')

and the flat input is ``v = (x'''', y'''', z'''', psi'')``. Flat states and flat
inputs are plain ``numpy`` arrays of length 14 and 4; the index constants in
this module name their blocks.

Conventions: inertial z points up, gravity is ``-g e3`` and the rotor thrust
acts along the body z axis. Rotations are body-to-inertial and use the ZYX
(yaw-pitch-roll) Euler convention wherever angles are needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateThrust, TiltLimit

CHAIN_LENGTHS = (4, 4, 4, 2)
FLAT_STATE_DIM = 14
FLAT_INPUT_DIM = 4

POSITION_SLOTS = (0, 4, 8, 12)
VELOCITY_SLOTS = (1, 5, 9, 13)
ACCELERATION_SLOTS = (2, 6, 10)
JERK_SLOTS = (3, 7, 11)
CHAIN_STARTS = (0, 4, 8, 12)

# Below this specific thrust (m/s^2) the body z axis is undefined.
EPS_THRUST = 0.1

E3 = np.array([0.0, 0.0, 1.0])


def position_block(z):
    """Return ``(x, y, z, psi)`` from a flat state."""
    return np.asarray(z)[list(POSITION_SLOTS)]


def velocity_block(z):
    """Return ``(x', y', z', psi')`` from a flat state."""
    return np.asarray(z)[list(VELOCITY_SLOTS)]


def acceleration_block(z):
    return np.asarray(z)[list(ACCELERATION_SLOTS)]


def jerk_block(z):
    return np.asarray(z)[list(JERK_SLOTS)]


def wrap_angle(angle):
    """Map an angle (or array of angles) to the interval (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def unwrap_near(angle, reference):
    """Shift ``angle`` by a multiple of 2*pi so it lies closest to ``reference``."""
    return reference + wrap_angle(angle - reference)


@dataclass(frozen=True)
class FlatOutput:
    """Position and heading of the vehicle; ``psi`` is kept unwrapped."""

    x: float
    y: float
    z: float
    psi: float

    def normalized_psi(self):
        return wrap_angle(self.psi)

    def as_array(self):
        return np.array([self.x, self.y, self.z, self.psi])


@dataclass(frozen=True)
class QuadrotorParams:
    """Physical and inner-loop parameters of the simulated quadrotor.

    Parameters
    ----------
    mass : float
        Vehicle mass [kg].
    gravity : float
        Gravitational acceleration [m/s^2].
    inertia : tuple of float
        Diagonal of the body inertia matrix [kg m^2].
    tau : float
        Time constant of the roll/pitch angle loop and of the yaw-rate loop [s].
    k_z : float
        Vertical-velocity gain of the thrust loop [1/s].
    rate_gain : float
        Bandwidth of the roll/pitch body-rate loop [1/s].
    thrust_tau : float
        Time constant with which rotor thrust follows the thrust loop [s].
    max_thrust_accel : float
        Thrust saturation expressed as specific thrust [m/s^2].
    """

    mass: float = 0.48
    gravity: float = 9.81
    inertia: tuple = (3.4e-3, 3.4e-3, 6.0e-3)
    tau: float = 0.15
    k_z: float = 3.0
    rate_gain: float = 20.0
    thrust_tau: float = 0.05
    max_thrust_accel: float = 25.0

    def __post_init__(self):
        object.__setattr__(self, "inertia", tuple(float(j) for j in self.inertia))
        values = (self.mass, self.gravity, self.tau, self.k_z, self.rate_gain,
                  self.thrust_tau, self.max_thrust_accel) + self.inertia
        if len(self.inertia) != 3 or not all(val > 0 for val in values):
            raise ValueError("quadrotor parameters must all be strictly positive")

    @property
    def inertia_matrix(self):
        return np.diag(self.inertia)


@dataclass(frozen=True)
class QuadrotorState:
    """Rigid-body state: position, velocity, body-to-inertial rotation, body rates."""

    position: np.ndarray
    velocity: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    body_rates: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def euler_angles(self):
        """Return ``(roll, pitch, yaw)`` with yaw in (-pi, pi]."""
        return euler_from_rotation(self.rotation)


class CommandInput(NamedTuple):
    """Set-points accepted by the on-board inner loop."""

    zdot_cmd: float
    phi_cmd: float
    theta_cmd: float
    r_cmd: float


def euler_from_rotation(R):
    """ZYX Euler angles ``(phi, theta, psi)`` of a rotation matrix."""
    theta = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    phi = math.atan2(R[2, 1], R[2, 2])
    psi = math.atan2(R[1, 0], R[0, 0])
    return phi, theta, psi


def rotation_from_euler(phi, theta, psi):
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    return np.array([
        [cps * cth, cps * sth * sph - sps * cph, cps * sth * cph + sps * sph],
        [sps * cth, sps * sth * sph + cps * cph, sps * sth * cph - cps * sph],
        [-sth, cth * sph, cth * cph],
    ])


def euler_rates(phi, theta, body_rates):
    """ZYX Euler angle rates ``(phi', theta', psi')`` from body rates."""
    p, q, r = body_rates
    cph, sph = math.cos(phi), math.sin(phi)
    cth, tth = math.cos(theta), math.tan(theta)
    return (p + tth * (q * sph + r * cph),
            q * cph - r * sph,
            (q * sph + r * cph) / cth)


def flat_model_matrices():
    """Continuous-time linear flat model ``z' = A z + B v``.

    Returns
    -------
    A : ndarray, shape (14, 14)
        Block-diagonal integrator chains of lengths 4, 4, 4 and 2.
    B : ndarray, shape (14, 4)
        Routes each flat input to the last entry of its chain.
    """
    A = np.zeros((FLAT_STATE_DIM, FLAT_STATE_DIM))
    B = np.zeros((FLAT_STATE_DIM, FLAT_INPUT_DIM))
    for col, (start, length) in enumerate(zip(CHAIN_STARTS, CHAIN_LENGTHS)):
        for i in range(length - 1):
            A[start + i, start + i + 1] = 1.0
        B[start + length - 1, col] = 1.0
    return A, B


def _chain_lengths(A, B):
    """Recover integrator-chain lengths from the column structure of ``B``."""
    lengths = []
    start = 0
    for col in range(B.shape[1]):
        end = int(np.flatnonzero(B[:, col])[0])
        lengths.append(end - start + 1)
        start = end + 1
    if start != A.shape[0]:
        raise ValueError("matrices are not a stack of integrator chains")
    return lengths


def discretize_chain(A, B, dt):
    """Exact zero-order-hold discretization of stacked integrator chains.

    Within a chain of length ``n`` the transition matrix has entries
    ``dt**(j-i) / (j-i)!`` for ``j >= i`` and the input column has entries
    ``dt**(n-i) / (n-i)!``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    A_d = np.zeros_like(A)
    B_d = np.zeros_like(B)
    start = 0
    for col, n in enumerate(_chain_lengths(A, B)):
        for i in range(n):
            for j in range(i, n):
                A_d[start + i, start + j] = dt ** (j - i) / math.factorial(j - i)
            B_d[start + i, col] = dt ** (n - i) / math.factorial(n - i)
        start += n
    return A_d, B_d


@dataclass(frozen=True)
class _FlatKinematics:
    rotation: np.ndarray
    body_rates: np.ndarray
    body_accel: np.ndarray
    thrust_accel: float
    thrust_accel_rate: float
    phi: float
    theta: float


def _thrust_axis_frame(accel, psi, g):
    t = np.asarray(accel, dtype=float) + g * E3
    c = float(np.linalg.norm(t))
    if c <= EPS_THRUST:
        raise DegenerateThrust(f"specific thrust {c:.3g} m/s^2 is below {EPS_THRUST}")
    zb = t / c
    if zb[2] <= 0.0:
        raise TiltLimit("thrust axis at or below the horizontal plane")
    # x_b is orthogonal to the yawed y axis; this is what makes psi the ZYX yaw.
    yc = np.array([-math.sin(psi), math.cos(psi), 0.0])
    xb = np.cross(yc, zb)
    xb /= np.linalg.norm(xb)
    yb = np.cross(zb, xb)
    return np.column_stack((xb, yb, zb)), c


def _flat_kinematics(z, v, g):
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    acc = acceleration_block(z)
    jerk = jerk_block(z)
    snap = v[:3]
    psi, psi_dot = z[12], z[13]
    psi_ddot = v[3]

    R, c = _thrust_axis_frame(acc, psi, g)
    xb, yb, zb = R[:, 0], R[:, 1], R[:, 2]
    c_dot = float(zb @ jerk)
    p = -float(yb @ jerk) / c
    q = float(xb @ jerk) / c

    phi, theta, _ = euler_from_rotation(R)
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    if cph < 1e-6 or cth < 1e-6:
        raise TiltLimit("roll or pitch too close to +-pi/2")
    num = psi_dot * cth - q * sph
    r = num / cph

    snap_body = R.T @ snap
    p_dot = (-snap_body[1] - 2.0 * c_dot * p + c * r * q) / c
    q_dot = (snap_body[0] - 2.0 * c_dot * q - c * r * p) / c
    phi_dot, theta_dot, _ = euler_rates(phi, theta, (p, q, r))
    num_dot = (psi_ddot * cth - psi_dot * sth * theta_dot
               - q_dot * sph - q * cph * phi_dot)
    r_dot = (num_dot * cph + num * sph * phi_dot) / cph ** 2

    return _FlatKinematics(
        rotation=R,
        body_rates=np.array([p, q, r]),
        body_accel=np.array([p_dot, q_dot, r_dot]),
        thrust_accel=c,
        thrust_accel_rate=c_dot,
        phi=phi,
        theta=theta,
    )


def phi_state(z, v, params=QuadrotorParams()):
    """Map a flat state (and flat input) to the rigid-body state.

    The body z axis is aligned with ``(x'', y'', z'' + g)``, the heading is the
    flat output ``psi`` and the body rates follow from the jerk and ``psi'``.

    Raises
    ------
    DegenerateThrust
        If the required specific thrust is at or below ``EPS_THRUST``.
    TiltLimit
        If the required attitude is at or beyond 90 degrees of tilt.
    """
    kin = _flat_kinematics(z, v, params.gravity)
    z = np.asarray(z, dtype=float)
    return QuadrotorState(
        position=z[[0, 4, 8]].copy(),
        velocity=z[[1, 5, 9]].copy(),
        rotation=kin.rotation,
        body_rates=kin.body_rates,
    )


def flat_thrust(z, v, params=QuadrotorParams()):
    """Rotor thrust [N] and its time derivative implied by a flat state."""
    kin = _flat_kinematics(z, v, params.gravity)
    return params.mass * kin.thrust_accel, params.mass * kin.thrust_accel_rate


def psi_inverse(z_d, v_d, params=QuadrotorParams()):
    """Nominal inner-loop command for a desired flat state and flat input.

    Inverts the inner-loop model used by the simulator: thrust lags its set
    point ``m (g + k_z (zdot_cmd - z')) / R33`` with ``thrust_tau``; roll and
    pitch rates chase ``(angle_cmd - angle) / tau`` through a rate loop of
    bandwidth ``rate_gain``; the yaw rate follows ``r_cmd`` with ``tau``.
    Applied from a matching initial condition the cascade reproduces the
    desired flat trajectory.
    """
    kin = _flat_kinematics(z_d, v_d, params.gravity)
    z_d = np.asarray(z_d, dtype=float)
    R33 = kin.rotation[2, 2]

    thrust_accel_sp = kin.thrust_accel + params.thrust_tau * kin.thrust_accel_rate
    zdot_cmd = z_d[9] + (thrust_accel_sp * R33 - params.gravity) / params.k_z

    p, q, r = kin.body_rates
    p_dot, q_dot, r_dot = kin.body_accel
    p_sp = p + p_dot / params.rate_gain
    q_sp = q + q_dot / params.rate_gain
    phi_cmd = kin.phi + params.tau * p_sp
    theta_cmd = kin.theta + params.tau * q_sp
    if abs(phi_cmd) >= math.pi / 2 or abs(theta_cmd) >= math.pi / 2:
        raise TiltLimit("commanded roll/pitch outside (-pi/2, pi/2)")
    r_cmd = r + params.tau * r_dot
    return CommandInput(float(zdot_cmd), float(phi_cmd), float(theta_cmd), float(r_cmd))
