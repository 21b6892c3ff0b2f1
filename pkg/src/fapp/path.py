"""Bezier paths in flat-output space and the virtual vehicle riding on them.

The virtual vehicle state is ``s = (theta, theta', theta'', theta''')`` and obeys
a four-long integrator chain driven by the scalar path input ``w``. Its
reference flat state follows from the chain rule applied to the curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePath, DomainError
from .flatness import FLAT_STATE_DIM, discretize_chain

PATH_STATE_DIM = 4
THETA_TOL = 1e-9

# Translational outputs fill four slots per chain, yaw fills two.
_OUTPUT_STARTS = (0, 4, 8, 12)
_OUTPUT_ORDERS = (4, 4, 4, 2)


def clamp_theta(theta):
    return min(1.0, max(0.0, float(theta)))


class BezierPath:
    """Bezier curve of degree ``q`` in the 4-D flat output space.

    Parameters
    ----------
    control_points : array_like, shape (q + 1, 4)
        Control points ``P_0 ... P_q``.
    check_regular : bool
        Reject curves whose tangent nearly vanishes at any of 201 samples.
    """

    def __init__(self, control_points, check_regular=True):
        pts = np.array(control_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 4 or pts.shape[0] < 2:
            raise ValueError("control points must have shape (q + 1, 4) with q >= 1")
        pts.setflags(write=False)
        self.control_points = pts
        self.degree = pts.shape[0] - 1
        # hodographs[d] are the control points of the d-th derivative curve
        self._hodographs = [pts]
        for d in range(1, 5):
            prev = self._hodographs[-1]
            if prev.shape[0] <= 1:
                self._hodographs.append(np.zeros((0, 4)))
                continue
            self._hodographs.append((prev.shape[0] - 1) * np.diff(prev, axis=0))
        if check_regular:
            for theta in np.linspace(0.0, 1.0, 201):
                if np.linalg.norm(self.evaluate(theta, 1)) < 1e-6:
                    raise DegeneratePath(f"tangent vanishes near theta={theta:.3f}")

    def __repr__(self):
        return f"BezierPath(degree={self.degree}, control_points={self.control_points.tolist()})"

    def evaluate(self, theta, derivative=0):
        return bezier_eval(self, theta, derivative)

    def derivatives(self, theta, max_order=4):
        """Stack of ``p(theta), p'(theta), ...`` up to ``max_order``; shape (max_order+1, 4)."""
        return np.array([bezier_eval(self, theta, d) for d in range(max_order + 1)])

    def sample(self, count):
        thetas = np.linspace(0.0, 1.0, count)
        return np.array([bezier_eval(self, th) for th in thetas])


def _de_casteljau(points, theta):
    pts = points.copy()
    for k in range(1, pts.shape[0]):
        pts[: pts.shape[0] - k] = (1.0 - theta) * pts[: pts.shape[0] - k] + theta * pts[1: pts.shape[0] - k + 1]
    return pts[0]


def bezier_eval(path, theta, derivative=0):
    """Evaluate the ``derivative``-th theta-derivative of ``path`` at ``theta``.

    Derivatives are taken on the hodograph (scaled control-point differences),
    so orders above the curve degree are exactly zero.
    """
    if not 0 <= derivative <= 4:
        raise ValueError("derivative order must be between 0 and 4")
    if theta < -THETA_TOL or theta > 1.0 + THETA_TOL:
        raise DomainError(f"theta={theta} outside [0, 1]")
    theta = clamp_theta(theta)
    pts = path._hodographs[derivative]
    if pts.shape[0] == 0:
        return np.zeros(4)
    return _de_casteljau(pts, theta)


def path_dynamics_matrices():
    """Continuous-time virtual-vehicle model ``s' = A_p s + B_p w``."""
    A_p = np.diag(np.ones(PATH_STATE_DIM - 1), k=1)
    B_p = np.zeros((PATH_STATE_DIM, 1))
    B_p[-1, 0] = 1.0
    return A_p, B_p


def discretize_path(dt):
    """ZOH discretization of the virtual-vehicle chain."""
    return discretize_chain(*path_dynamics_matrices(), dt)


def extended_derivatives(path, theta, max_order=4):
    """Curve derivatives of the polynomial continuation of ``path`` at any ``theta``.

    Inside [0, 1] this equals `BezierPath.derivatives`; outside it extrapolates
    the curve polynomial smoothly instead of raising.
    """
    out = np.zeros((max_order + 1, 4))
    for d in range(max_order + 1):
        pts = path._hodographs[d]
        if pts.shape[0]:
            out[d] = _de_casteljau(pts, float(theta))
    return out


def _derivs_for(path, theta, clamp, extend=False):
    if extend:
        return extended_derivatives(path, theta)
    if clamp:
        theta = clamp_theta(theta)
    return path.derivatives(theta)


def reference_flat_state(path, s, clamp=False, extend=False):
    """Reference flat state ``h(s)`` of the virtual vehicle.

    With ``clamp`` set, ``theta`` outside [0, 1] is evaluated at the nearest
    endpoint with the curve derivatives frozen there. With ``extend`` set, the
    curve polynomial is continued past the endpoints instead.
    """
    theta, th1, th2, th3 = (float(val) for val in s)
    p0, p1, p2, p3, _ = _derivs_for(path, theta, clamp, extend)
    vel = p1 * th1
    acc = p2 * th1 ** 2 + p1 * th2
    jerk = p3 * th1 ** 3 + 3.0 * p2 * th1 * th2 + p1 * th3
    z = np.empty(FLAT_STATE_DIM)
    for i, (start, order) in enumerate(zip(_OUTPUT_STARTS, _OUTPUT_ORDERS)):
        z[start:start + order] = (p0[i], vel[i], acc[i], jerk[i])[:order]
    return z


def reference_jacobian(path, s, clamp=False, extend=False):
    """Analytic Jacobian of ``reference_flat_state`` with respect to ``s``; shape (14, 4)."""
    theta, th1, th2, th3 = (float(val) for val in s)
    p0, p1, p2, p3, p4 = _derivs_for(path, theta, clamp, extend)
    zero = np.zeros(4)
    # rows: d/d(theta, theta', theta'', theta''') of each derivative level
    d_pos = (p1, zero, zero, zero)
    d_vel = (p2 * th1, p1, zero, zero)
    d_acc = (p3 * th1 ** 2 + p2 * th2, 2.0 * p2 * th1, p1, zero)
    d_jerk = (p4 * th1 ** 3 + 3.0 * p3 * th1 * th2 + p2 * th3,
              3.0 * p3 * th1 ** 2 + 3.0 * p2 * th2,
              3.0 * p2 * th1,
              p1)
    levels = (d_pos, d_vel, d_acc, d_jerk)
    J = np.zeros((FLAT_STATE_DIM, PATH_STATE_DIM))
    for i, (start, order) in enumerate(zip(_OUTPUT_STARTS, _OUTPUT_ORDERS)):
        for level in range(order):
            J[start + level] = [col[i] for col in levels[level]]
    return J


@dataclass(frozen=True)
class LineCoefficients:
    """Affine map ``z_ref = Pi @ s + Pi0`` of a straight-line path."""

    Pi: np.ndarray
    Pi0: np.ndarray

    def reference(self, s):
        return self.Pi @ np.asarray(s, dtype=float) + self.Pi0


def line_coefficients(P0, P1):
    P0 = np.asarray(P0, dtype=float)
    P1 = np.asarray(P1, dtype=float)
    direction = P1 - P0
    if not np.any(direction):
        raise DegeneratePath("line endpoints coincide")
    Pi = np.zeros((FLAT_STATE_DIM, PATH_STATE_DIM))
    Pi0 = np.zeros(FLAT_STATE_DIM)
    for i, (start, order) in enumerate(zip(_OUTPUT_STARTS, _OUTPUT_ORDERS)):
        Pi0[start] = P0[i]
        for level in range(order):
            Pi[start + level, level] = direction[i]
    return LineCoefficients(Pi, Pi0)


def petal_path():
    """The cubic petal test path used in the experiments."""
    return BezierPath([
        [0.0, 0.0, 1.0, 0.0],
        [3.0, 2.0, 0.0, 0.0],
        [3.0, -2.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])


def cross_track_distance(positions, path, samples=2001):
    """Distance from each 3-D position to the curve.

    The curve is sampled at ``samples`` uniform values of theta and the
    distance is measured to the polyline through those samples: the nearest
    sample is found first, then the two chords meeting there are checked.
    """
    curve = path.sample(samples)[:, :3]
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    out = np.empty(positions.shape[0])
    for start in range(0, positions.shape[0], 256):
        chunk = positions[start:start + 256]
        d2 = ((chunk[:, None, :] - curve[None, :, :]) ** 2).sum(axis=2)
        nearest = d2.argmin(axis=1)
        best = np.sqrt(d2[np.arange(chunk.shape[0]), nearest])
        for lo in (nearest - 1, nearest):
            lo = np.clip(lo, 0, samples - 2)
            a, b = curve[lo], curve[lo + 1]
            ab = b - a
            frac = np.clip(((chunk - a) * ab).sum(axis=1) / np.maximum((ab * ab).sum(axis=1), 1e-300), 0.0, 1.0)
            dist = np.linalg.norm(chunk - (a + frac[:, None] * ab), axis=1)
            best = np.minimum(best, dist)
        out[start:start + 256] = best
    return out


def path_speed(path, theta, theta_dot):
    """Speed of the virtual vehicle in 3-D space, ``|p'(theta)[:3]| * theta'``."""
    return float(np.linalg.norm(bezier_eval(path, clamp_theta(theta), 1)[:3]) * theta_dot)

