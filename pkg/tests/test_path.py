import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fapp.errors import DegeneratePath, DomainError
from fapp.flatness import discretize_chain, flat_model_matrices
from fapp.path import (
    BezierPath,
    bezier_eval,
    clamp_theta,
    cross_track_distance,
    discretize_path,
    extended_derivatives,
    line_coefficients,
    path_dynamics_matrices,
    path_speed,
    petal_path,
    reference_flat_state,
    reference_jacobian,
)

PETAL = petal_path()


def bernstein_oracle(points, theta):
    """Direct Bernstein-polynomial sum, independent of de Casteljau."""
    points = np.asarray(points, dtype=float)
    q = len(points) - 1
    return sum(math.comb(q, j) * (1 - theta) ** (q - j) * theta ** j * points[j]
               for j in range(q + 1))


def central_difference(fun, x, h):
    return (fun(x + h) - fun(x - h)) / (2 * h)


class TestPathDynamics:
    def test_structure(self):
        A_p, B_p = path_dynamics_matrices()
        np.testing.assert_array_equal(A_p, np.diag(np.ones(3), 1))
        np.testing.assert_array_equal(B_p[:, 0], [0, 0, 0, 1])

    def test_discretization_matches_x_chain(self):
        A_pd, B_pd = discretize_path(0.1)
        A_d, B_d = discretize_chain(*flat_model_matrices(), 0.1)
        np.testing.assert_array_equal(A_pd, A_d[:4, :4])
        np.testing.assert_array_equal(B_pd[:, 0], B_d[:4, 0])

    def test_constant_path_input_from_rest(self):
        A_pd, B_pd = discretize_path(0.1)
        s = np.zeros(4)
        for _ in range(10):
            s = A_pd @ s + B_pd[:, 0] * 1.0
        # analytic quadruple integration of w = 1 over 1 s
        assert s[0] == pytest.approx(1.0 / 24.0, abs=1e-12)
        assert s[0] == pytest.approx(0.041667, abs=1e-6)


class TestBezier:
    def test_petal_endpoints(self):
        np.testing.assert_array_equal(bezier_eval(PETAL, 0.0), [0.0, 0.0, 1.0, 0.0])
        np.testing.assert_array_equal(bezier_eval(PETAL, 1.0), [0.0, 0.0, 1.0, 0.0])

    def test_petal_midpoint(self):
        expected = bernstein_oracle(PETAL.control_points, 0.5)
        np.testing.assert_allclose(expected, [2.25, 0.0, 0.25, 0.0], atol=1e-15)
        np.testing.assert_allclose(bezier_eval(PETAL, 0.5), expected, atol=1e-14)

    def test_petal_start_derivatives(self):
        P = PETAL.control_points
        np.testing.assert_allclose(3 * (P[1] - P[0]), [9, 6, -3, 0])
        np.testing.assert_allclose(bezier_eval(PETAL, 0.0, 1), 3 * (P[1] - P[0]), atol=1e-14)
        second = 6 * (P[2] - 2 * P[1] + P[0])
        np.testing.assert_allclose(second, [-18, -36, 6, 0])
        np.testing.assert_allclose(bezier_eval(PETAL, 0.0, 2), second, atol=1e-13)

    def test_orders_above_degree_vanish(self):
        assert not np.any(bezier_eval(PETAL, 0.3, 4))
        line = BezierPath([[0, 0, 0, 0], [1, 2, 3, 0]])
        assert not np.any(bezier_eval(line, 0.7, 2))

    @pytest.mark.parametrize("q", [1, 2, 3, 5])
    def test_endpoint_interpolation(self, q):
        rng = np.random.default_rng(q)
        pts = rng.standard_normal((q + 1, 4))
        path = BezierPath(pts)
        np.testing.assert_array_equal(path.evaluate(0.0), pts[0])
        np.testing.assert_allclose(path.evaluate(1.0), pts[-1], atol=1e-15)

    @given(st.floats(0.01, 0.99))
    @settings(max_examples=40)
    def test_matches_bernstein_sum(self, theta):
        np.testing.assert_allclose(PETAL.evaluate(theta),
                                   bernstein_oracle(PETAL.control_points, theta), atol=1e-12)

    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_derivative_consistency(self, order):
        rng = np.random.default_rng(order)
        path = BezierPath(rng.standard_normal((6, 4)))
        for theta in rng.uniform(0.05, 0.95, 10):
            fd = central_difference(lambda th: bezier_eval(path, th, order - 1), theta, 1e-5)
            np.testing.assert_allclose(bezier_eval(path, theta, order), fd, atol=1e-6, rtol=1e-7)

    def test_domain(self):
        with pytest.raises(DomainError):
            bezier_eval(PETAL, 1.0 + 1e-6)
        with pytest.raises(DomainError):
            bezier_eval(PETAL, -1e-6)
        bezier_eval(PETAL, 1.0 + 1e-10)

    def test_degenerate_path_rejected(self):
        with pytest.raises(DegeneratePath):
            BezierPath([[1, 1, 1, 0], [1, 1, 1, 0]])

    def test_extended_matches_inside(self):
        for theta in (0.0, 0.3, 1.0):
            np.testing.assert_allclose(extended_derivatives(PETAL, theta), PETAL.derivatives(theta),
                                       atol=1e-13)
        beyond = extended_derivatives(PETAL, 1.1)
        np.testing.assert_allclose(beyond[0], bernstein_oracle(PETAL.control_points, 1.1), atol=1e-12)

    def test_clamp(self):
        assert clamp_theta(-0.2) == 0.0
        assert clamp_theta(1.3) == 1.0


class TestReference:
    def test_stationary_vehicle(self):
        z = reference_flat_state(PETAL, (0, 0, 0, 0))
        np.testing.assert_array_equal(z[[0, 4, 8, 12]], [0, 0, 1, 0])
        assert not np.any(np.delete(z, [0, 4, 8, 12]))

    def test_petal_unit_speed(self):
        z = reference_flat_state(PETAL, (0, 1, 0, 0))
        np.testing.assert_allclose(z[[1, 5, 9, 13]], [9, 6, -3, 0], atol=1e-13)
        np.testing.assert_allclose(z[[2, 6, 10]], [-18, -36, 6], atol=1e-12)

    def test_line_constant_velocity(self):
        P0, P1 = np.array([0, 0, 1, 0.0]), np.array([4, 1, 1, 0.5])
        line = BezierPath([P0, P1])
        z = reference_flat_state(line, (0.5, 0.3, 0, 0))
        np.testing.assert_allclose(z[[1, 5, 9, 13]], 0.3 * (P1 - P0), atol=1e-15)
        assert not np.any(z[[2, 3, 6, 7, 10, 11]])

    def test_time_derivative_consistency(self):
        """Derivative blocks equal finite differences of h along a smooth theta(t)."""
        def s_of(t):
            return np.array([0.2 + 0.1 * t + 0.05 * t ** 2 + 0.01 * t ** 3,
                             0.1 + 0.1 * t + 0.03 * t ** 2,
                             0.1 + 0.06 * t,
                             0.06])

        t, h = 0.7, 1e-4
        z = reference_flat_state(PETAL, s_of(t))
        dz = central_difference(lambda tt: reference_flat_state(PETAL, s_of(tt)), t, h)
        for start, n in ((0, 4), (4, 4), (8, 4), (12, 2)):
            np.testing.assert_allclose(dz[start:start + n - 1], z[start + 1:start + n], atol=1e-5)

    def test_jacobian_finite_difference(self):
        s = np.array([0.3, 1.0, 0.5, 0.0])
        J = reference_jacobian(PETAL, s)
        for k in range(4):
            e = np.zeros(4)
            e[k] = 1e-6
            fd = (reference_flat_state(PETAL, s + e) - reference_flat_state(PETAL, s - e)) / 2e-6
            np.testing.assert_allclose(J[:, k], fd, atol=1e-6)

    def test_jacobian_jerk_column(self):
        s = np.array([0.4, 0.7, -0.2, 0.3])
        J = reference_jacobian(PETAL, s)
        p1 = PETAL.evaluate(0.4, 1)
        np.testing.assert_allclose(J[[3, 7, 11], 3], p1[:3], atol=1e-14)
        assert not np.any(np.delete(J[:, 3], [3, 7, 11]))


class TestLine:
    def test_structure(self):
        coeffs = line_coefficients(np.zeros(4), [1.0, 0, 0, 0])
        assert coeffs.Pi[0, 0] == 1.0
        assert not np.any(coeffs.Pi0)
        np.testing.assert_array_equal(coeffs.Pi[[1, 5, 9, 13], 1], [1, 0, 0, 0])

    def test_matches_reference_and_jacobian(self):
        rng = np.random.default_rng(11)
        P0, P1 = rng.standard_normal(4), rng.standard_normal(4)
        coeffs = line_coefficients(P0, P1)
        line = BezierPath([P0, P1])
        worst = 0.0
        for _ in range(100):
            s = np.concatenate([[rng.uniform(0, 1)], rng.standard_normal(3)])
            worst = max(worst, np.abs(coeffs.reference(s) - reference_flat_state(line, s)).max())
            np.testing.assert_allclose(reference_jacobian(line, s), coeffs.Pi, atol=1e-15)
        assert worst < 1e-12

    def test_degenerate(self):
        with pytest.raises(DegeneratePath):
            line_coefficients([1, 2, 3, 0], [1, 2, 3, 0])


class TestCrossTrack:
    def test_on_path_is_zero(self):
        points = PETAL.sample(37)[:, :3]
        # only the chord sag of the 2001-sample polyline remains
        assert cross_track_distance(points, PETAL).max() < 1e-6
        assert cross_track_distance(PETAL.sample(2001)[:, :3], PETAL).max() < 1e-12

    def test_offset_from_line(self):
        line = BezierPath([[0, 0, 1, 0], [5, 0, 1, 0]])
        d = cross_track_distance([[1.2345, 0.3, 1.0], [2.0, 0.0, 1.4]], line)
        np.testing.assert_allclose(d, [0.3, 0.4], atol=1e-12)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform([-0.5, -2.5, -0.5], [3.5, 2.5, 1.5], (50, 3))
        dense = np.array([bernstein_oracle(PETAL.control_points, th)[:3]
                          for th in np.linspace(0, 1, 40001)])
        oracle = np.array([np.linalg.norm(dense - p, axis=1).min() for p in pts])
        np.testing.assert_allclose(cross_track_distance(pts, PETAL), oracle, atol=1e-5)

    def test_path_speed(self):
        assert path_speed(PETAL, 0.0, 0.1) == pytest.approx(0.1 * math.sqrt(81 + 36 + 9))
