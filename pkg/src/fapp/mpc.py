"""Condensed predictive path-following controller.

Decision variables are stacked flat inputs and path inputs,
``vt = (v_1 .. v_N, w_1 .. w_N)``. Predicted flat states and path states are
affine in ``vt`` through the lifted (condensed) models, so the cost

    1/2 sum_k  e_p' Q e_p + e_v' S e_v + v' R v + Rp w^2

is quadratic once the reference ``h(s_k)`` is replaced by its first-order
expansion about a nominal path sequence (one Gauss-Newton step). Velocity
errors are measured between the vehicle and ``p'(theta) * v_cmd``, so a
disturbed vehicle is not dragged forward by the virtual vehicle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalBreakdown, QpInfeasible
from .flatness import (
    ACCELERATION_SLOTS,
    FLAT_INPUT_DIM,
    FLAT_STATE_DIM,
    JERK_SLOTS,
    POSITION_SLOTS,
    VELOCITY_SLOTS,
    discretize_chain,
    flat_model_matrices,
)
from .path import PATH_STATE_DIM, discretize_path, reference_flat_state, reference_jacobian
from .qp import DenseQpSolver, QpSolution

HESSIAN_REGULARIZATION = 1e-8
MPC_DT = 0.1
HORIZON = 10


def _diag4(values, name):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 1:
        arr = np.repeat(arr, 4)
    if arr.size != 4 or np.any(arr < 0):
        raise ValueError(f"{name} must be four non-negative weights")
    return tuple(float(a) for a in arr)


@dataclass(frozen=True)
class OcpWeights:
    """Diagonal weights of the path-following cost and the commanded path speed.

    ``Q``, ``S`` and ``R`` hold the diagonals of the position-error,
    velocity-error and flat-input weights; ``Rp`` weights the path input and
    ``v_cmd`` is the desired path-parameter rate [1/s].
    """

    Q: tuple = (500.0, 500.0, 500.0, 500.0)
    S: tuple = (10.0, 10.0, 10.0, 10.0)
    R: tuple = (0.01, 0.01, 0.01, 0.01)
    Rp: float = 0.1
    v_cmd: float = 0.18

    def __post_init__(self):
        for name in ("Q", "S", "R"):
            object.__setattr__(self, name, _diag4(getattr(self, name), name))
        if self.Rp < 0:
            raise ValueError("Rp must be non-negative")

    def expanded_Q(self):
        Q = np.zeros((FLAT_STATE_DIM, FLAT_STATE_DIM))
        Q[POSITION_SLOTS, POSITION_SLOTS] = self.Q
        return Q

    def expanded_S(self):
        S = np.zeros((FLAT_STATE_DIM, FLAT_STATE_DIM))
        S[VELOCITY_SLOTS, VELOCITY_SLOTS] = self.S
        return S


@dataclass(frozen=True)
class ConstraintSpec:
    """Jerk box, thrust bound and path-input limits."""

    j_min: tuple = (-20.0, -20.0, -20.0)
    j_max: tuple = (20.0, 20.0, 20.0)
    f_max: float = 20.0
    gravity: float = 9.81
    w_max: float = 1000.0
    forward_only: bool = True

    def __post_init__(self):
        object.__setattr__(self, "j_min", tuple(float(j) for j in self.j_min))
        object.__setattr__(self, "j_max", tuple(float(j) for j in self.j_max))
        if len(self.j_min) != 3 or len(self.j_max) != 3:
            raise ValueError("jerk bounds must be 3-vectors")
        if not all(lo < hi for lo, hi in zip(self.j_min, self.j_max)):
            raise ValueError("j_min must be below j_max componentwise")
        if not self.f_max > self.gravity:
            raise ValueError("f_max must exceed gravity")


@dataclass(frozen=True)
class LiftedSystem:
    """Stacked N-step predictions ``z_hat = A_hat z0 + B_hat v_hat`` and the path analogue."""

    A_hat: np.ndarray
    B_hat: np.ndarray
    Ap_hat: np.ndarray
    Bp_hat: np.ndarray
    N: int

    def predict(self, z0, v_seq):
        v = np.asarray(v_seq, dtype=float).ravel()
        return (self.A_hat @ z0 + self.B_hat @ v).reshape(self.N, -1)

    def predict_path(self, s0, w_seq):
        w = np.asarray(w_seq, dtype=float).ravel()
        return (self.Ap_hat @ s0 + self.Bp_hat @ w).reshape(self.N, -1)


def _lift(A_d, B_d, N):
    nx, nu = B_d.shape
    powers = [np.eye(nx)]
    for _ in range(N):
        powers.append(A_d @ powers[-1])
    A_hat = np.vstack(powers[1:])
    B_hat = np.zeros((N * nx, N * nu))
    for k in range(N):
        for j in range(k + 1):
            B_hat[k * nx:(k + 1) * nx, j * nu:(j + 1) * nu] = powers[k - j] @ B_d
    return A_hat, B_hat


def build_lifted(A_d, B_d, A_pd, B_pd, N):
    if N < 1:
        raise ValueError("horizon must be at least one step")
    A_hat, B_hat = _lift(np.asarray(A_d, float), np.asarray(B_d, float), N)
    Ap_hat, Bp_hat = _lift(np.asarray(A_pd, float), np.asarray(B_pd, float).reshape(-1, 1), N)
    return LiftedSystem(A_hat, B_hat, Ap_hat, Bp_hat, N)


def _reference_expansion(path, s_bar, v_cmd):
    """Stacked Jacobian, affine offset ``h(s_bar) - J s_bar`` and velocity-command states."""
    N = len(s_bar)
    J_hat = np.zeros((N * FLAT_STATE_DIM, N * PATH_STATE_DIM))
    offset = np.zeros(N * FLAT_STATE_DIM)
    z_cmd = np.zeros(N * FLAT_STATE_DIM)
    for k, sk in enumerate(s_bar):
        rows = slice(k * FLAT_STATE_DIM, (k + 1) * FLAT_STATE_DIM)
        Jk = reference_jacobian(path, sk, extend=True)
        J_hat[rows, k * PATH_STATE_DIM:(k + 1) * PATH_STATE_DIM] = Jk
        offset[rows] = reference_flat_state(path, sk, extend=True) - Jk @ sk
        z_cmd[rows] = reference_flat_state(path, (sk[0], v_cmd, 0.0, 0.0), extend=True)
    return J_hat, offset, z_cmd


def _check_s_bar(s_bar, N):
    s_bar = np.asarray(s_bar, dtype=float).reshape(N, PATH_STATE_DIM)
    return s_bar


def build_cost(lifted, weights, z0, s0, path, s_bar):
    """Hessian and gradient of the Gauss-Newton linearized path-following cost.

    Returns
    -------
    H : ndarray, shape (5N, 5N)
    f : ndarray, shape (5N,)
    """
    N = lifted.N
    s_bar = _check_s_bar(s_bar, N)
    J_hat, offset, z_cmd = _reference_expansion(path, s_bar, weights.v_cmd)

    q_diag = np.tile(np.diag(weights.expanded_Q()), N)
    s_diag = np.tile(np.diag(weights.expanded_S()), N)
    free_z = lifted.A_hat @ z0

    # position residual  e_p = M_p vt + d_p  (rows with zero weight dropped)
    pos = np.flatnonzero(q_diag)
    M_p = np.hstack([lifted.B_hat[pos], -J_hat[pos] @ lifted.Bp_hat])
    d_p = free_z[pos] - J_hat[pos] @ (lifted.Ap_hat @ s0) - offset[pos]
    # velocity residual  e_v = M_v vt + d_v
    vel = np.flatnonzero(s_diag)
    M_v = np.hstack([lifted.B_hat[vel], np.zeros((vel.size, N))])
    d_v = free_z[vel] - z_cmd[vel]

    Wp = q_diag[pos]
    Wv = s_diag[vel]
    H = M_p.T @ (Wp[:, None] * M_p) + M_v.T @ (Wv[:, None] * M_v)
    reg = np.concatenate([np.tile(weights.R, N), np.full(N, weights.Rp)])
    H[np.diag_indices_from(H)] += reg + HESSIAN_REGULARIZATION
    H = 0.5 * (H + H.T)
    f = M_p.T @ (Wp * d_p) + M_v.T @ (Wv * d_v)
    return H, f


def linearized_objective(lifted, weights, z0, s0, path, s_bar, v_tilde):
    """Cost of ``v_tilde`` under the linearized reference, summed stage by stage."""
    N = lifted.N
    s_bar = _check_s_bar(s_bar, N)
    v_tilde = np.asarray(v_tilde, dtype=float)
    v = v_tilde[:N * FLAT_INPUT_DIM].reshape(N, FLAT_INPUT_DIM)
    w = v_tilde[N * FLAT_INPUT_DIM:]
    Q, S = weights.expanded_Q(), weights.expanded_S()
    R = np.diag(weights.R)
    z_pred = lifted.predict(z0, v)
    s_pred = lifted.predict_path(s0, w)
    total = 0.0
    for k in range(N):
        Jk = reference_jacobian(path, s_bar[k], extend=True)
        z_ref = reference_flat_state(path, s_bar[k], extend=True) + Jk @ (s_pred[k] - s_bar[k])
        z_cmd = reference_flat_state(path, (s_bar[k][0], weights.v_cmd, 0.0, 0.0), extend=True)
        ep = z_pred[k] - z_ref
        ev = z_pred[k] - z_cmd
        total += ep @ Q @ ep + ev @ S @ ev + v[k] @ R @ v[k] + weights.Rp * w[k] ** 2
    return 0.5 * total


def _free_and_nominal(lifted, z0, z_bar):
    free = (lifted.A_hat @ z0).reshape(lifted.N, FLAT_STATE_DIM)
    if z_bar is None:
        z_bar = free
    return free, np.asarray(z_bar, dtype=float).reshape(lifted.N, FLAT_STATE_DIM)


def build_constraints(lifted, spec, z0, s0, s_bar=None, z_bar=None):
    """Inequality rows ``A_in vt <= b_in`` for jerk, thrust and path-input limits.

    Thrust rows linearize ``|a_k + g e3|^2 <= f_max^2`` about the nominal
    predicted flat states ``z_bar`` (the free response when omitted). Every row
    is scaled to a unit-norm gradient.
    """
    N = lifted.N
    nz, nu = FLAT_STATE_DIM, FLAT_INPUT_DIM
    n = N * (nu + 1)
    free, z_bar = _free_and_nominal(lifted, z0, z_bar)
    free_s = (lifted.Ap_hat @ s0).reshape(N, PATH_STATE_DIM)
    g_vec = np.array([0.0, 0.0, spec.gravity])
    rows, rhs = [], []

    for k in range(N):
        block = lifted.B_hat[k * nz:(k + 1) * nz]
        for axis, slot in enumerate(JERK_SLOTS):
            row = np.zeros(n)
            row[:N * nu] = block[slot]
            rows.append(row)
            rhs.append(spec.j_max[axis] - free[k, slot])
            rows.append(-row)
            rhs.append(free[k, slot] - spec.j_min[axis])

    for k in range(N):
        block = lifted.B_hat[k * nz:(k + 1) * nz]
        a_bar = z_bar[k, list(ACCELERATION_SLOTS)]
        t_bar = a_bar + g_vec
        row = np.zeros(n)
        row[:N * nu] = 2.0 * t_bar @ block[list(ACCELERATION_SLOTS)]
        a_free = free[k, list(ACCELERATION_SLOTS)]
        rows.append(row)
        rhs.append(spec.f_max ** 2 - t_bar @ t_bar + 2.0 * t_bar @ (a_bar - a_free))

    for k in range(N):
        row = np.zeros(n)
        row[N * nu + k] = 1.0
        rows.append(row)
        rhs.append(spec.w_max)
        rows.append(-row)
        rhs.append(spec.w_max)

    if spec.forward_only:
        for k in range(N):
            row = np.zeros(n)
            row[N * nu:] = -lifted.Bp_hat[k * PATH_STATE_DIM + 1]
            rows.append(row)
            rhs.append(free_s[k, 1])

    A_in = np.array(rows)
    b_in = np.array(rhs)
    norms = np.linalg.norm(A_in, axis=1)
    keep = norms > 0
    A_in = A_in[keep] / norms[keep, None]
    b_in = b_in[keep] / norms[keep]
    return A_in, b_in


@dataclass
class SolveStats:
    iterations: int
    primal_residual: float
    dual_residual: float
    wall_time: float
    qp_time: float
    status: str


@dataclass
class ControlSolution:
    """Result of one controller update; the first inputs are applied."""

    v_sequence: np.ndarray
    w_sequence: np.ndarray
    z_predicted: np.ndarray
    s_predicted: np.ndarray
    z_ref_predicted: np.ndarray
    s_bar: np.ndarray
    objective: float
    stats: SolveStats
    qp: QpSolution = field(repr=False, default=None)

    @property
    def v(self):
        return self.v_sequence[0]

    @property
    def w(self):
        return float(self.w_sequence[0])

    @property
    def v_tilde(self):
        return np.concatenate([self.v_sequence.ravel(), self.w_sequence])


def shift_sequence(seq, steps):
    """Drop ``steps`` leading entries and repeat the last one to keep the length."""
    seq = np.asarray(seq, dtype=float)
    if steps <= 0:
        return seq.copy()
    steps = min(steps, len(seq) - 1)
    tail = np.repeat(seq[-1:], steps, axis=0)
    return np.concatenate([seq[steps:], tail], axis=0)


class PathFollowingMPC:
    """One-Gauss-Newton-step predictive path-following controller.

    Parameters
    ----------
    path : BezierPath
    weights : OcpWeights
    constraints : ConstraintSpec
    dt : float
        Prediction step [s].
    horizon : int
        Number of prediction steps ``N``.
    """

    def __init__(self, path, weights=OcpWeights(), constraints=ConstraintSpec(),
                 dt=MPC_DT, horizon=HORIZON, solver=None):
        self.path = path
        self.weights = weights
        self.constraints = constraints
        self.dt = dt
        self.N = horizon
        A, B = flat_model_matrices()
        A_d, B_d = discretize_chain(A, B, dt)
        A_pd, B_pd = discretize_path(dt)
        self.lifted = build_lifted(A_d, B_d, A_pd, B_pd, horizon)
        self.solver = solver or DenseQpSolver()

    def nominal(self, z0, s0, warm_start=None, elapsed=None):
        """Nominal ``(s_bar, z_bar, vt_bar)`` used for linearization."""
        N, nu = self.N, FLAT_INPUT_DIM
        if warm_start is None:
            k = np.arange(1, N + 1)
            s_bar = np.zeros((N, PATH_STATE_DIM))
            s_bar[:, 0] = s0[0] + self.weights.v_cmd * self.dt * k
            s_bar[:, 1] = self.weights.v_cmd
            z_bar = self.lifted.predict(z0, np.zeros(N * nu))
            return s_bar, z_bar, None
        steps = 1 if elapsed is None else int(round(elapsed / self.dt))
        v_seq = shift_sequence(warm_start.v_sequence, steps)
        w_seq = shift_sequence(warm_start.w_sequence, steps)
        s_bar = self.lifted.predict_path(s0, w_seq)
        z_bar = self.lifted.predict(z0, v_seq)
        return s_bar, z_bar, np.concatenate([v_seq.ravel(), w_seq])

    def solve(self, z0, s0, warm_start=None, elapsed=None):
        """Linearize, assemble and solve one QP; see `solve_step`."""
        t0 = time.perf_counter()
        z0 = np.asarray(z0, dtype=float)
        s0 = np.asarray(s0, dtype=float)
        s_bar, z_bar, _ = self.nominal(z0, s0, warm_start, elapsed)
        H, f = build_cost(self.lifted, self.weights, z0, s0, self.path, s_bar)
        A_in, b_in = build_constraints(self.lifted, self.constraints, z0, s0, s_bar, z_bar)
        qp_warm = warm_start.qp if warm_start is not None and warm_start.qp is not None else None
        try:
            sol = self.solver.solve(H, f, A_in, b_in, warm_start=qp_warm)
        except NumericalBreakdown as exc:
            raise QpInfeasible(str(exc)) from exc
        if not sol.optimal:
            raise QpInfeasible(f"QP returned status {sol.status.value}")
        return self._package(z0, s0, s_bar, sol, t0)

    def _package(self, z0, s0, s_bar, sol, t0):
        N, nu = self.N, FLAT_INPUT_DIM
        v_seq = sol.primal[:N * nu].reshape(N, nu)
        w_seq = sol.primal[N * nu:].copy()
        z_pred = self.lifted.predict(z0, v_seq)
        s_pred = self.lifted.predict_path(s0, w_seq)
        z_ref = np.array([reference_flat_state(self.path, sk, extend=True) for sk in s_pred])
        stats = SolveStats(
            iterations=sol.iterations,
            primal_residual=sol.primal_residual,
            dual_residual=sol.dual_residual,
            wall_time=time.perf_counter() - t0,
            qp_time=sol.solve_time,
            status=sol.status.value,
        )
        return ControlSolution(
            v_sequence=v_seq,
            w_sequence=w_seq,
            z_predicted=z_pred,
            s_predicted=s_pred,
            z_ref_predicted=z_ref,
            s_bar=s_bar,
            objective=sol.objective,
            stats=stats,
            qp=sol,
        )


def solve_step(z0, s0, path, weights=OcpWeights(), spec=ConstraintSpec(), warm_start=None,
               dt=MPC_DT, horizon=HORIZON):
    """Single controller update with a throw-away controller instance.

    The nominal path sequence is the warm start shifted by one prediction step,
    or constant-speed propagation of ``s0`` at ``v_cmd`` without one.
    """
    mpc = PathFollowingMPC(path, weights, spec, dt=dt, horizon=horizon)
    return mpc.solve(z0, s0, warm_start=warm_start)


def audit_solution(solution, spec):
    """Exact constraint check of predicted states.

    Returns the largest jerk-bound excess [m/s^3] and the largest ratio
    ``|a_k + g e3| / f_max`` over the horizon.
    """
    z = solution.z_predicted
    jerk = z[:, list(JERK_SLOTS)]
    excess = np.maximum(jerk - np.array(spec.j_max), np.array(spec.j_min) - jerk)
    thrust = z[:, list(ACCELERATION_SLOTS)] + np.array([0.0, 0.0, spec.gravity])
    ratio = np.linalg.norm(thrust, axis=1) / spec.f_max
    return float(max(0.0, excess.max())), float(ratio.max())
