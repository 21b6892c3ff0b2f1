"""Dense strictly convex QP solver.

Solves::

    minimize    1/2 x' H x + f' x
    subject to  A x <= b

with the dual active-set method of Goldfarb and Idnani. The method starts from
the unconstrained minimizer (or from the minimizer over a warm-start working
set) and adds violated constraints one at a time while keeping the multipliers
of the working set non-negative, so it detects infeasibility exactly and needs
no phase-one feasible point.

Every returned ``Optimal`` solution carries a KKT certificate.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DimensionMismatch, NumericalBreakdown

MAX_ITERATIONS = 4000
TOL_PRIMAL = 1e-6
TOL_DUAL = 1e-6
TOL_COMPLEMENTARITY = 1e-6


class QpStatus(str, Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


@dataclass
class QpSolution:
    primal: np.ndarray
    dual: np.ndarray
    status: QpStatus
    primal_residual: float
    dual_residual: float
    complementarity: float
    iterations: int
    active_set: tuple = ()
    objective: float = float("nan")
    solve_time: float = 0.0

    @property
    def optimal(self):
        return self.status is QpStatus.OPTIMAL


def _check_dims(H, f, A, b):
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    n = f.size
    if A is None:
        A = np.zeros((0, n))
        b = np.zeros(0)
    A = np.asarray(A, dtype=float).reshape(-1, n) if np.size(A) else np.zeros((0, n))
    b = np.asarray(b, dtype=float).ravel()
    if H.shape != (n, n):
        raise DimensionMismatch(f"H has shape {H.shape}, expected {(n, n)}")
    if A.shape[0] != b.size:
        raise DimensionMismatch(f"A has {A.shape[0]} rows but b has {b.size} entries")
    return H, f, A, b


def kkt_residuals(H, f, A, b, x, lam):
    """Stationarity, primal infeasibility and complementarity of ``(x, lam)``."""
    stationarity = H @ x + f + A.T @ lam
    slack = A @ x - b
    dual_res = float(np.max(np.abs(stationarity))) if stationarity.size else 0.0
    primal_res = float(max(0.0, np.max(slack))) if slack.size else 0.0
    comp = float(np.max(np.abs(lam * slack))) if slack.size else 0.0
    return primal_res, dual_res, comp


def objective(H, f, x):
    return float(0.5 * x @ H @ x + f @ x)


class DenseQpSolver:
    """Reusable Goldfarb-Idnani solver.

    The instance remembers the last optimal working set, which ``solve`` uses as
    a warm start when ``warm_start=True``. One instance must not be shared
    between threads.
    """

    def __init__(self, max_iterations=MAX_ITERATIONS, tol_primal=TOL_PRIMAL,
                 tol_dual=TOL_DUAL, tol_complementarity=TOL_COMPLEMENTARITY):
        self.max_iterations = max_iterations
        self.tol_primal = tol_primal
        self.tol_dual = tol_dual
        self.tol_complementarity = tol_complementarity
        self.last_active_set = ()

    def solve(self, H, f, A=None, b=None, warm_start=None):
        """Solve the QP.

        Parameters
        ----------
        warm_start : None, True, QpSolution or sequence of int
            Initial working set. ``True`` reuses the working set of the previous
            optimal solve on this instance.
        """
        t0 = time.perf_counter()
        H, f, A, b = _check_dims(H, f, A, b)
        if warm_start is True:
            working = self.last_active_set
        elif isinstance(warm_start, QpSolution):
            working = warm_start.active_set
        elif warm_start is None or warm_start is False:
            working = ()
        else:
            working = tuple(int(i) for i in warm_start)
        working = tuple(i for i in working if 0 <= i < A.shape[0])

        try:
            factor = cho_factor(H, lower=True)
        except LinAlgError as exc:
            raise NumericalBreakdown("H is not positive definite") from exc

        x, lam, active, status, iterations = self._goldfarb_idnani(H, f, A, b, factor, working)
        primal_res, dual_res, comp = kkt_residuals(H, f, A, b, x, lam)
        if status is QpStatus.OPTIMAL:
            self.last_active_set = tuple(active)
            certified = (primal_res <= self.tol_primal and dual_res <= self.tol_dual
                         and comp <= self.tol_complementarity and np.all(lam >= -1e-9))
            if not certified:
                raise NumericalBreakdown(
                    f"solution failed KKT certification (primal {primal_res:.2e}, "
                    f"dual {dual_res:.2e}, complementarity {comp:.2e})")
        return QpSolution(
            primal=x,
            dual=lam,
            status=status,
            primal_residual=primal_res,
            dual_residual=dual_res,
            complementarity=comp,
            iterations=iterations,
            active_set=tuple(active),
            objective=objective(H, f, x),
            solve_time=time.perf_counter() - t0,
        )

    def _goldfarb_idnani(self, H, f, A, b, factor, working):
        n = f.size
        m = A.shape[0]
        # Internally constraints read  C x >= d  with C = -A, d = -b.
        C = -A
        d = -b
        scale = np.maximum(np.linalg.norm(C, axis=1), 1e-300)
        eps = 1e-12

        def hinv(rhs):
            return cho_solve(factor, rhs)

        x = hinv(-f)
        active = []
        u = np.zeros(0)
        iterations = 0

        # Reduce the warm-start set to a dual-feasible working set.
        if working:
            active = list(dict.fromkeys(working))
            while active:
                N = C[active].T
                HinvN = hinv(N)
                S = N.T @ HinvN
                try:
                    u = np.linalg.solve(S, d[active] - N.T @ hinv(-f))
                except np.linalg.LinAlgError:
                    active, u = [], np.zeros(0)
                    break
                iterations += 1
                if np.all(u >= -eps) and np.all(np.isfinite(u)):
                    u = np.maximum(u, 0.0)
                    x = hinv(N @ u - f)
                    break
                del active[int(np.argmin(u))]
            if not active:
                x = hinv(-f)
                u = np.zeros(0)

        while iterations < self.max_iterations:
            slack = (C @ x - d) / scale if m else np.zeros(0)
            if active:
                slack[active] = 0.0
            if m == 0 or slack.min() >= -1e-12:
                lam = np.zeros(m)
                lam[active] = u
                return x, lam, active, QpStatus.OPTIMAL, iterations
            p = int(np.argmin(slack))
            n_p = C[p]
            u_plus = np.append(u, 0.0)
            s_p = float(n_p @ x - d[p])

            while True:
                iterations += 1
                if iterations > self.max_iterations:
                    lam = np.zeros(m)
                    lam[active] = u_plus[:-1]
                    return x, lam, active, QpStatus.MAX_ITERATIONS, iterations
                Hinv_n = hinv(n_p)
                if active:
                    N = C[active].T
                    HinvN = hinv(N)
                    S = N.T @ HinvN
                    try:
                        r = np.linalg.solve(S, N.T @ Hinv_n)
                    except np.linalg.LinAlgError as exc:
                        raise NumericalBreakdown("singular working-set matrix") from exc
                    z = Hinv_n - HinvN @ r
                else:
                    r = np.zeros(0)
                    z = Hinv_n

                t1 = np.inf
                drop = None
                for j in range(len(active)):
                    if r[j] > eps:
                        ratio = u_plus[j] / r[j]
                        if ratio < t1:
                            t1, drop = ratio, j
                zn = float(z @ n_p)
                t2 = -s_p / zn if zn > eps * float(n_p @ n_p) else np.inf
                t = min(t1, t2)
                if not np.isfinite(t):
                    lam = np.zeros(m)
                    lam[active] = u_plus[:-1]
                    return x, lam, active, QpStatus.INFEASIBLE, iterations

                if not np.isfinite(t2):
                    u_plus[:-1] -= t * r
                    u_plus[-1] += t
                    del active[drop]
                    u_plus = np.delete(u_plus, drop)
                    continue

                x = x + t * z
                u_plus[:-1] -= t * r
                u_plus[-1] += t
                if t2 <= t1:
                    active.append(p)
                    u = np.maximum(u_plus, 0.0)
                    break
                del active[drop]
                u_plus = np.delete(u_plus, drop)
                s_p = float(n_p @ x - d[p])

        lam = np.zeros(m)
        lam[active] = u
        return x, lam, active, QpStatus.MAX_ITERATIONS, iterations


def solve(H, f, A=None, b=None, warm_start=None):
    """Solve a dense QP with a fresh solver instance. See `DenseQpSolver.solve`."""
    return DenseQpSolver().solve(H, f, A, b, warm_start=warm_start)


def enumerate_active_sets(H, f, A, b, tol=1e-9):
    """Brute-force reference solution by enumerating every active set.

    For each subset of constraints held as equalities, solve the KKT system and
    keep the feasible candidate with the lowest objective. Exponential in the
    number of constraints; intended for m <= ~10.

    Returns
    -------
    x : ndarray or None
        Minimizer, or None when no subset yields a feasible point.
    value : float
    """
    H, f, A, b = _check_dims(H, f, A, b)
    n = f.size
    m = A.shape[0]
    best_x, best_val = None, np.inf
    for k in range(min(m, n) + 1):
        for subset in itertools.combinations(range(m), k):
            idx = list(subset)
            Aw = A[idx]
            kkt = np.block([[H, Aw.T], [Aw, np.zeros((k, k))]])
            rhs = np.concatenate([-f, b[idx]])
            if np.linalg.matrix_rank(kkt) < n + k:
                continue
            sol = np.linalg.solve(kkt, rhs)
            x = sol[:n]
            if m and np.max(A @ x - b) > tol * max(1.0, np.max(np.abs(b))):
                continue
            val = objective(H, f, x)
            if val < best_val:
                best_x, best_val = x, val
    return best_x, best_val


@dataclass
class QpCheckReport:
    instances: int
    failures: list = field(default_factory=list)
    max_objective_error: float = 0.0
    max_primal_error: float = 0.0

    @property
    def passed(self):
        return not self.failures


def random_feasible_qp(rng, n, m):
    """Random strictly convex QP whose feasible set contains a known point."""
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.5 * np.eye(n)
    f = rng.standard_normal(n) * 3.0
    A = rng.standard_normal((m, n))
    x_feas = rng.standard_normal(n)
    b = A @ x_feas + rng.uniform(0.0, 1.0, m)
    return H, f, A, b


def run_qp_check(instances=100, seed=0, obj_tol=1e-6, primal_tol=1e-5, max_n=8, max_m=6):
    """Compare the solver against brute-force enumeration on random instances."""
    rng = np.random.default_rng(seed)
    report = QpCheckReport(instances=instances)
    solver = DenseQpSolver()
    for k in range(instances):
        n = int(rng.integers(1, max_n + 1))
        m = int(rng.integers(0, max_m + 1))
        H, f, A, b = random_feasible_qp(rng, n, m)
        sol = solver.solve(H, f, A, b)
        x_ref, v_ref = enumerate_active_sets(H, f, A, b)
        obj_err = abs(sol.objective - v_ref)
        primal_err = float(np.max(np.abs(sol.primal - x_ref)))
        report.max_objective_error = max(report.max_objective_error, obj_err)
        report.max_primal_error = max(report.max_primal_error, primal_err)
        if not sol.optimal or obj_err > obj_tol or primal_err > primal_tol:
            report.failures.append((k, n, m, sol.status.value, obj_err, primal_err))
    return report
