# The pieces under the controller: flat model, lifted prediction, one QP.

#%%
import numpy as np

from fapp.flatness import discretize_chain, flat_model_matrices
from fapp.mpc import PathFollowingMPC, audit_solution, build_constraints, build_cost
from fapp.path import petal_path
from fapp.qp import run_qp_check

#%% Flat model: three 4-chains (x, y, z) and a 2-chain (yaw)
A, B = flat_model_matrices()
A_d, B_d = discretize_chain(A, B, 0.1)
print("nonzeros in A:", np.count_nonzero(A))
print("x-chain input column:", B_d[:4, 0])

#%% One controller update from hover near the path start
path = petal_path()
mpc = PathFollowingMPC(path)
z0 = np.zeros(14)
z0[[0, 4, 8]] = [0.05, 0.05, 1.0]
s0 = np.zeros(4)
sol = mpc.solve(z0, s0)
print("QP status %s after %d iterations, %.3f ms" % (sol.stats.status, sol.stats.iterations,
                                                    1e3 * sol.stats.qp_time))
print("first flat input (snap x, y, z, yaw accel):", np.round(sol.v, 3))
print("predicted theta over the horizon:", np.round(sol.s_predicted[:, 0], 4))

#%% Problem size and the exact constraint audit of the prediction
s_bar, z_bar, _ = mpc.nominal(z0, s0)
H, f = build_cost(mpc.lifted, mpc.weights, z0, s0, path, s_bar)
A_in, b_in = build_constraints(mpc.lifted, mpc.constraints, z0, s0, s_bar, z_bar)
print("H", H.shape, "A_in", A_in.shape)
excess, ratio = audit_solution(sol, mpc.constraints)
print("jerk excess %.2e m/s^3, thrust ratio %.3f" % (excess, ratio))

#%% Solver against brute-force active-set enumeration
print(run_qp_check(instances=100, seed=0))
