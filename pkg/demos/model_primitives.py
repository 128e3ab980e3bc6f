"""A tour of the building blocks: plant, linearization, condensation, QP.

Steps the bicycle model, linearizes along a seed trajectory, checks the
condensed prediction against a step-by-step rollout, and solves a small
constrained QP with the native solver.

Run:  python demos/model_primitives.py
"""

import numpy as np

from fleetcoord import (DenseQp, condense, linearize, rollout, solve_qp,
                        step_nonlinear)
from fleetcoord.scenario import VehicleState

# --- the plant: constant speed, steering-only bicycle model
state = VehicleState(0.0, 0.0, 0.0)
v, L, ts = 50.0 / 3.6, 2.4, 0.1
print("ten steps at 50 km/h with 10 degrees of steering:")
for k in range(10):
    state = step_nonlinear(state, np.radians(10.0), v, L, ts)
print(f"  final pose: x={state.rx:.2f} m, y={state.ry:.2f} m, "
      f"heading={np.degrees(state.theta):.1f} deg")

# --- linearize along a seed and condense to x = Phi u + gamma
x0 = VehicleState(0.0, 0.0, 0.1)
seed = rollout(x0, np.full(15, 0.05), v, L, ts)
models = linearize(seed, v, L, ts)
pred = condense(models, x0)
u = np.linspace(-0.2, 0.2, 15)
direct = x0.as_array()
for k, m in enumerate(models):
    direct = m.A @ direct + m.B * u[k] + m.c
stacked = (pred.Phi @ u + pred.gamma).reshape(-1, 3)
print(f"\ncondensed prediction vs chained linear rollout "
      f"(final step): max |diff| = {np.max(np.abs(stacked[-1] - direct)):.2e}")

# --- the dense QP solver on a toy problem: stay close to a target under a cap
qp = DenseQp(H=2.0 * np.eye(2), f=-2.0 * np.array([3.0, 1.0]),
             G=[[1.0, 1.0]], h=[2.5], lb=[0.0, 0.0])
sol = solve_qp(qp)
print(f"\nQP: min |u - (3,1)|^2  s.t.  u1 + u2 <= 2.5,  u >= 0")
print(f"  solution {sol.u_star}, status {sol.status}, "
      f"KKT residual {sol.kkt_residual:.1e}")
