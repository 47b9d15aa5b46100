"""
Power control for a fixed association via the log-domain dual method.

Runs the solver at the efficiency of the full-power point and prints the
objective and constraint residuals along the way, then compares the
answer with a dense grid over the two powers of a 2-BS instance.

    python demos/power_dual_method.py
"""

import numpy as np

from uee_hetnet import ExperimentConfig, generate_scenario, max_sinr_association, power_objective, solve_power, uee
from uee_hetnet.baselines import grid_search_power

sc = generate_scenario(ExperimentConfig(), 1)
assoc = max_sinr_association(sc)
eta = uee(sc, assoc, sc.max_power)
p, trace = solve_power(sc, assoc, eta)
print(f"eta = {eta:.3f}, {trace.iterations} iterations, converged={trace.converged}")
for t in np.unique(np.geomspace(1, len(trace.objective), 10).astype(int)) - 1:
    print(f"  it {t:5d}  objective {trace.objective[t]:.6f}  eq {trace.eq_residual[t]:.1e}"
          f"  sinr-slack {trace.ineq_violation[t]:.1e}  clamps {trace.clamps[t]}")
print("powers [W]:", np.array2string(p, precision=5), " (max", np.array2string(sc.max_power, precision=4) + ")")

small = generate_scenario(ExperimentConfig(n_users=4, n_small=1), 2)
a2 = max_sinr_association(small)
if a2.k.min() == 0:
    a2 = type(a2).from_serving([0, 0, 1, 1], 2)
eta2 = 3 * uee(small, a2, small.max_power)
p2, _ = solve_power(small, a2, eta2)
pg, best = grid_search_power(small, a2, eta2)
print(f"\n2-BS check: dual method {power_objective(small, a2, p2, eta2):.6f} at {np.array2string(p2, precision=5)}")
print(f"            300x300 grid {best:.6f} at {np.array2string(pg, precision=5)}")
