"""
Association by BS prices.

Fixes the powers, builds the utility weights m_ij = ln(W ln(1 + SINR_ij))
and runs the price iteration.  Each BS raises its price while more users
ask for it than it "supplies"; the best assignment seen is then finished
by move-cycle cancelling.  The result is checked against enumeration on a
small instance.

    python demos/price_iteration.py
"""

import numpy as np

from uee_hetnet import ExperimentConfig, generate_scenario, solve_association, utility_weights
from uee_hetnet.association import AssocOptions, association_objective
from uee_hetnet.baselines import brute_force_association

sc = generate_scenario(ExperimentConfig(n_users=8, n_small=2), 3)
p = sc.max_power * np.array([0.05, 1.0, 1.0])  # a quieter macro
m = utility_weights(sc, p)

assoc, state, trace = solve_association(m, AssocOptions(polish=False))
print(f"price iteration: {len(trace.objective)} steps, converged={trace.converged}")
for t in list(range(0, len(trace.mu), max(1, len(trace.mu) // 8))) + [len(trace.mu) - 1]:
    print(f"  t={t:4d}  prices {np.round(trace.mu[t], 3)}  loads {trace.k[t]}  obj {trace.objective[t]:.4f}")

polished, _, tr2 = solve_association(m)
exact = brute_force_association(m)
print(f"best seen     {association_objective(assoc, m):.6f}  loads {assoc.k}")
print(f"after polish  {association_objective(polished, m):.6f}  loads {polished.k}  ({tr2.polish_moves} moves)")
print(f"enumeration   {association_objective(exact, m):.6f}  loads {exact.k}")

# relaxation is not always integral: one user, two identical BSs
m1 = np.zeros((1, 2))
print("\none user, two equal BSs: integral optimum 0, split optimum ln 2 =", np.log(2))
print("solver returns", solve_association(m1)[0].serving, "objective",
      association_objective(solve_association(m1)[0], m1))
