"""
How close does the alternating scheme get to the global optimum?

For small instances (4 users, 3 BSs) every association and every point of
a 12-level-per-BS power grid can be enumerated.  The ratio of the
efficiency reached by IUAPC to the grid optimum is printed per instance;
values slightly above 1 mean the continuous solver beat the grid.

    python demos/near_optimality.py [instances]
"""

import sys

import numpy as np

from uee_hetnet import ExperimentConfig
from uee_hetnet.experiment import oracle_instance

n = int(sys.argv[1]) if len(sys.argv) > 1 else 10
cfg = ExperimentConfig(n_users=4, n_small=2, oracle_levels=12)
ratios = []
for i in range(n):
    seed, eta, eta_grid = oracle_instance(cfg, i)
    ratios.append(eta / eta_grid)
    print(f"instance {i:3d}  seed {seed:10d}  iuapc {eta:9.4f}  grid {eta_grid:9.4f}  ratio {eta / eta_grid:.4f}")
print(f"median ratio {np.median(ratios):.4f}, min {np.min(ratios):.4f}")
