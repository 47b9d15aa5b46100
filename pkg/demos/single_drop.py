"""
One drop of the default two-tier layout, three ways.

Draws a scenario (1 macro, 3 small cells, 30 users), then compares
max-SINR association at full power, max-SINR association with power
control, and the joint association + power control.  Prints the
efficiency, the macro share of users and the transmit powers.

    python demos/single_drop.py [seed]
"""

import sys

import numpy as np

from uee_hetnet import ExperimentConfig, generate_scenario, iuapc_solve, max_sinr_association, uee
from uee_hetnet.netmodel import user_rates

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
sc = generate_scenario(ExperimentConfig(), seed)
print(f"scenario {sc.checksum()}: {sc.n_users} users, {sc.n_bs} BSs, noise {sc.noise_power:.3e} W")

ms = max_sinr_association(sc)
sol_pc = iuapc_solve(sc, fixed_assoc=ms)
sol = iuapc_solve(sc)
runs = {
    "max-SINR, max power": (ms, sc.max_power),
    "max-SINR, power control": (sol_pc.assoc, sol_pc.power),
    "joint (IUAPC)": (sol.assoc, sol.power),
}

print(f"{'':26s} {'UEE':>9s} {'MBS share':>9s} {'min rate':>10s}  powers [W]")
for name, (assoc, p) in runs.items():
    share = assoc.k[0] / sc.n_users
    r = user_rates(sc, assoc.x, p)
    print(f"{name:26s} {uee(sc, assoc, p):9.3f} {share:9.2f} {r.min():10.3e}  {np.array2string(p, precision=4)}")

print("\nloads (MBS, SBS...):", ms.k, "->", sol.assoc.k)
print("eta per outer step:", np.round(sol.eta_sequence, 3))
