"""
Joint user association and power control for two-tier cellular networks,
maximising utility-energy efficiency (sum log-rate per consumed Watt).
"""

from .association import Association, AssocOptions, solve_association, utility_weights
from .baselines import (
    PowerGrid, brute_force_association, brute_force_uee, grid_search_power, max_power,
    max_sinr_association,
)
from .iuapc import IUAPCOptions, Solution, iuapc_solve, sum_utility, uee
from .netmodel import (
    ConfigError, ExperimentConfig, Scenario, generate_scenario, make_scenario, pathloss_db,
    power_from_density, rate, sinr_matrix, user_rates,
)
from .powerctl import PowerOptions, f_eval, f_inverse, power_objective, solve_power

__version__ = "0.1.0"

__all__ = [
    "Association", "AssocOptions", "solve_association", "utility_weights",
    "PowerGrid", "brute_force_association", "brute_force_uee", "grid_search_power", "max_power",
    "max_sinr_association",
    "IUAPCOptions", "Solution", "iuapc_solve", "sum_utility", "uee",
    "ConfigError", "ExperimentConfig", "Scenario", "generate_scenario", "make_scenario", "pathloss_db",
    "power_from_density", "rate", "sinr_matrix", "user_rates",
    "PowerOptions", "f_eval", "f_inverse", "power_objective", "solve_power",
]
