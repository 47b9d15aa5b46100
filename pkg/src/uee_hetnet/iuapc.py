"""
Iterative user association and power control (IUAPC).

Outer loop: Dinkelbach iteration on the efficiency parameter ``eta``.
Inner loop: alternate the exact association for fixed power and the
power control for fixed association until the subtractive objective
``sum ln c - eta * sum p`` stops improving.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .association import AssocOptions, Association, solve_association, utility_weights
from .netmodel import sinr_matrix
from .powerctl import PowerOptions, power_objective, solve_power


@dataclass
class IUAPCOptions:
    varsigma: float = None  # default 1e-3 * N_u
    max_outer: int = 20
    inner_tol: float = 1e-4
    max_inner: int = 20
    assoc: AssocOptions = field(default_factory=AssocOptions)
    power: PowerOptions = field(default_factory=PowerOptions)


@dataclass
class OuterStep:
    eta: float
    varsigma_star: float
    inner_iterations: int
    total_power_w: float
    sum_utility: float


@dataclass
class Solution:
    assoc: Association
    power: np.ndarray
    eta_star: float
    outer_trace: list
    converged: bool
    inner_traces: list = field(default_factory=list)

    @property
    def eta_sequence(self):
        return [s.eta for s in self.outer_trace]

    def trace_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# association prices reset every solve; power warm-started from the previous iterate\n")
            w = csv.writer(fh)
            w.writerow(["outer_iteration", "eta", "varsigma_star", "inner_iterations", "total_power_watts",
                        "sum_utility"])
            for t, s in enumerate(self.outer_trace):
                w.writerow([t, f"{s.eta:.12g}", f"{s.varsigma_star:.12g}", s.inner_iterations,
                            f"{s.total_power_w:.12g}", f"{s.sum_utility:.12g}"])


def sum_utility(scenario, assoc, p):
    """``sum_i ln c_i`` over served users (rates in nats/s)."""
    serving = assoc.serving
    s = sinr_matrix(scenario, p)[np.arange(scenario.n_users), serving]
    if np.any(~(s > 0)):
        raise ValueError("zero SINR on a serving link")
    return float(np.sum(np.log(scenario.bandwidth_hz / assoc.k[serving] * np.log1p(s))))


def uee(scenario, assoc, p):
    """Utility-energy efficiency: sum log-rate per Watt consumed."""
    return sum_utility(scenario, assoc, p) / (float(np.sum(p)) + scenario.circuit_power)


def subtractive_value(scenario, assoc, p, eta):
    return sum_utility(scenario, assoc, p) - eta * (float(np.sum(p)) + scenario.circuit_power)


def inner_alternation(scenario, eta, p0, opts=None, assoc0=None, fixed_assoc=None):
    """Alternate association and power control at fixed ``eta``.

    ``assoc0`` (the previous association) is kept if the fresh one is not
    better; ``fixed_assoc`` skips the association step entirely.
    Returns ``(assoc, p, iterations, records)`` where ``records`` holds
    the objective after every half-step.
    """
    opts = opts or IUAPCOptions()
    p = np.asarray(p0, dtype=float)
    assoc = fixed_assoc if fixed_assoc is not None else assoc0
    records = []
    prev = power_objective(scenario, assoc, p, eta) if assoc is not None else -np.inf
    iterations = 0
    for iterations in range(1, opts.max_inner + 1):
        if fixed_assoc is None:
            cand, _, _ = solve_association(utility_weights(scenario, p), opts.assoc)
            if assoc is None or power_objective(scenario, cand, p, eta) > power_objective(scenario, assoc, p, eta):
                assoc = cand
            records.append(power_objective(scenario, assoc, p, eta))
        p, _ = solve_power(scenario, assoc, eta, opts.power, p0=p)
        obj = power_objective(scenario, assoc, p, eta)
        records.append(obj)
        if fixed_assoc is not None or scenario.n_bs == 1:
            break
        if np.isfinite(prev) and obj - prev <= opts.inner_tol * max(1.0, abs(prev)):
            break
        prev = obj
    return assoc, p, iterations, records


def iuapc_solve(scenario, opts=None, fixed_assoc=None):
    """Maximise utility-energy efficiency by Dinkelbach's method.

    Starts from ``eta = 0`` and maximum power.  Each outer step runs the
    inner alternation, evaluates ``varsigma* = sum ln c - eta (sum p +
    P_c)`` and sets ``eta`` to the efficiency of the new point; stops once
    ``varsigma* <= varsigma``.  ``fixed_assoc`` freezes the association
    (power control only).
    """
    opts = opts or IUAPCOptions()
    varsigma = opts.varsigma if opts.varsigma is not None else 1e-3 * scenario.n_users
    eta = 0.0
    p = scenario.max_power.copy()
    assoc = None
    trace, inner_records = [], []
    converged = False
    for _ in range(opts.max_outer):
        assoc, p, n_inner, records = inner_alternation(scenario, eta, p, opts, assoc0=assoc,
                                                       fixed_assoc=fixed_assoc)
        inner_records.append(records)
        util = sum_utility(scenario, assoc, p)
        vs = util - eta * (float(np.sum(p)) + scenario.circuit_power)
        trace.append(OuterStep(eta, vs, n_inner, float(np.sum(p)), util))
        eta = util / (float(np.sum(p)) + scenario.circuit_power)
        if vs <= varsigma:
            converged = True
            break
    return Solution(assoc, p.copy(), uee(scenario, assoc, p), trace, converged, inner_records)
