"""
User association for fixed transmit powers.

Maximises ``sum_ij x_ij m_ij - sum_j k_j ln k_j`` over single-BS
assignments, with ``m_ij = ln(W ln(1 + SINR_ij))``.  The solver runs the
price (dual) iteration: users pick ``argmax_j (m_ij - mu_j)``, each BS
moves its price by the gap between the load it "supplies",
``exp(mu_j - nu - 1)``, and the load it receives.

The relaxed problem is not always integral (one user and two identical
BSs is the smallest counterexample: splitting the user gains ``ln 2``),
so the price iteration can cycle between assignments.  The best assignment
seen is therefore finished off by cancelling improving move cycles in the
BS residual graph, which is exact because the load cost ``k ln k`` is
convex.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .netmodel import sinr_matrix


class WeightError(ValueError):
    """Utility weight undefined (zero SINR on some link)."""


@dataclass
class Association:
    x: np.ndarray
    k: np.ndarray

    @classmethod
    def from_serving(cls, serving, n_bs):
        serving = np.asarray(serving, dtype=int)
        x = np.zeros((serving.size, n_bs), dtype=int)
        x[np.arange(serving.size), serving] = 1
        return cls(x, x.sum(axis=0))

    @property
    def serving(self):
        return np.argmax(self.x, axis=1)

    def check(self):
        assert set(np.unique(self.x)) <= {0, 1}
        assert np.all(self.x.sum(axis=1) == 1)
        assert np.array_equal(self.k, self.x.sum(axis=0))


@dataclass
class AssocDualState:
    mu: np.ndarray
    nu: float
    iteration: int = 0


@dataclass
class AssocOptions:
    tol: float = 1e-3
    max_iter: int = 2000
    step0: float = 1.0
    nu_mode: str = "derived"  # or "literal"
    polish: bool = True
    patience: int = 200  # stop after this many iterations without a better assignment; 0 disables


@dataclass
class AssocTrace:
    mu: list = field(default_factory=list)
    k: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    mismatch: list = field(default_factory=list)
    converged: bool = False
    polish_moves: int = 0

    def to_csv(self, path):
        n_b = len(self.mu[0]) if self.mu else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + [f"price_{j}" for j in range(n_b)] + [f"load_{j}" for j in range(n_b)]
                       + ["objective", "mismatch_norm"])
            for t, (mu, k, obj, mis) in enumerate(zip(self.mu, self.k, self.objective, self.mismatch)):
                w.writerow([t] + [f"{v:.12g}" for v in mu] + [int(v) for v in k] + [f"{obj:.12g}", f"{mis:.12g}"])


def utility_weights(scenario, p):
    """``m_ij = ln(W ln(1 + SINR_ij))`` for every user/BS pair."""
    s = sinr_matrix(scenario, p)
    bad = np.argwhere(~(s > 0))
    if bad.size:
        i, j = bad[0]
        raise WeightError(f"SINR of user {i} towards BS {j} is zero; utility weight undefined")
    return np.log(scenario.bandwidth_hz * np.log1p(s))


def assign_users(m, mu):
    """Each user takes the BS maximising ``m_ij - mu_j`` (lowest index on ties)."""
    serving = np.argmax(np.asarray(m) - np.asarray(mu)[None, :], axis=1)
    return Association.from_serving(serving, m.shape[1])


def update_nu(mu, n_users, mode="derived"):
    """Scalar multiplier of the total-load constraint.

    ``derived``: ``ln sum_j exp(mu_j - 1) - ln N_u``, which makes the
    supplied loads ``exp(mu_j - nu - 1)`` sum to exactly ``N_u``.
    ``literal``: ``ln(sum_j exp(mu_j - 1)) / N_u``.
    """
    lse = np.logaddexp.reduce(np.asarray(mu, dtype=float) - 1.0)
    if mode == "derived":
        return float(lse - np.log(n_users))
    if mode == "literal":
        return float(lse / n_users)
    raise ValueError(f"unknown nu mode {mode!r}")


def supply(state):
    return np.exp(state.mu - state.nu - 1.0)


def update_mu(state, assoc, step, nu_mode="derived"):
    mu = state.mu - step * (supply(state) - assoc.k)
    return AssocDualState(mu, update_nu(mu, assoc.x.shape[0], nu_mode), state.iteration + 1)


def _xlogx(k):
    k = np.asarray(k, dtype=float)
    return np.where(k > 0, k * np.log(np.where(k > 0, k, 1.0)), 0.0)


def association_objective(assoc, m):
    return float(np.sum(assoc.x * m) - np.sum(_xlogx(assoc.k)))


def dual_value(m, state):
    """Lagrangian dual function at prices ``mu`` (and the given ``nu``).

    Maximising the Lagrangian over loads gives ``k_j = exp(mu_j - nu - 1)``
    with value ``exp(mu_j - nu - 1)``; over ``x`` each user takes its best
    price-adjusted weight.  Any price vector gives an upper bound on the
    relaxed and hence the integral optimum.
    """
    best = np.max(m - state.mu[None, :], axis=1).sum()
    return float(best + supply(state).sum() + state.nu * m.shape[0])


def _marginal(k):
    """Cost of the k-th user on a BS: ``k ln k - (k-1) ln(k-1)``."""
    return float(_xlogx(k) - _xlogx(k - 1))


def polish_association(assoc, m):
    """Cancel improving move cycles until none is left.

    Nodes are BSs plus a load reservoir ``S``.  Edge ``j -> q`` moves the
    best user from ``j`` to ``q``; ``S -> j`` removes one unit of load
    from ``j`` and ``j -> S`` adds one to ``j``.  A negative cycle is an
    improving reassignment; with none left the assignment is optimal.
    Returns the improved association and the number of cycles applied.
    """
    serving = assoc.serving.copy()
    n_u, n_b = m.shape
    moves = 0
    for _ in range(10 * n_u * n_b + 10):
        k = np.bincount(serving, minlength=n_b)
        g = nx.DiGraph()
        who = {}
        for j in range(n_b):
            g.add_edge(j, "S", weight=_marginal(k[j] + 1))
            if k[j] == 0:
                continue
            g.add_edge("S", j, weight=-_marginal(k[j]))
            members = np.flatnonzero(serving == j)
            for q in range(n_b):
                if q == j:
                    continue
                gain = m[members, q] - m[members, j]
                best = int(np.argmax(gain))
                g.add_edge(j, q, weight=-float(gain[best]))
                who[j, q] = int(members[best])
        # a zero-weight root reaching every node; searching from "S" itself
        # can miss cycles that networkx detects but fails to extract
        for node in list(g.nodes):
            g.add_edge("root", node, weight=0.0)
        try:
            cycle = nx.find_negative_cycle(g, "root")
        except nx.NetworkXError:
            break
        cost = sum(g[u][v]["weight"] for u, v in zip(cycle[:-1], cycle[1:]))
        if cost > -1e-12:
            break
        trial = serving.copy()
        for u, v in zip(cycle[:-1], cycle[1:]):
            if u != "S" and v != "S":
                trial[who[u, v]] = v
        old = association_objective(Association.from_serving(serving, n_b), m)
        if association_objective(Association.from_serving(trial, n_b), m) <= old + 1e-12:
            break
        serving = trial
        moves += 1
    return Association.from_serving(serving, n_b), moves


def solve_association(m, opts=None):
    """Price iteration for the fixed-power association problem.

    Stops when the supply/demand mismatch ``max_j |exp(mu_j - nu - 1) -
    k_j|`` drops to ``opts.tol``, or when the dual bound certifies the best
    assignment seen to within ``opts.tol``.  Returns ``(association,
    final_dual_state, trace)``; the association is the best integral one
    seen, polished unless ``opts.polish`` is off.
    """
    opts = opts or AssocOptions()
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise WeightError("utility weights must be finite")
    n_u, n_b = m.shape
    rows = np.arange(n_u)
    load_cost = _xlogx(np.arange(n_u + 1))
    mu = np.zeros(n_b)
    state = AssocDualState(mu, update_nu(mu, n_u, opts.nu_mode), 0)
    trace = AssocTrace()
    best, best_obj, best_t = None, -np.inf, 0

    for t in range(1, opts.max_iter + 1):
        adj = m - state.mu
        serving = np.argmax(adj, axis=1)
        k = np.bincount(serving, minlength=n_b)
        obj = float(m[rows, serving].sum() - load_cost[k].sum())
        sup = np.exp(state.mu - state.nu - 1.0)
        mismatch = float(np.max(np.abs(sup - k)))
        trace.mu.append(state.mu.copy())
        trace.k.append(k)
        trace.objective.append(obj)
        trace.mismatch.append(mismatch)
        if obj > best_obj:
            best, best_obj, best_t = serving, obj, t
        if opts.patience and t - best_t >= opts.patience:
            break
        if n_b == 1 or mismatch <= opts.tol:
            trace.converged = True
            break
        if opts.nu_mode == "derived":
            bound = float(adj[rows, serving].sum() + sup.sum() + state.nu * n_u)
            if bound - best_obj <= opts.tol:
                trace.converged = True
                break
        mu = state.mu - opts.step0 / np.sqrt(t) * (sup - k)
        state = AssocDualState(mu, update_nu(mu, n_u, opts.nu_mode), t)

    best = Association.from_serving(best, n_b)
    if opts.polish and n_b > 1:
        best, trace.polish_moves = polish_association(best, m)
    return best, state, trace
