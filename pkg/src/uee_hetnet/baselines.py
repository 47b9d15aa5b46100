"""
Reference policies (max-SINR association, max power) and exhaustive
oracles for the association and joint problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .association import Association, _xlogx, association_objective
from .netmodel import sinr_matrix

MAX_ASSIGNMENTS = 10**7
MAX_JOINT = 10**8
_CHUNK = 1 << 16


class OracleSizeError(ValueError):
    """Instance too large for exhaustive search."""


@dataclass
class PowerGrid:
    """Per-BS power levels, log-spaced over ``[Pmax / 10**decades, Pmax]``."""

    grid: list

    @property
    def levels_per_bs(self):
        return [len(g) for g in self.grid]

    @classmethod
    def logspaced(cls, max_power, levels, decades=3.0):
        if levels < 2:
            raise ValueError("need at least two power levels")
        out = []
        for pm in np.asarray(max_power, dtype=float):
            g = np.geomspace(pm * 10.0 ** (-decades), pm, levels)
            g[-1] = pm
            out.append(g)
        return cls(out)

    def points(self):
        """All grid points, shape (prod(levels), N_B), lexicographic order."""
        mesh = np.meshgrid(*self.grid, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def max_power(scenario):
    return scenario.max_power.copy()


def max_sinr_association(scenario, p=None):
    """Every user joins the BS with the highest SINR computed from
    large-scale gains only (default powers: maximum)."""
    p = scenario.max_power if p is None else np.asarray(p, dtype=float)
    s = sinr_matrix(scenario, p, gains=scenario.channel.largescale_gains)
    return Association.from_serving(np.argmax(s, axis=1), scenario.n_bs)


def _assignments(n_users, n_bs, start, stop):
    """Assignments ``start .. stop-1`` in lexicographic (user 0 most significant) order."""
    idx = np.arange(start, stop)
    out = np.empty((idx.size, n_users), dtype=np.int64)
    for i in range(n_users - 1, -1, -1):
        out[:, i] = idx % n_bs
        idx = idx // n_bs
    return out


def _best_assignment(m):
    """Maximiser of the association objective over all N_B^N_u assignments.

    ``m`` may carry leading batch dimensions: shape (..., N_u, N_B).
    Returns (objective, serving) with the same batch shape.
    """
    *batch, n_u, n_b = m.shape
    total = n_b**n_u
    best_val = np.full(batch, -np.inf)
    best_idx = np.zeros(batch, dtype=np.int64)
    load_cost = _xlogx(np.arange(n_u + 1))
    for start in range(0, total, _CHUNK):
        A = _assignments(n_u, n_b, start, min(start + _CHUNK, total))
        util = m[..., np.arange(n_u), A].sum(axis=-1)  # (..., chunk)
        k = np.stack([(A == j).sum(axis=1) for j in range(n_b)], axis=1)
        val = util - load_cost[k].sum(axis=1)
        arg = np.argmax(val, axis=-1)
        v = np.take_along_axis(val, arg[..., None], axis=-1)[..., 0]
        better = v > best_val
        best_val = np.where(better, v, best_val)
        best_idx = np.where(better, start + arg, best_idx)
    serving = np.stack([_assignments(n_u, n_b, int(i), int(i) + 1)[0] for i in np.ravel(best_idx)])
    return best_val, serving.reshape(*batch, n_u)


def brute_force_association(m):
    """Exact optimum of the association problem by enumeration."""
    m = np.asarray(m, dtype=float)
    n_u, n_b = m.shape
    if n_b**n_u > MAX_ASSIGNMENTS:
        raise OracleSizeError(f"{n_b}^{n_u} assignments exceed {MAX_ASSIGNMENTS}")
    _, serving = _best_assignment(m)
    return Association.from_serving(serving, n_b)


def brute_force_uee(scenario, grid):
    """Global UEE maximiser over a power grid.

    For each grid point the best association is the one maximising the
    sum log-rate (the denominator does not depend on it).  Returns
    ``(assoc, p, eta)``; ties go to the first grid point in lexicographic
    order.
    """
    n_u, n_b = scenario.n_users, scenario.n_bs
    pts = grid.points()
    if n_b**n_u * len(pts) > MAX_JOINT:
        raise OracleSizeError(f"{n_b}^{n_u} x {len(pts)} evaluations exceed {MAX_JOINT}")
    best = (-np.inf, None, None)
    per_block = max(1, _CHUNK // max(1, n_b**n_u) * 8)
    for start in range(0, len(pts), per_block):
        P = pts[start:start + per_block]
        h = scenario.channel.gains[None, :, :]
        rx = h * P[:, None, :]
        sinr = rx / (rx.sum(axis=2, keepdims=True) - rx + scenario.noise_power)
        m = np.log(scenario.bandwidth_hz * np.log1p(sinr))
        util, serving = _best_assignment(m)
        eta = util / (P.sum(axis=1) + scenario.circuit_power)
        g = int(np.argmax(eta))
        if eta[g] > best[0]:
            best = (float(eta[g]), Association.from_serving(serving[g], n_b), P[g].copy())
    eta, assoc, p = best
    return assoc, p, eta


def grid_search_power(scenario, assoc, eta, levels=300, decades=6.0):
    """Best point of ``sum ln c - eta * sum p`` on a log-spaced power grid
    (fixed association).  Returns ``(p, objective)``."""
    grid = PowerGrid.logspaced(scenario.max_power, levels, decades)
    pts = grid.points()
    serving = assoc.serving
    k = assoc.k[serving]
    rows = np.arange(scenario.n_users)
    best_val, best_p = -np.inf, None
    for start in range(0, len(pts), 4096):
        P = pts[start:start + 4096]
        rx = scenario.channel.gains[None, :, :] * P[:, None, :]
        sig = rx[:, rows, serving]
        s = sig / (rx.sum(axis=2) - sig + scenario.noise_power)
        val = np.log(scenario.bandwidth_hz / k * np.log1p(s)).sum(axis=1) - eta * P.sum(axis=1)
        g = int(np.argmax(val))
        if val[g] > best_val:
            best_val, best_p = float(val[g]), P[g].copy()
    return best_p, best_val


__all__ = [
    "PowerGrid", "OracleSizeError", "max_power", "max_sinr_association", "brute_force_association",
    "brute_force_uee", "grid_search_power", "association_objective",
]
