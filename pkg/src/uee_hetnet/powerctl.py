"""
Per-BS power control for a fixed association.

With ``p_j = exp(rho_j)`` and per-user SINR targets ``lambda_i =
exp(theta_i)`` the problem

    max  sum_i ln ln(1 + exp(theta_i)) - eta * sum_j exp(rho_j)
    s.t. rho_j <= ln Pmax_j
         exp(omega_i) + sum_{q != j(i)} exp(s_iq) <= 1
         omega_i = theta_i - rho_j(i) + beta_i
         s_iq    = theta_i - rho_j(i) + rho_q + gamma_iq

is convex.  It is solved with a dual (price) method: each primal block
has a closed-form maximiser of the Lagrangian given the multipliers
``a, b, zeta, chi``; the multipliers then take a projected gradient step
on the constraint residuals.

Arrays indexed by ``(i, q)`` are ``N_u x N_B`` with the serving column
masked out.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .netmodel import sinr_matrix

A_FLOOR = 1e-12
NEG_CAP = -1e-12
POWER_FLOOR_REL = 1e-9   # p_j >= 1e-9 Pmax_j inside the power solver
THETA_BOX = 40.0         # |ln SINR target| <= 40
ETA_ZERO = 1e-9


def f_eval(x):
    """``e^x / ((1 + e^x) ln(1 + e^x))``, strictly decreasing from 1 to 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        out = expit(x) / np.logaddexp(0.0, x)
        # (1 + e)(ln(1 + e)) / e -> 1 + e/2 as e = exp(x) -> 0
        out = np.where(x < -30.0, 1.0 - 0.5 * np.exp(x), out)
    return float(out) if out.ndim == 0 else out


def f_prime(x):
    """Derivative of :func:`f_eval`: ``f (1 - sigmoid(x) - f)``."""
    fx = f_eval(x)
    return fx * (1.0 - expit(x) - fx)


def f_inverse(y, tol=1e-10, x0=None):
    """Inverse of :func:`f_eval` on (0, 1).

    Bracketing: start at ``x0 +- 1`` (``x0 = 0`` by default) and double
    the half-width on each side until the root is enclosed.  Inside the
    bracket Newton steps are taken and replaced by a bisection step
    whenever they would leave it; iteration stops when ``|f(x) - y| <=
    tol`` or the bracket collapses.  ``x0`` is an optional
    starting guess.
    """
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    if np.any(~(y > 0.0)) or np.any(~(y < 1.0)):
        raise ValueError("f_inverse is defined on (0, 1) only")
    if x0 is not None:
        x = _newton_from(y, np.broadcast_to(np.asarray(x0, dtype=float), y.shape), tol)
        if x is not None:
            return float(x[0]) if scalar else x
    c = np.zeros(y.shape) if x0 is None else np.broadcast_to(np.asarray(x0, dtype=float), y.shape).copy()
    c[~np.isfinite(c)] = 0.0
    lo, hi = c - 1.0, c + 1.0
    # f decreasing: need f(lo) >= y >= f(hi)
    width = np.ones(y.shape)
    while True:
        need = f_eval(lo) < y
        if not need.any():
            break
        width[need] *= 2.0
        lo[need] = c[need] - width[need]
    width[:] = 1.0
    while True:
        need = f_eval(hi) > y
        if not need.any():
            break
        width[need] *= 2.0
        hi[need] = c[need] + width[need]
    x = c
    for _ in range(200):
        fx = f_eval(x)
        err = fx - y
        if np.all(np.abs(err) <= tol):
            break
        # f(x) > y means the root lies to the right of x
        lo = np.where(err > 0, x, lo)
        hi = np.where(err > 0, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - err / (fx * (1.0 - expit(x) - fx))
        inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
        x_new = np.where(inside, newton, 0.5 * (lo + hi))
        if np.all(x_new == x):
            break
        x = x_new
    return float(x[0]) if scalar else x


def _newton_from(y, x, tol, max_step=2.0, iters=30):
    """Damped Newton for f(x) = y from a nearby guess; None if it stalls."""
    if not np.all(np.abs(x) < 600):
        return None
    x = np.array(x, dtype=float)
    step = np.zeros_like(x)
    for _ in range(iters):
        sig = expit(x)
        fx = sig / np.logaddexp(0.0, x)
        err = fx - y
        if np.max(np.abs(err)) <= tol:
            return x
        deriv = fx * (1.0 - sig - fx)
        step[:] = 0.0
        np.divide(err, deriv, out=step, where=deriv < 0.0)
        x -= np.minimum(np.maximum(step, -max_step), max_step)
        if not np.all(np.abs(x) < 600):
            return None
    return None


@dataclass
class PowerConstants:
    beta: np.ndarray        # (N_u,)
    gamma: np.ndarray       # (N_u, N_B), serving column 0
    eta: float
    serving: np.ndarray     # (N_u,)
    log_pmax: np.ndarray    # (N_B,)

    other: np.ndarray = None   # (N_u, N_B) interfering links to loaded BSs
    active: np.ndarray = None  # (N_B,) BSs serving at least one user

    def __post_init__(self):
        n_b = self.log_pmax.size
        if self.active is None:
            self.active = np.bincount(self.serving, minlength=n_b) > 0
        if self.other is None:
            # an unloaded BS is driven to the power floor; its interference is dropped
            self.other = np.broadcast_to(self.active, self.gamma.shape).copy()
            self.other[np.arange(self.serving.size), self.serving] = False
        self.other_f = self.other.astype(float)
        self.log_floor = self.log_pmax + np.log(POWER_FLOOR_REL)
        self.log_eta = np.log(self.eta) if self.eta > 0 else -np.inf

    @classmethod
    def build(cls, scenario, assoc, eta):
        serving = assoc.serving
        h = scenario.channel.gains
        h_serv = h[np.arange(scenario.n_users), serving]
        gamma = np.log(h / h_serv[:, None])
        gamma[np.arange(scenario.n_users), serving] = 0.0
        return cls(np.log(scenario.noise_power / h_serv), gamma, float(eta), serving, np.log(scenario.max_power))


@dataclass
class PowerPrimal:
    rho: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    s: np.ndarray


@dataclass
class PowerDual:
    """Multipliers; ``chi`` is zero off the interference mask."""

    a: np.ndarray
    b: np.ndarray
    zeta: np.ndarray
    chi: np.ndarray


class Residuals(NamedTuple):
    omega: np.ndarray   # omega - (theta - rho_j + beta)
    s: np.ndarray       # s - (theta - rho_j + rho_q + gamma), zero off the mask
    g: np.ndarray       # e^omega + sum_q e^s - 1
    e_omega: np.ndarray
    e_s: np.ndarray


@dataclass
class PowerOptions:
    tol: float = 1e-4
    max_iter: int = 5000
    step0: float = 0.1
    init: str = "constant"  # or "kkt"
    dual_step: str = "multiplicative"  # or "additive"
    step_rule: str = "adaptive"  # or "diminishing": step0 / sqrt(t)
    step_growth: float = 1.5


@dataclass
class PowerTrace:
    objective: list = field(default_factory=list)
    eq_residual: list = field(default_factory=list)
    ineq_violation: list = field(default_factory=list)
    clamps: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False
    bypassed: bool = False
    used_warm_start: bool = False
    iterations: int = 0

    @property
    def final_residual(self):
        if not self.eq_residual:
            return 0.0
        return max(self.eq_residual[-1], self.ineq_violation[-1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "max_equality_residual", "max_inequality_violation", "clamp_count"])
            for t, row in enumerate(zip(self.objective, self.eq_residual, self.ineq_violation, self.clamps)):
                w.writerow([t, f"{row[0]:.12g}", f"{row[1]:.12g}", f"{row[2]:.12g}", row[3]])


def _chi_flows(chi, consts):
    """Per BS: sum of chi over its own users, and over links pointing at it from other cells."""
    n_b = consts.log_pmax.size
    return np.bincount(consts.serving, weights=chi.sum(axis=1), minlength=n_b), chi.sum(axis=0)


_F_LO, _F_HI = f_eval(THETA_BOX), f_eval(-THETA_BOX)


def primal_update(dual, consts, counts=None, theta0=None):
    """Closed-form Lagrangian maximisers for given multipliers.

    ``counts`` (a dict) receives the number of clamp events, if given;
    ``theta0`` seeds the inverse of ``f``.
    """
    chi_row = dual.chi.sum(axis=1)
    # -b - sum_own zeta - (chi out of own users - chi into this BS)
    arg = dual.chi.sum(axis=0) - dual.b - np.bincount(consts.serving, weights=chi_row + dual.zeta,
                                                      minlength=consts.log_pmax.size)
    rho = np.log(np.maximum(arg, 1e-300)) - consts.log_eta
    rho = np.where(consts.active, np.minimum(np.maximum(rho, consts.log_floor), consts.log_pmax), consts.log_floor)

    # f < 1 everywhere: a target >= 1 pushes theta to the lower box edge,
    # a target <= 0 to the upper one
    target = -dual.zeta - chi_row
    inside = (target > _F_LO) & (target < _F_HI)
    if inside.all():
        theta = f_inverse(target, x0=theta0)
    else:
        theta = np.where(target >= _F_HI, -THETA_BOX, THETA_BOX)
        if inside.any():
            theta[inside] = f_inverse(target[inside], x0=None if theta0 is None else theta0[inside])

    omega = np.log(-dual.zeta / dual.a)
    s = np.log((1.0 - consts.other_f - dual.chi) / dual.a[:, None]) * consts.other_f
    if counts is not None:
        counts["clamps"] = int(np.sum((rho <= consts.log_floor) & consts.active) + np.sum(~inside))
    return PowerPrimal(rho, theta, omega, s)


def residuals(primal, consts):
    """Equality residuals of the omega and s definitions, the SINR-constraint
    slack, and ``e^omega``, ``e^s`` (masked)."""
    rho_j = primal.rho[consts.serving]
    r_omega = primal.omega - primal.theta + rho_j - consts.beta
    r_s = (primal.s - (primal.theta - rho_j)[:, None] - primal.rho - consts.gamma) * consts.other_f
    e_omega = np.exp(primal.omega)
    e_s = np.exp(primal.s) * consts.other_f
    return Residuals(r_omega, r_s, e_omega + e_s.sum(axis=1) - 1.0, e_omega, e_s)


def consistency_residuals(primal, consts, res=None):
    """Worst transform-consistency error in linear scale,
    ``max |e^omega - e^(theta - rho_j + beta)|`` and the same for ``s``,
    plus the worst ``|e^omega + sum e^s - 1|``."""
    res = residuals(primal, consts) if res is None else res
    # |e^w - e^(w - r)| = e^w |1 - e^-r|
    e1 = np.max(res.e_omega * np.abs(np.expm1(-res.omega)))
    e2 = np.max(res.e_s * np.abs(np.expm1(-res.s)))
    return float(max(e1, e2)), float(np.max(np.abs(res.g)))


def dual_update(primal, dual, consts, step, mode="additive", res=None):
    """Gradient step on the multipliers.

    ``additive`` is the plain projected step.  ``multiplicative`` takes the
    same direction scaled by each multiplier's magnitude, i.e.
    ``|zeta| <- |zeta| exp(-step r)``, ``a <- a exp(step g)``; signs are
    preserved and the induced change of ``omega``/``s`` is ``step`` times
    the residual in log units.  ``res`` passes precomputed residuals.
    """
    res = residuals(primal, consts) if res is None else res
    b = np.maximum(dual.b + step * (primal.rho - consts.log_pmax), 0.0)
    if mode == "additive":
        a = dual.a + step * res.g
        zeta = dual.zeta + step * res.omega
        chi = dual.chi + step * res.s
    elif mode == "multiplicative":
        a = dual.a * np.exp(np.minimum(np.maximum(step * res.g, -50.0), 50.0))
        zeta = dual.zeta * np.exp(np.minimum(np.maximum(-step * res.omega, -50.0), 50.0))
        chi = dual.chi * np.exp(np.minimum(np.maximum(-step * res.s, -50.0), 50.0))
    else:
        raise ValueError(f"unknown dual step mode {mode!r}")
    return PowerDual(np.maximum(a, A_FLOOR), b, np.minimum(zeta, NEG_CAP),
                     np.minimum(chi, NEG_CAP) * consts.other_f)


def lagrangian(primal, dual, consts, res=None):
    """Lagrangian of the log-domain problem; at the closed-form maximiser
    this is the dual function value."""
    res = residuals(primal, consts) if res is None else res
    return float(np.sum(np.log(np.logaddexp(0.0, primal.theta)))
                 - consts.eta * np.sum(np.exp(primal.rho))
                 - dual.a @ res.g
                 - dual.b @ (primal.rho - consts.log_pmax)
                 - dual.zeta @ res.omega
                 - np.sum(dual.chi * res.s))


def power_objective(scenario, assoc, p, eta):
    """``sum_i ln c_i - eta * sum_j p_j`` for the users' serving links."""
    serving = assoc.serving
    s = sinr_matrix(scenario, p)[np.arange(scenario.n_users), serving]
    if np.any(~(s > 0)):
        raise ValueError("zero SINR on a serving link")
    k = assoc.k[serving]
    return float(np.sum(np.log(scenario.bandwidth_hz / k * np.log1p(s))) - eta * np.sum(p))


def _objective_fn(scenario, assoc, eta):
    """:func:`power_objective` with the per-call setup hoisted out."""
    h, serving = scenario.channel.gains, assoc.serving
    h_serv = h[np.arange(scenario.n_users), serving]
    const = float(np.sum(np.log(scenario.bandwidth_hz / assoc.k[serving])))
    noise = scenario.noise_power

    def objective(p):
        sig = h_serv * p[serving]
        s = sig / (h @ p - sig + noise)
        return const + float(np.sum(np.log(np.log1p(s)))) - eta * float(np.sum(p))

    return objective


def _primal_from_power(p, consts, scenario):
    lam = sinr_matrix(scenario, p)[np.arange(scenario.n_users), consts.serving]
    rho = np.log(p)
    theta = np.log(lam)
    rho_j = rho[consts.serving]
    omega = theta - rho_j + consts.beta
    s = np.where(consts.other, theta[:, None] - rho_j[:, None] + rho[None, :] + consts.gamma, 0.0)
    return PowerPrimal(rho, theta, omega, s)


def initial_dual(primal, consts, mode="kkt"):
    """Starting multipliers.

    ``constant``: ``a = 1, b = 0, zeta = -1, chi = -0.1``.
    ``kkt``: multipliers that make the theta/omega/s stationarity
    conditions hold exactly at the warm-start point: ``a_i = f(theta_i)``,
    ``zeta_i = -a_i e^{omega_i}``, ``chi_iq = -a_i e^{s_iq}``, and ``b``
    from rho-stationarity, clipped at zero.
    """
    n_u, n_b = consts.gamma.shape
    other = consts.other
    if mode == "constant":
        return PowerDual(np.ones(n_u), np.zeros(n_b), -np.ones(n_u), np.where(other, -0.1, 0.0))
    if mode != "kkt":
        raise ValueError(f"unknown init mode {mode!r}")
    a = np.maximum(f_eval(primal.theta), A_FLOOR)
    zeta = np.minimum(-a * np.exp(primal.omega), NEG_CAP)
    chi = np.where(other, np.minimum(-a[:, None] * np.exp(primal.s), NEG_CAP), 0.0)
    out, into = _chi_flows(chi, consts)
    zeta_sum = np.bincount(consts.serving, weights=zeta, minlength=n_b)
    b = np.maximum(-zeta_sum - (out - into) - consts.eta * np.exp(primal.rho), 0.0)
    return PowerDual(a, b, zeta, chi)


def solve_power(scenario, assoc, eta, opts=None, p0=None):
    """Dual method for the fixed-association power problem.

    Returns ``(p, trace)``.  ``p0`` is the warm start (default: max power);
    the best iterate by true objective is returned, never worse than ``p0``.
    For ``eta`` ~ 0 the objective has no power penalty and max power is
    returned directly.
    """
    opts = opts or PowerOptions()
    pmax = scenario.max_power
    trace = PowerTrace()
    if eta <= ETA_ZERO:
        trace.bypassed = trace.converged = True
        return pmax.copy(), trace

    p0 = pmax.copy() if p0 is None else np.clip(np.asarray(p0, dtype=float), 1e-300, pmax)
    consts = PowerConstants.build(scenario, assoc, eta)
    # idle BSs only add interference; start them where the iteration pins them
    p0 = np.where(consts.active, p0, pmax * POWER_FLOOR_REL)
    primal = _primal_from_power(p0, consts, scenario)
    dual = initial_dual(primal, consts, opts.init)

    objective = _objective_fn(scenario, assoc, eta)
    best_p = p0
    best_obj = objective(p0)
    trace.used_warm_start = True
    counts = {}
    primal = primal_update(dual, consts, counts, theta0=primal.theta)
    clamps = counts["clamps"]
    res = residuals(primal, consts)
    dval = lagrangian(primal, dual, consts, res)
    step = opts.step0
    for t in range(1, opts.max_iter + 1):
        eq, ineq = consistency_residuals(primal, consts, res)
        p = np.exp(primal.rho)
        obj = objective(p)
        trace.objective.append(obj)
        trace.eq_residual.append(eq)
        trace.ineq_violation.append(ineq)
        trace.clamps.append(clamps)
        if obj > best_obj:
            best_obj, best_p = obj, p
            trace.used_warm_start = False
        if max(eq, ineq) <= opts.tol:
            trace.converged = True
            break

        if opts.step_rule == "diminishing":
            dual = dual_update(primal, dual, consts, opts.step0 / np.sqrt(t), opts.dual_step, res)
            primal = primal_update(dual, consts, counts, theta0=primal.theta)
            res = residuals(primal, consts)
            clamps = counts["clamps"]
            continue
        # adaptive: accept only steps that do not raise the dual value
        while True:
            cand = dual_update(primal, dual, consts, step, opts.dual_step, res)
            cand_primal = primal_update(cand, consts, counts, theta0=primal.theta)
            cand_res = residuals(cand_primal, consts)
            cand_val = lagrangian(cand_primal, cand, consts, cand_res)
            if cand_val <= dval or step < 1e-12:
                break
            step *= 0.5
        dual, primal, res, dval, clamps = cand, cand_primal, cand_res, cand_val, counts["clamps"]
        trace.steps.append(step)
        step *= opts.step_growth
    trace.iterations = t
    return best_p.copy(), trace
