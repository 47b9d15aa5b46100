import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from uee_hetnet.association import Association
from uee_hetnet.baselines import grid_search_power, max_sinr_association
from uee_hetnet.iuapc import uee
from uee_hetnet.netmodel import ExperimentConfig, generate_scenario, make_scenario, sinr_matrix
from uee_hetnet.powerctl import (
    PowerConstants, PowerDual, PowerOptions, PowerPrimal, consistency_residuals, dual_update, f_eval,
    f_inverse, initial_dual, power_objective, primal_update, residuals, solve_power,
)


# ---------------------------------------------------------------- f and its inverse

def test_f_reference_values():
    assert f_eval(0.0) == pytest.approx(1 / (2 * math.log(2)), rel=1e-14)
    assert 0.99999 < f_eval(-30.0) < 1.0
    assert f_eval(10.0) == pytest.approx(1 / (1 + math.exp(-10)) / math.log1p(math.exp(10)), rel=1e-14)
    assert f_eval(10.0) == pytest.approx(0.09995, rel=1e-3)


def test_f_stable_at_extremes():
    x = np.array([-700.0, -300.0, -40.0, 40.0, 300.0, 700.0])
    y = f_eval(x)
    assert np.all(np.isfinite(y)) and np.all(y > 0) and np.all(y <= 1.0)
    assert y[-1] == pytest.approx(1 / 700, rel=1e-12)


@given(x1=st.floats(-30, 30), x2=st.floats(-30, 30))
def test_f_strictly_decreasing(x1, x2):
    if x2 - x1 > 1e-6:
        assert f_eval(x1) > f_eval(x2)


def test_f_inverse_examples():
    assert f_inverse(1 / (2 * math.log(2))) == pytest.approx(0.0, abs=1e-8)
    for y in (0.05, 0.3, 0.7, 0.95):
        assert abs(f_eval(f_inverse(y)) - y) <= 1e-10
    assert f_inverse(0.09995) == pytest.approx(10.0, abs=1e-2)
    assert f_inverse(f_eval(10.0)) == pytest.approx(10.0, abs=1e-8)


@pytest.mark.parametrize("y", [0.0, 1.0, -0.5, 1.5, np.nan])
def test_f_inverse_domain(y):
    with pytest.raises(ValueError):
        f_inverse(y)


def test_f_inverse_vector_and_warm_start(rng):
    y = rng.uniform(0.001, 0.999, size=200)
    x = f_inverse(y)
    assert np.max(np.abs(f_eval(x) - y)) <= 1e-10
    # a warm start far from the root still lands on it
    x2 = f_inverse(y, x0=np.full(200, 25.0))
    np.testing.assert_allclose(x2, x, atol=1e-7)


# ---------------------------------------------------------------- primal / dual blocks

def _one_user_consts(eta=2.0, pmax=5.0, h=1.0, noise=1.0):
    sc = make_scenario([[h]], pmax, noise_power=noise)
    return sc, PowerConstants.build(sc, Association.from_serving([0], 1), eta)


def test_primal_update_closed_forms():
    _, c = _one_user_consts(eta=2.0, pmax=5.0)
    dual = PowerDual(np.array([0.4]), np.array([0.1]), np.array([-0.4]), np.zeros((1, 1)))
    pr = primal_update(dual, c)
    assert pr.omega[0] == pytest.approx(0.0, abs=1e-15)
    # rho = -ln eta + ln(-b - zeta)
    assert pr.rho[0] == pytest.approx(-math.log(2.0) + math.log(-0.1 + 0.4), rel=1e-13)
    # -zeta = 0.4 -> theta = f^-1(0.4)
    assert f_eval(pr.theta[0]) == pytest.approx(0.4, abs=1e-10)

    dual = PowerDual(np.array([1.0]), np.array([0.0]), np.array([-1 / (2 * math.log(2))]), np.zeros((1, 1)))
    assert primal_update(dual, c).theta[0] == pytest.approx(0.0, abs=1e-8)


def test_primal_update_projects_power():
    _, c = _one_user_consts(eta=1e-3, pmax=5.0)
    dual = PowerDual(np.array([1.0]), np.array([0.0]), np.array([-0.5]), np.zeros((1, 1)))
    assert primal_update(dual, c).rho[0] == pytest.approx(math.log(5.0))


def _two_user_state():
    sc = make_scenario([[1.0, 0.2], [0.3, 2.0]], [1.0, 1.0], noise_power=0.1)
    assoc = Association.from_serving([0, 1], 2)
    c = PowerConstants.build(sc, assoc, 3.0)
    pr = PowerPrimal(np.log([0.5, 0.8]), np.array([0.2, -0.1]), np.array([-1.0, -2.0]),
                     np.array([[0.0, -1.5], [-0.7, 0.0]]))
    du = PowerDual(np.array([0.5, 0.6]), np.array([0.1, 0.0]), np.array([-0.3, -0.2]),
                   np.array([[0.0, -0.05], [-0.02, 0.0]]))
    return sc, c, pr, du


def test_dual_update_additive_hand_step():
    sc, c, pr, du = _two_user_state()
    d = 0.05
    new = dual_update(pr, du, c, d, mode="additive")
    h, n = sc.gains, sc.noise_power
    beta = np.log([n / h[0, 0], n / h[1, 1]])
    g0 = math.exp(-1.0) + math.exp(-1.5) - 1
    assert new.a[0] == pytest.approx(max(0.5 + d * g0, 1e-12))
    assert new.b[0] == pytest.approx(max(0.1 + d * (math.log(0.5) - 0.0), 0.0))
    assert new.zeta[1] == pytest.approx(-0.2 + d * (-2.0 + 0.1 + math.log(0.8) - beta[1]))
    gamma_01 = math.log(h[0, 1] / h[0, 0])
    chi01 = -0.05 + d * (-1.5 - 0.2 + math.log(0.5) - math.log(0.8) - gamma_01)
    assert new.chi[0, 1] == pytest.approx(min(chi01, -1e-12))
    assert new.chi[0, 0] == 0.0


def test_dual_update_fixed_point_at_zero_residuals():
    sc, c, _, du = _two_user_state()
    p = np.array([0.5, 0.8])
    lam = sinr_matrix(sc, p)[[0, 1], [0, 1]]
    rho, theta = np.log(p), np.log(lam)
    omega = theta - rho + c.beta
    s = (theta[:, None] - rho[c.serving][:, None] + rho[None, :] + c.gamma) * c.other
    pr = PowerPrimal(rho, theta, omega, s)
    r = residuals(pr, c)
    np.testing.assert_allclose(r.omega, 0.0, atol=1e-12)
    np.testing.assert_allclose(r.g, 0.0, atol=1e-12)  # SINR equals its target exactly
    du = PowerDual(du.a, np.zeros(2), du.zeta, du.chi)
    for mode in ("additive", "multiplicative"):
        new = dual_update(pr, du, c, 0.3, mode=mode)
        np.testing.assert_allclose(new.a, du.a, atol=1e-12)
        np.testing.assert_allclose(new.zeta, du.zeta, atol=1e-12)
        np.testing.assert_allclose(new.chi, du.chi, atol=1e-12)


def test_dual_update_b_grows_above_limit():
    _, c, pr, du = _two_user_state()
    pr = PowerPrimal(np.log([2.0, 0.5]), pr.theta, pr.omega, pr.s)
    assert dual_update(pr, du, c, 0.1, "multiplicative").b[0] > du.b[0]


def test_kkt_initial_dual_is_stationary_in_theta():
    sc = generate_scenario(ExperimentConfig(n_users=8), 2)
    assoc = max_sinr_association(sc)
    c = PowerConstants.build(sc, assoc, 50.0)
    from uee_hetnet.powerctl import _primal_from_power

    p = np.where(c.active, sc.max_power * 0.3, sc.max_power * 1e-9)  # idle BSs sit at the floor
    pr = _primal_from_power(p, c, sc)
    du = initial_dual(pr, c, "kkt")
    again = primal_update(du, c, theta0=pr.theta)
    np.testing.assert_allclose(again.theta, pr.theta, atol=1e-7)
    np.testing.assert_allclose(again.omega, pr.omega, atol=1e-12)


# ---------------------------------------------------------------- objective and solver

def test_power_objective_examples():
    sc = make_scenario([[math.e - 1]], 1.0, bandwidth_hz=1.0, noise_power=1.0)
    a = Association.from_serving([0], 1)
    assert power_objective(sc, a, np.array([1.0]), 0.0) == pytest.approx(0.0, abs=1e-15)
    assert power_objective(sc, a, np.array([1.0]), 2.5) + 2.5 == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        power_objective(make_scenario([[1.0, 1.0]], 1.0), Association.from_serving([1], 2),
                        np.array([1.0, 0.0]), 1.0)


def test_power_objective_term_by_term(default_scenario, rng):
    a = max_sinr_association(default_scenario)
    p = default_scenario.max_power * rng.uniform(0.01, 1, size=4)
    s = sinr_matrix(default_scenario, p)
    expect = sum(math.log(default_scenario.bandwidth_hz / a.k[j] * math.log1p(s[i, j]))
                 for i, j in enumerate(a.serving)) - 7.0 * p.sum()
    assert power_objective(default_scenario, a, p, 7.0) == pytest.approx(expect, rel=1e-12)


def test_eta_zero_returns_max_power(default_scenario):
    p, trace = solve_power(default_scenario, max_sinr_association(default_scenario), 0.0)
    np.testing.assert_array_equal(p, default_scenario.max_power)
    assert trace.bypassed


@pytest.mark.parametrize("eta", [0.3, 2.0, 20.0])
def test_single_link_matches_scalar_search(eta):
    h, noise, pmax = 3.0, 0.5, 4.0
    sc = make_scenario([[h]], pmax, noise_power=noise)
    p, trace = solve_power(sc, Association.from_serving([0], 1), eta)
    res = minimize_scalar(lambda r: -(math.log(math.log1p(h * math.exp(r) / noise)) - eta * math.exp(r)),
                          bounds=(math.log(pmax) - 20, math.log(pmax)), method="bounded",
                          options={"xatol": 1e-10})
    p_ref = min(math.exp(res.x), pmax)
    assert trace.converged
    assert p[0] == pytest.approx(p_ref, rel=1e-3)


@pytest.mark.parametrize("seed", range(3))
def test_two_bs_against_grid(seed):
    sc = generate_scenario(ExperimentConfig(n_users=2, n_small=1), seed)
    a = Association.from_serving([0, 1], 2)
    eta = uee(sc, a, sc.max_power) * 3
    p, trace = solve_power(sc, a, eta)
    _, grid_best = grid_search_power(sc, a, eta)
    obj = power_objective(sc, a, p, eta)
    assert obj >= grid_best - 1e-2 * abs(grid_best)
    assert np.all(p > 0) and np.all(p <= sc.max_power)


def test_converged_point_satisfies_constraints(default_scenario):
    a = max_sinr_association(default_scenario)
    eta = uee(default_scenario, a, default_scenario.max_power) * 10
    p, trace = solve_power(default_scenario, a, eta)
    assert trace.converged and trace.final_residual <= 1e-4
    assert np.all(p > 0) and np.all(p <= default_scenario.max_power)


@pytest.mark.parametrize("opts", [PowerOptions(init="constant"), PowerOptions(dual_step="additive", max_iter=300),
                                  PowerOptions(step_rule="diminishing", max_iter=300)])
def test_never_worse_than_warm_start(default_scenario, opts):
    a = max_sinr_association(default_scenario)
    eta = 40.0
    p0 = default_scenario.max_power * 0.05
    p, _ = solve_power(default_scenario, a, eta, opts, p0=p0)
    assert power_objective(default_scenario, a, p, eta) >= power_objective(default_scenario, a, p0, eta)
    assert np.all(p > 0) and np.all(p <= default_scenario.max_power)


def test_unloaded_bs_goes_to_floor(default_scenario):
    a = Association.from_serving(np.zeros(default_scenario.n_users, dtype=int), default_scenario.n_bs)
    p, _ = solve_power(default_scenario, a, 30.0)
    assert np.all(p[1:] <= 1e-8 * default_scenario.max_power[1:])


def test_power_trace_csv(tmp_path, default_scenario):
    a = max_sinr_association(default_scenario)
    _, trace = solve_power(default_scenario, a, 25.0, PowerOptions(max_iter=20))
    path = tmp_path / "pc.csv"
    trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,objective,max_equality_residual,max_inequality_violation,clamp_count"
    assert len(lines) == len(trace.objective) + 1


def test_consistency_residuals_zero_on_consistent_point():
    sc, c, _, _ = _two_user_state()
    from uee_hetnet.powerctl import _primal_from_power

    pr = _primal_from_power(np.array([0.5, 0.8]), c, sc)
    eq, ineq = consistency_residuals(pr, c)
    assert eq <= 1e-14 and ineq <= 1e-12
