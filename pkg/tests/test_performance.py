import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from singular_drift import (
    DomainError,
    DriverSpec,
    LevyMeasure,
    MarketParams,
    PiecewiseConstant,
    TimeGrid,
    UtilityWeights,
    blowup_constant,
    brownian_driver,
    closed_form_J_hat,
    evaluate_J,
    gaussian_sq_exp_moment,
    lambda_moments,
    sample_statistics,
    second_moment_R,
    simulate_paths,
    simulate_wealth,
    theta_sweep,
    variant_discrepancy,
    wealth_objective,
    write_sweep_csv,
)
from singular_drift.control import constant_policy
from singular_drift.performance import SWEEP_COLUMNS, trapezoid


def test_closed_form_without_singular_drift():
    for theta in (0.01, 0.3, 1.0):
        assert closed_form_J_hat(theta, 0.1, 0.0, 0.2, 1.0) == pytest.approx(0.125, rel=1e-15)
        paper = closed_form_J_hat(theta, 0.1, 0.0, 0.2, 1.0, variant="paper")
        assert paper == pytest.approx(0.125 + math.sqrt(theta / (2 * math.pi)), rel=1e-14)


def test_closed_form_examples():
    # (1 / 4 pi) (1 + (sqrt 1.75 - 0.5) / 0.5), evaluated at 30 digits
    assert closed_form_J_hat(0.25, 0.0, 1.0, 1.0, 1.0) == pytest.approx(0.210542199673896, rel=1e-13)
    # theta = T leaves A3 = alpha^2 / (4 pi sigma^2)
    assert closed_form_J_hat(2.0, 0.0, 0.7, 0.5, 2.0) == pytest.approx(0.49 / (4 * math.pi * 0.25))


@pytest.mark.parametrize("theta", [0.0, -0.1, 1.5])
def test_closed_form_domain(theta):
    with pytest.raises(DomainError):
        closed_form_J_hat(theta, 0.1, 0.5, 0.2, 1.0)
    with pytest.raises(ValueError):
        closed_form_J_hat(0.5, 0.1, 0.5, 0.2, 1.0, variant="other")


@given(st.floats(1e-6, 1), st.floats(-1, 1), st.floats(-2, 2), st.floats(0.05, 2))
def test_variant_discrepancy_is_analytic(theta, mu, alpha, sigma):
    p = closed_form_J_hat(theta, mu, alpha, sigma, 1.0, "paper")
    c = closed_form_J_hat(theta, mu, alpha, sigma, 1.0, "corrected")
    assert abs(p - c) == pytest.approx(variant_discrepancy(theta, mu, alpha, sigma), rel=1e-8, abs=1e-12)


@given(st.floats(-1, 1), st.floats(0.05, 2), st.floats(0.05, 2), st.floats(0.5, 3))
def test_corrected_value_finite_and_decreasing_in_theta(mu, alpha, sigma, T):
    thetas = T * np.logspace(-5, 0, 12)
    vals = [closed_form_J_hat(th, mu, alpha, sigma, T) for th in thetas]
    assert all(math.isfinite(v) for v in vals)
    if mu * alpha >= 0:
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_blowup_factor():
    for mu, alpha, sigma in [(0.0, 1.0, 1.0), (0.1, 0.5, 0.2)]:
        small = closed_form_J_hat(1e-6, mu, alpha, sigma, 1.0)
        large = closed_form_J_hat(1e-2, mu, alpha, sigma, 1.0)
        assert small >= large * math.sqrt(1e-2 / 1e-6) / 2
    assert blowup_constant(1.0, 1.0, 1.0) == pytest.approx(0.112539539519638, rel=1e-13)


def test_gaussian_sq_exp_moment_examples():
    assert gaussian_sq_exp_moment(0.5, 1.0) == pytest.approx(2**-0.5, rel=1e-15)
    assert gaussian_sq_exp_moment(1e-12, 3.0, 2.0) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(DomainError):
        gaussian_sq_exp_moment(0.0, 1.0)
    with pytest.raises(DomainError):
        gaussian_sq_exp_moment(1.0, 0.0)


def test_gaussian_sq_exp_moment_monte_carlo():
    rng = np.random.default_rng(99)
    z = rng.normal(0, 1, 1_000_000)
    s = sample_statistics(np.exp(-((z - 1.0) ** 2)))
    assert abs(s.mean - gaussian_sq_exp_moment(1.0, 1.0, 1.0)) <= 3 * s.stderr


@given(st.floats(0.01, 1), st.floats(0.01, 2), st.floats(-2, 2))
def test_moment_chain(theta, gap, y):
    t = theta + gap
    mean, second = lambda_moments(theta, t, y)
    pref = (2 * math.pi * theta) ** -0.5
    assert pref * gaussian_sq_exp_moment(1 / (2 * theta), t - theta, y) == pytest.approx(mean, rel=1e-12)
    assert gaussian_sq_exp_moment(1 / theta, t - theta, y) * pref**2 == pytest.approx(second, rel=1e-12)
    assert second_moment_R(theta, t, y) == pytest.approx(second, rel=1e-12)


def test_second_moment_examples():
    assert second_moment_R(0.4, 0.4) == pytest.approx(1 / (2 * math.pi * 0.4))
    # 1 / (2 pi sqrt(0.01) sqrt(1.99)), evaluated at 30 digits
    assert second_moment_R(0.01, 1.0) == pytest.approx(1.12821947842016, rel=1e-13)
    with pytest.raises(DomainError):
        second_moment_R(0.5, 0.4)


def test_trapezoid():
    t = np.linspace(0, 1, 101)
    assert trapezoid(t, 0.01) == pytest.approx(0.5)
    assert trapezoid(np.vstack([t, 2 * t]), 0.01) == pytest.approx([0.5, 1.0])


def _const(u, c=0.0):
    return lambda block: constant_policy(block, u, c)


def test_constant_policy_value_is_deterministic(bm):
    m = MarketParams(r=0.0, mu=0.1, sigma=0.2, alpha=0.0, T=1.0)
    u = 1.7
    rep = evaluate_J(m, bm, UtilityWeights(0, 1), 0.1, TimeGrid(1.0, 50), 200, 1, policy=_const(u))
    assert rep.mc_estimate == pytest.approx((0.1 * u - 0.02 * u * u) * 1.0, rel=1e-12)
    assert rep.mc_stderr <= 1e-12
    idle = evaluate_J(m, bm, UtilityWeights(0, 1), 0.1, TimeGrid(1.0, 50), 20, 1, policy=_const(0.0))
    assert idle.mc_estimate == 0.0


def test_explicit_value_reproduced(explicit_market, log_terminal, bm):
    theta = 0.2
    rep = evaluate_J(explicit_market, bm, log_terminal, theta, TimeGrid(1.0, 500), 20_000, 5)
    assert rep.closed_form_corrected == closed_form_J_hat(theta, 0.1, 0.5, 0.2, 1.0)
    assert abs(rep.mc_estimate - rep.closed_form_corrected) <= 3 * rep.mc_stderr
    assert rep.as_dict()["mu"] == 0.1


def test_report_omits_closed_form_outside_explicit_setting(bm):
    m = MarketParams(r=0.01, mu=0.1, sigma=0.2, alpha=0.5, T=1.0)
    rep = evaluate_J(m, bm, UtilityWeights(0, 1), 0.2, TimeGrid(1.0, 20), 50, 5)
    assert rep.closed_form_corrected is None and rep.closed_form_paper is None


def test_jump_market_value_finite_and_thread_independent():
    nu = LevyMeasure.from_atoms([(1.0, 1.0), (-0.5, 0.5)])
    m = MarketParams(r=0.01, mu=0.1, sigma=0.25, alpha=0.3, T=1.0, y=0.1, nu=nu, gamma=(0.3, 0.1))
    d = DriverSpec(
        phi=PiecewiseConstant((0.0, 0.5), (1.0, 0.8)),
        psi=(PiecewiseConstant.constant(0.3), PiecewiseConstant.constant(-0.2)),
    )
    w = UtilityWeights(a=0.5, b=1.0)
    args = (m, d, w, 0.1, TimeGrid(1.0, 40), 300, 8)
    one = evaluate_J(*args, block_size=64, n_workers=1)
    three = evaluate_J(*args, block_size=64, n_workers=3)
    assert math.isfinite(one.mc_estimate) and math.isfinite(one.mc_stderr)
    assert one.mc_estimate == three.mc_estimate and one.mc_stderr == three.mc_stderr
    prior = evaluate_J(*args, early="prior")
    assert math.isfinite(prior.mc_estimate)


def test_prior_mode_adds_known_gap(explicit_market, log_terminal, bm):
    # on [0, theta] the true F_0 intensity integrates to sqrt(2 theta / pi)
    # instead of theta / sqrt(2 pi theta); u is constant there
    theta = 0.2
    grid = TimeGrid(1.0, 1000)
    frozen = evaluate_J(explicit_market, bm, log_terminal, theta, grid, 2000, 3)
    prior = evaluate_J(explicit_market, bm, log_terminal, theta, grid, 2000, 3, early="prior")
    m = explicit_market
    u0 = (m.mu + m.alpha * (2 * math.pi * theta) ** -0.5) / m.sigma**2
    gap = m.alpha * u0 * (math.sqrt(2 * theta / math.pi) - math.sqrt(theta / (2 * math.pi)))
    assert prior.mc_estimate - frozen.mc_estimate == pytest.approx(gap, rel=1e-3)


def test_wealth_trivial_cases(bm):
    m = MarketParams(r=0.0, mu=0.1, sigma=0.2, alpha=0.5, T=1.0)
    e = simulate_paths(bm, LevyMeasure(), TimeGrid(1.0, 100), 5, 2)
    logx = simulate_wealth(e, constant_policy(e, 0.0, 0.0), m)
    assert np.all(logx == 0.0)
    logx = simulate_wealth(e, constant_policy(e, 0.0, 0.3), m)
    np.testing.assert_allclose(logx[:, -1], -0.3, rtol=1e-12)


def test_wealth_positivity_enforced():
    nu = LevyMeasure.from_atoms([(1.0, 1.0)])
    m = MarketParams(r=0.0, mu=0.1, sigma=0.2, alpha=0.0, T=1.0, nu=nu, gamma=(0.5,))
    e = simulate_paths(brownian_driver(), nu, TimeGrid(1.0, 10), 3, 2)
    with pytest.raises(DomainError):
        simulate_wealth(e, constant_policy(e, -2.5), m)


def test_wealth_log_normal_mean(bm):
    m = MarketParams(r=0.0, mu=0.1, sigma=0.2, alpha=0.0, T=1.0)
    e = simulate_paths(bm, LevyMeasure(), TimeGrid(1.0, 10), 100_000, 6)
    u = 2.0
    pol = constant_policy(e, u)
    s = sample_statistics(wealth_objective(simulate_wealth(e, pol, m), pol, UtilityWeights(0, 1), 0.1))
    assert abs(s.mean - (0.1 * u - 0.02 * u * u)) <= 3 * s.stderr


def test_wealth_with_jumps_matches_reduced_value():
    nu = LevyMeasure.from_atoms([(1.0, 2.0)])
    m = MarketParams(r=0.0, mu=0.1, sigma=0.2, alpha=0.0, T=1.0, nu=nu, gamma=(0.4,))
    e = simulate_paths(brownian_driver(), nu, TimeGrid(1.0, 20), 100_000, 6)
    u = 1.5
    pol = constant_policy(e, u)
    s = sample_statistics(wealth_objective(simulate_wealth(e, pol, m), pol, UtilityWeights(0, 1), 0.05))
    exact = 0.1 * u - 0.02 * u * u + 2.0 * (math.log1p(0.4 * u) - 0.4 * u)
    assert abs(s.mean - exact) <= 3 * s.stderr


def test_sweep_rows_and_csv(tmp_path, bm, log_terminal):
    m = MarketParams(r=0.0, mu=0.1, sigma=0.2, alpha=0.5, T=1.0)
    thetas = [0.1, 0.05, 0.025]
    rows = theta_sweep(m, bm, log_terminal, thetas, TimeGrid(1.0, 100), 0, 1)
    assert [r.theta for r in rows] == thetas
    assert all(math.isnan(r.j_mc) for r in rows)
    assert rows[0].j_corrected < rows[1].j_corrected < rows[2].j_corrected
    flat = theta_sweep(MarketParams(r=0.0, mu=0.1, sigma=0.2, alpha=0.0, T=1.0), bm, log_terminal,
                       thetas, TimeGrid(1.0, 100), 0, 1)
    assert {r.j_corrected for r in flat} == {0.125}
    write_sweep_csv(rows, tmp_path / "s.csv")
    table = list(csv.reader((tmp_path / "s.csv").read_text().splitlines()))
    assert tuple(table[0]) == SWEEP_COLUMNS
    assert len(table) == 4
    with pytest.raises(DomainError):
        theta_sweep(m, bm, log_terminal, [0.1, 0.0], TimeGrid(1.0, 10), 0, 1)


def test_routes_agree_on_jump_market_with_consumption():
    from singular_drift import evaluate_wealth_J

    nu = LevyMeasure.from_atoms([(1.0, 1.5), (-1.0, 0.5)])
    m = MarketParams(r=0.02, mu=0.12, sigma=0.25, alpha=0.0, T=1.0, nu=nu, gamma=(0.3, 0.2))
    d = DriverSpec(phi=PiecewiseConstant.constant(1.0), psi=(PiecewiseConstant.constant(0.2),) * 2)
    reduced, wealth = evaluate_wealth_J(m, d, UtilityWeights(a=0.5, b=1.0), 0.1, TimeGrid(1.0, 50), 4000, 4)
    assert abs(reduced.mean - wealth.mean) <= 3 * math.hypot(reduced.stderr, wealth.stderr)
