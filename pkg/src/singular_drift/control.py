"""Optimal consumption and portfolio under delayed information.

For log utility the reduced objective can be maximised separately at each
time. The consumption rate is explicit; the portfolio fraction is the unique
positive root of a strictly increasing equation ``F(u) = rhs`` that couples
the diffusion, the price jumps and the conditional local-time intensity

    Lambda(t) = E[delta_{Y(t)}(y) | F_{t - theta}].
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .donsker import QuadConfig, conditional_density, delta_bm_conditional, forward_kernel
from .errors import ArgumentError, DomainError, HypothesisViolation
from .market import DriverSpec, MarketParams, UtilityWeights
from .paths import PathEnsemble, format_float

__all__ = [
    "RootEquationCoefficients",
    "PolicyTrajectory",
    "consumption_star",
    "root_coefficients",
    "root_equation_lhs",
    "solve_portfolio_star",
    "solve_portfolio_many",
    "delayed_conditional_delta",
    "delayed_policy",
    "constant_policy",
    "reduced_integrand",
    "write_policy_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RootEquationCoefficients:
    """``F(u) = a1 u + a2 sum_j lam_j u gamma_j^2 / (1 + u gamma_j) = rhs``."""

    a1: float
    a2: float
    rhs: float
    gamma: tuple[float, ...] = ()
    lam: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.a1 > 0:
            raise DomainError("a1 must be > 0")
        if not self.a2 > 0:
            raise DomainError("a2 must be > 0")
        if len(self.gamma) != len(self.lam):
            raise ValueError("gamma and lam must have equal length")


@dataclass(frozen=True)
class PolicyTrajectory:
    """Consumption and portfolio fractions on the grid.

    ``u`` and ``lam`` have shape ``(n_paths, n_steps + 1)``; ``c`` depends only
    on time. ``info_index[i]`` is the last grid node whose path values enter
    the decision at ``t_i`` (0 while ``t_i <= theta``). ``clamped`` marks the
    points where the positivity hypothesis failed and ``u`` was set to 0.
    """

    times: np.ndarray
    u: np.ndarray
    c: np.ndarray
    lam: np.ndarray
    theta: float
    info_index: np.ndarray
    path_ids: np.ndarray
    clamped: np.ndarray

    @property
    def n_clamped(self) -> int:
        return int(self.clamped.sum())


def consumption_star(a: float, b: float, T: float, t):
    """Optimal consumption fraction ``a / (b + a (T - t))``."""
    if not b > 0:
        raise DomainError("b must be > 0")
    if not a >= 0:
        raise DomainError("a must be >= 0")
    t = np.asarray(t, dtype=float)
    out = a / (b + a * (T - t))
    return out if out.ndim else float(out)


def root_coefficients(
    market: MarketParams,
    weights: UtilityWeights,
    t: float,
    delta: float,
    form: str = "pointwise",
) -> RootEquationCoefficients:
    """Coefficients of the portfolio equation at time ``t``.

    ``delta`` is the conditional local-time intensity at ``t``. With
    ``form="pointwise"`` the curvature is ``(a (T - t) + b) sigma^2``, the
    exact stationarity condition of the reduced objective; ``form="paper"``
    uses ``(a + b) sigma^2`` instead. The two agree when ``a = 0``.
    """
    a2, a1 = _a2_a1(market, weights, t, form)
    rhs = a2 * (market.mu - market.r + market.alpha * delta)
    return RootEquationCoefficients(float(a1), float(a2), float(rhs), market.gamma, market.nu.lam)


def _a2_a1(market, weights, t, form):
    a2 = weights.a * (market.T - np.asarray(t, dtype=float)) + weights.b
    if form == "pointwise":
        a1 = a2 * market.sigma**2
    elif form == "paper":
        a1 = (weights.a + weights.b) * market.sigma**2 + 0.0 * a2
    else:
        raise ValueError(f"unknown coefficient form {form!r}")
    return a2, a1


def _lhs(u, a1, a2, gamma, lam):
    u = np.asarray(u, dtype=float)
    jump = np.zeros_like(u)
    for g, l in zip(gamma, lam):
        jump = jump + l * u * g * g / (1.0 + u * g)
    return a1 * u + a2 * jump


def _slope(u, a1, a2, gamma, lam):
    u = np.asarray(u, dtype=float)
    jump = np.zeros_like(u)
    for g, l in zip(gamma, lam):
        jump = jump + l * g * g / (1.0 + u * g) ** 2
    return a1 + a2 * jump


def root_equation_lhs(u: float, coeffs: RootEquationCoefficients) -> float:
    if any(1.0 + u * g <= 0 for g in coeffs.gamma):
        raise DomainError("1 + u * gamma must be > 0 for every atom")
    return float(_lhs(u, coeffs.a1, coeffs.a2, coeffs.gamma, coeffs.lam))


def solve_portfolio_many(a1, a2, rhs, gamma=(), lam=(), tol: float = 1e-14, max_iter: int = 200):
    """Vectorised root of ``F(u) = rhs`` on ``u >= 0``; every ``rhs`` must be > 0.

    ``F`` is increasing and concave with ``a1 u <= F(u) <= F'(0) u``, so the
    root lies in ``[rhs / F'(0), rhs / a1]`` and Newton started at the lower
    end climbs to it monotonically. Steps leaving the bracket are replaced by
    bisection.
    """
    a1, a2, rhs = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a1, a2, rhs)))
    if np.any(~(rhs > 0)):
        raise HypothesisViolation("portfolio equation needs rhs > 0")
    gamma, lam = tuple(gamma), tuple(lam)
    if not gamma:
        return rhs / a1

    u = rhs / _slope(0.0, a1, a2, gamma, lam)
    lo = u * (1 - 1e-12)
    hi = rhs / a1 * (1 + 1e-12)
    for _ in range(max_iter):
        f = _lhs(u, a1, a2, gamma, lam) - rhs
        done = np.abs(f) <= tol
        lo = np.where(f < 0, u, lo)
        hi = np.where(f > 0, u, hi)
        # bracket collapsed to neighbouring floats: no better double exists
        done |= hi - lo <= 4 * np.spacing(hi)
        if done.all():
            break
        newton = u - f / _slope(u, a1, a2, gamma, lam)
        inside = (newton > lo) & (newton < hi)
        u = np.where(done, u, np.where(inside, newton, 0.5 * (lo + hi)))
    return u


def solve_portfolio_star(coeffs: RootEquationCoefficients, tol: float = 1e-14) -> float:
    """Unique ``u* > 0`` with ``F(u*) = rhs``; refuses when ``rhs <= 0``."""
    if not coeffs.rhs > 0:
        raise HypothesisViolation(
            f"mu - r + alpha * E[delta] must be > 0 (rhs = {coeffs.rhs!r})"
        )
    u = solve_portfolio_many(coeffs.a1, coeffs.a2, coeffs.rhs, coeffs.gamma, coeffs.lam, tol)
    return float(u)


def delayed_conditional_delta(
    path: PathEnsemble,
    driver: DriverSpec,
    market: MarketParams,
    theta: float,
    quad: QuadConfig = QuadConfig(),
):
    """``E[delta_{Y(t_i)}(y) | F_{t_i - theta}]`` at every grid node.

    Returns ``(lam, info_index)``. When ``t_i - theta`` falls between nodes the
    last node before it is used, which only lengthens the delay. For
    ``t_i <= theta`` no path data are available and the value is frozen at
    ``E[delta_{Y(theta)}(y)]``.
    """
    if not theta > 0:
        raise ArgumentError("theta must be > 0")
    grid, nu, y = path.grid, market.nu, market.y
    times = grid.times
    brownian = driver.is_brownian(nu)
    lam = np.empty(path.y_values.shape)
    info = np.zeros(len(times), dtype=int)
    early = times <= theta * (1 + 1e-12)
    late = np.flatnonzero(~early)
    info[late] = grid.index_at_or_before(times[late] - theta)
    if brownian:
        lam[:, early] = delta_bm_conditional(-y, theta)
        if late.size:
            k = info[late]
            lam[:, late] = delta_bm_conditional(path.y_values[:, k] - y, times[late] - times[k])
        return lam, info
    k0 = forward_kernel(driver, nu, 0.0, theta)
    lam[:, early] = conditional_density(-y, k0.v_c, k0.jump_psi, k0.jump_weight, quad)[0]
    for i in late:
        k = info[i]
        ker = forward_kernel(driver, nu, times[k], times[i])
        lam[:, i] = conditional_density(
            path.y_values[:, k] - y, ker.v_c, ker.jump_psi, ker.jump_weight, quad
        )
    return lam, info


def delayed_policy(
    path: PathEnsemble,
    market: MarketParams,
    driver: DriverSpec,
    weights: UtilityWeights,
    theta: float,
    quad: QuadConfig = QuadConfig(),
    *,
    form: str = "pointwise",
    on_violation: str = "raise",
    tol: float = 1e-14,
) -> PolicyTrajectory:
    """Optimal ``(c*, u*)`` for an investor who sees the market with delay ``theta``.

    ``on_violation="clamp"`` replaces ``u`` by 0 where ``rhs <= 0`` instead of
    raising; the affected points are flagged in the result.
    """
    if on_violation not in ("raise", "clamp"):
        raise ValueError("on_violation must be 'raise' or 'clamp'")
    lam, info = delayed_conditional_delta(path, driver, market, theta, quad)
    times = path.grid.times
    a2, a1 = _a2_a1(market, weights, times, form)
    rhs = a2 * (market.mu - market.r + market.alpha * lam)
    bad = ~(rhs > 0)
    if bad.any():
        if on_violation == "raise":
            raise HypothesisViolation(
                f"mu - r + alpha * E[delta] <= 0 at {int(bad.sum())} grid points"
            )
        log.warning("positivity hypothesis fails at %d points; u set to 0", int(bad.sum()))
    a1b = np.broadcast_to(a1, lam.shape)
    a2b = np.broadcast_to(a2, lam.shape)
    if not bad.any():
        u = solve_portfolio_many(a1b, a2b, rhs, market.gamma, market.nu.lam, tol)
    else:
        u = np.zeros(lam.shape)
        ok = ~bad
        if ok.any():
            u[ok] = solve_portfolio_many(a1b[ok], a2b[ok], rhs[ok], market.gamma, market.nu.lam, tol)
    c = consumption_star(weights.a, weights.b, market.T, times)
    return PolicyTrajectory(times, u, np.asarray(c), lam, float(theta), info, path.path_ids, bad)


def constant_policy(path: PathEnsemble, u: float, c: float = 0.0, lam=None) -> PolicyTrajectory:
    """Fixed fractions on every path, mainly for checks.

    ``lam`` is the local-time intensity the reduced objective charges; it
    defaults to 0, which ignores the local-time drift.
    """
    shape = path.y_values.shape
    times = path.grid.times
    lam = np.zeros(shape) if lam is None else np.broadcast_to(np.asarray(lam, dtype=float), shape)
    return PolicyTrajectory(
        times, np.full(shape, float(u)), np.full(len(times), float(c)), lam,
        float("nan"), np.arange(len(times)), path.path_ids, np.zeros(shape, dtype=bool),
    )


def reduced_integrand(c, u, t, delta, market: MarketParams, weights: UtilityWeights):
    """Time integrand of the objective once ``dL`` is replaced by ``E[delta | G_t] dt``.

    ``a ln c + (a (T - t) + b) * [r + (mu - r) u - c - sigma^2 u^2 / 2
    + alpha u delta + sum_j lam_j (ln(1 + u gamma_j) - u gamma_j)]``.
    The ``ln c`` term is dropped when ``a = 0``.
    """
    c, u, t, delta = (np.asarray(v, dtype=float) for v in (c, u, t, delta))
    growth = (
        market.r + (market.mu - market.r) * u - c - 0.5 * market.sigma**2 * u * u
        + market.alpha * u * delta
    )
    for g, l in zip(market.gamma, market.nu.lam):
        growth = growth + l * (np.log1p(u * g) - u * g)
    out = (weights.a * (market.T - t) + weights.b) * growth
    if weights.a:
        out = out + weights.a * np.log(c)
    return out


def write_policy_csv(policy: PolicyTrajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "Lambda", "u_star", "c_star"])
        for pid, lam_row, u_row in zip(policy.path_ids, policy.lam, policy.u):
            for t, lam, u, c in zip(policy.times, lam_row, u_row, policy.c):
                w.writerow([int(pid), format_float(t), format_float(lam), format_float(u), format_float(c)])
