"""Local time of the driver: pathwise band estimator and its expectation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .donsker import QuadConfig, conditional_density
from .errors import ArgumentError
from .market import DriverSpec, LevyMeasure
from .paths import PathEnsemble, format_float

__all__ = [
    "LocalTimeTrajectory",
    "band_epsilon",
    "band_occupation_local_time",
    "expected_local_time",
    "expected_local_time_curve",
    "write_local_time_csv",
]


@dataclass(frozen=True)
class LocalTimeTrajectory:
    """``values[p, i]`` estimates ``L_{t_i}(y)`` on path ``p``."""

    times: np.ndarray
    values: np.ndarray
    epsilon: float
    path_ids: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        # a copy, so that keeping it does not pin the whole trajectory
        return self.values[:, -1].copy()


def band_epsilon(dt: float, c: float = 2.0) -> float:
    """Band half-width tied to the grid, ``c * sqrt(dt)``."""
    return c * math.sqrt(dt)


def band_occupation_local_time(
    path: PathEnsemble, y: float, epsilon: float | None = None, c: float = 2.0
) -> LocalTimeTrajectory:
    """Occupation time of the band ``(y - eps, y + eps)`` divided by ``2 eps``.

    Node ``t_k`` counts for the whole cell ``[t_k, t_{k+1})``, so every
    increment is either 0 or ``dt / (2 eps)``.
    """
    grid = path.grid
    if epsilon is None:
        epsilon = band_epsilon(grid.dt, c)
    if not epsilon > 0:
        raise ArgumentError("epsilon must be > 0")
    yv = path.y_values
    inside = np.abs(yv[:, :-1] - y) < epsilon
    values = np.zeros(yv.shape)
    np.cumsum(inside, axis=1, out=values[:, 1:])
    values *= grid.dt / (2.0 * epsilon)
    return LocalTimeTrajectory(grid.times, values, float(epsilon), path.path_ids)


def _w_integrand(driver: DriverSpec, nu: LevyMeasure, y: float, quad: QuadConfig):
    """``w -> 2 w E[delta_{Y(w^2)}(y)]``, the time integrand after ``s = w^2``."""
    psi = driver.psi_for(nu)

    def f(w):
        s = w * w
        jpsi, jw = [], []
        for lam, p in zip(nu.lam, psi):
            for duration, value in p.pieces(0.0, s):
                jpsi.append(value)
                jw.append(lam * duration)
        v_c = driver.continuous_variance(0.0, s)
        return 2.0 * w * conditional_density(-y, v_c, jpsi, jw, quad)[0]

    return f


def _breakpoints(driver: DriverSpec, nu: LevyMeasure, t0: float, t1: float) -> list[float]:
    return sorted({b for f in (driver.phi,) + driver.psi_for(nu) for b in f.starts if t0 < b < t1})


def _adaptive(f, w0: float, w1: float, breaks) -> float:
    # Gauss-Kronrod never samples the endpoints, so w = 0 is never evaluated
    value, _ = integrate.quad(
        f, w0, w1, points=breaks or None, epsabs=1e-13, epsrel=1e-11, limit=200
    )
    return value


def expected_local_time(
    driver: DriverSpec,
    nu: LevyMeasure,
    y: float,
    t: float,
    quad: QuadConfig = QuadConfig(),
) -> float:
    """``E[L_t(y)] = int_0^t E[delta_{Y(s)}(y)] ds``.

    The ``s^{-1/2}`` singularity at 0 is removed by ``s = w^2``.
    """
    if not t > 0:
        raise ArgumentError("t must be > 0")
    breaks = [math.sqrt(b) for b in _breakpoints(driver, nu, 0.0, t)]
    return _adaptive(_w_integrand(driver, nu, y, quad), 0.0, math.sqrt(t), breaks)


def expected_local_time_curve(
    driver: DriverSpec,
    nu: LevyMeasure,
    y: float,
    times,
    quad: QuadConfig = QuadConfig(),
    order: int = 8,
) -> np.ndarray:
    """``E[L_{t_i}(y)]`` at increasing times ``t_0 >= 0``, in one pass.

    Cells ``[t_i, t_{i+1}]`` are integrated in ``w = sqrt(s)`` by
    ``order``-point Gauss-Legendre. The first cell, where the integrand can
    rise from 0 like ``exp(-y^2 / 2 w^2)``, and cells holding a breakpoint of
    ``phi`` or ``psi`` are integrated adaptively.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ArgumentError("times must be increasing and non-negative")
    f = _w_integrand(driver, nu, y, quad)
    x0, w0 = np.polynomial.legendre.leggauss(order)
    edges = np.sqrt(times)
    cells = np.empty(len(times) - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        breaks = [math.sqrt(s) for s in _breakpoints(driver, nu, times[i], times[i + 1])]
        if i == 0 or breaks:
            cells[i] = _adaptive(f, a, b, breaks)
        else:
            half, mid = 0.5 * (b - a), 0.5 * (a + b)
            cells[i] = half * math.fsum(wk * f(mid + half * xk) for xk, wk in zip(x0, w0))
    out = np.empty(len(times))
    out[0] = expected_local_time(driver, nu, y, times[0], quad) if times[0] > 0 else 0.0
    out[1:] = out[0] + np.cumsum(cells)
    return out


def write_local_time_csv(traj: LocalTimeTrajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "L"])
        for pid, row in zip(traj.path_ids, traj.values):
            for t, v in zip(traj.times, row):
                w.writerow([int(pid), format_float(t), format_float(v)])
