"""Reproducible simulation of Brownian, Poisson and driver paths.

Every path draws from its own counter-based Philox stream keyed by
``(seed, path_index)``, so the output for a given path never depends on how
the ensemble is split into blocks or how many threads generate it.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, TypeVar

import numpy as np

from .errors import ArgumentError
from .market import DriverSpec, LevyMeasure

__all__ = [
    "TimeGrid",
    "PathEnsemble",
    "SampleStats",
    "path_generator",
    "simulate_paths",
    "iter_path_blocks",
    "map_path_blocks",
    "sample_statistics",
    "write_paths_csv",
    "write_jumps_csv",
    "format_float",
]

T_ = TypeVar("T_")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * T / n_steps``, ``i = 0..n_steps``."""

    T: float
    n_steps: int

    def __post_init__(self):
        if not (isinstance(self.n_steps, (int, np.integer)) and self.n_steps > 0):
            raise ArgumentError("n_steps must be a positive integer")
        if not self.T > 0:
            raise ArgumentError("T must be > 0")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.T
        return t

    def index_at_or_before(self, t):
        """Largest node index ``i`` with ``t_i <= t`` (tolerant to rounding)."""
        idx = np.floor(np.asarray(t) / self.dt + 1e-9).astype(int)
        return np.clip(idx, 0, self.n_steps)


@dataclass(frozen=True)
class PathEnsemble:
    """A block of simulated paths.

    ``brownian`` and ``y_values`` have shape ``(n_paths, n_steps + 1)``.
    Jumps are kept as exact event lists per path: ``jump_times[k]`` and the
    atom index ``jump_atoms[k]`` of each event.
    """

    grid: TimeGrid
    seed: int
    path_ids: np.ndarray
    brownian: np.ndarray
    y_values: np.ndarray
    jump_times: tuple[np.ndarray, ...]
    jump_atoms: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.path_ids)

    @property
    def jump_counts(self) -> np.ndarray:
        return np.array([len(t) for t in self.jump_times], dtype=int)


class SampleStats(NamedTuple):
    mean: float
    stderr: float
    degenerate: bool = False


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Private random stream of one path."""
    key = np.array([seed, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _check_counts(n_paths: int, seed: int):
    if not (isinstance(n_paths, (int, np.integer)) and n_paths > 0):
        raise ArgumentError("n_paths must be a positive integer")
    if not (isinstance(seed, (int, np.integer)) and 0 <= seed < 2**64):
        raise ArgumentError("seed must be an integer in [0, 2**64)")


def simulate_paths(
    driver: DriverSpec,
    nu: LevyMeasure,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    *,
    first_path: int = 0,
    antithetic: bool = False,
) -> PathEnsemble:
    """Simulate paths ``first_path .. first_path + n_paths - 1``.

    With ``antithetic=True`` path ``2k + 1`` reuses the stream of path ``2k``
    with negated Brownian increments (its jumps are identical).
    """
    _check_counts(n_paths, seed)
    n = grid.n_steps
    sqdt = math.sqrt(grid.dt)
    ids = np.arange(first_path, first_path + n_paths, dtype=np.int64)
    total = nu.total_intensity
    cum = np.cumsum(nu.lam) / total if len(nu) else None

    brownian = np.empty((n_paths, n + 1))
    brownian[:, 0] = 0.0
    jump_times, jump_atoms = [], []
    for row, pid in enumerate(ids):
        stream = pid - 1 if antithetic and pid % 2 else pid
        g = path_generator(seed, int(stream))
        incs = brownian[row, 1:]
        g.standard_normal(out=incs)
        if stream != pid:
            np.negative(incs, out=incs)
        incs *= sqdt
        if len(nu):
            k = g.poisson(total * grid.T)
            times = np.sort(g.uniform(0.0, grid.T, size=k))
            atoms = np.searchsorted(cum, g.uniform(size=k), side="right")
            atoms = np.minimum(atoms, len(nu) - 1)
        else:
            times, atoms = np.empty(0), np.empty(0, dtype=np.intp)
        jump_times.append(times)
        jump_atoms.append(atoms)

    d_brownian = brownian[:, 1:].copy()
    np.cumsum(brownian[:, 1:], axis=1, out=brownian[:, 1:])
    y_values = _driver_values(driver, nu, grid, brownian, d_brownian, jump_times, jump_atoms)
    brownian.flags.writeable = False
    y_values.flags.writeable = False
    return PathEnsemble(
        grid, int(seed), ids, brownian, y_values, tuple(jump_times), tuple(jump_atoms)
    )


def _driver_values(driver, nu, grid, brownian, d_brownian, jump_times, jump_atoms):
    if driver.is_brownian(nu):
        return brownian
    n = grid.n_steps
    t_left = grid.times[:-1]
    dy = d_brownian * driver.phi(t_left)
    psi = driver.psi_for(nu)
    if len(nu):
        psi_grid = np.array([p(t_left) for p in psi])  # (n_atoms, n)
        dy -= grid.dt * (np.asarray(nu.lam) @ psi_grid)
        for row, (times, atoms) in enumerate(zip(jump_times, jump_atoms)):
            if len(times):
                cell = np.clip(np.ceil(times / grid.dt).astype(int) - 1, 0, n - 1)
                np.add.at(dy[row], cell, psi_grid[atoms, cell])
    y = np.zeros_like(brownian)
    np.cumsum(dy, axis=1, out=y[:, 1:])
    return y


def iter_path_blocks(
    driver: DriverSpec,
    nu: LevyMeasure,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    block_size: int = 1000,
    antithetic: bool = False,
) -> Iterator[PathEnsemble]:
    """Yield the ensemble in consecutive blocks of at most ``block_size`` paths."""
    _check_counts(n_paths, seed)
    if block_size <= 0:
        raise ArgumentError("block_size must be positive")
    if antithetic and block_size % 2:
        raise ArgumentError("antithetic sampling needs an even block_size")
    for start in range(0, n_paths, block_size):
        yield simulate_paths(
            driver, nu, grid, min(block_size, n_paths - start), seed,
            first_path=start, antithetic=antithetic,
        )


def map_path_blocks(
    func: Callable[[PathEnsemble], T_],
    driver: DriverSpec,
    nu: LevyMeasure,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    *,
    block_size: int | None = None,
    n_workers: int = 1,
    antithetic: bool = False,
) -> list[T_]:
    """Apply ``func`` to every block and return the results in path order.

    Blocks are generated and processed inside worker threads so that at most
    ``n_workers`` blocks are alive at once. Results never depend on
    ``n_workers``.
    """
    _check_counts(n_paths, seed)
    if block_size is None:
        # ~32 MB of float64 per path array
        block_size = max(2, min(n_paths, 4_000_000 // (grid.n_steps + 1)))
        block_size += block_size % 2
    starts = range(0, n_paths, block_size)

    def job(start):
        block = simulate_paths(
            driver, nu, grid, min(block_size, n_paths - start), seed,
            first_path=start, antithetic=antithetic,
        )
        return func(block)

    if n_workers <= 1:
        return [job(s) for s in starts]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(job, starts))


def sample_statistics(values) -> SampleStats:
    """Mean and standard error of the mean (unbiased variance).

    A single value has no spread estimate; its stderr is reported as 0 with
    ``degenerate=True``.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ArgumentError("sample_statistics needs at least one value")
    mean = math.fsum(x) / x.size
    if x.size == 1:
        return SampleStats(mean, 0.0, True)
    var = math.fsum((x - mean) ** 2) / (x.size - 1)
    return SampleStats(mean, math.sqrt(var / x.size), False)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_paths_csv(ensemble: PathEnsemble, path) -> None:
    times = ensemble.grid.times
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "B", "Y"])
        for pid, b, y in zip(ensemble.path_ids, ensemble.brownian, ensemble.y_values):
            for t, bi, yi in zip(times, b, y):
                w.writerow([int(pid), format_float(t), format_float(bi), format_float(yi)])


def write_jumps_csv(ensemble: PathEnsemble, nu: LevyMeasure, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "zeta"])
        for pid, times, atoms in zip(ensemble.path_ids, ensemble.jump_times, ensemble.jump_atoms):
            for t, j in zip(times, atoms):
                w.writerow([int(pid), format_float(t), format_float(nu.zeta[j])])
