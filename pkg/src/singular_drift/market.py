"""Market coefficients, the jump measure and the driver of the local-time drift.

The jump measure is a finite set of weighted atoms, so every integral against
it is an exact finite sum. Coefficient functions of time are piecewise
constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "PiecewiseConstant",
    "LevyMeasure",
    "MarketParams",
    "DriverSpec",
    "UtilityWeights",
    "ValidationReport",
    "validate_market",
    "levy_integral",
    "brownian_driver",
]


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function on ``[0, inf)``.

    ``starts[k]`` is the left end of the k-th piece, on which the function
    equals ``values[k]``. ``starts[0]`` must be 0.
    """

    starts: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        starts = tuple(float(s) for s in self.starts)
        values = tuple(float(v) for v in self.values)
        if len(starts) != len(values) or not starts:
            raise ValueError("starts and values must be nonempty and of equal length")
        if starts[0] != 0.0:
            raise ValueError("first piece must start at 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("piece starts must be strictly increasing")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float) -> "PiecewiseConstant":
        return cls((0.0,), (float(value),))

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def __call__(self, t):
        idx = np.searchsorted(self.starts, t, side="right") - 1
        out = np.asarray(self.values)[np.clip(idx, 0, None)]
        return out if np.ndim(t) else float(out)

    def pieces(self, s: float, t: float) -> list[tuple[float, float]]:
        """(duration, value) for every piece overlapping ``[s, t]``."""
        edges = list(self.starts[1:]) + [math.inf]
        out = []
        for start, end, value in zip(self.starts, edges, self.values):
            lo, hi = max(start, s), min(end, t)
            if hi > lo:
                out.append((hi - lo, value))
        return out

    def integral_of_square(self, s: float, t: float) -> float:
        return math.fsum(d * v * v for d, v in self.pieces(s, t))


@dataclass(frozen=True)
class LevyMeasure:
    """Finite-activity jump measure: jump size ``zeta[j]`` arrives at rate ``lam[j]``."""

    zeta: tuple[float, ...] = ()
    lam: tuple[float, ...] = ()

    def __post_init__(self):
        zeta = tuple(float(z) for z in self.zeta)
        lam = tuple(float(v) for v in self.lam)
        if len(zeta) != len(lam):
            raise ValueError("zeta and lam must have equal length")
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, float]]) -> "LevyMeasure":
        atoms = list(atoms)
        return cls(tuple(a[0] for a in atoms), tuple(a[1] for a in atoms))

    def __len__(self) -> int:
        return len(self.zeta)

    @property
    def total_intensity(self) -> float:
        return math.fsum(self.lam)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.zeta, self.lam))


@dataclass(frozen=True)
class MarketParams:
    """Constant market coefficients.

    ``gamma[j]`` is the relative price jump caused by atom ``j`` of ``nu``.
    ``y`` is the level whose local time enters the stock drift.
    """

    r: float = 0.0
    mu: float = 0.1
    sigma: float = 0.2
    alpha: float = 0.0
    T: float = 1.0
    y: float = 0.0
    nu: LevyMeasure = field(default_factory=LevyMeasure)
    gamma: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))


@dataclass(frozen=True)
class DriverSpec:
    """Coefficients of the process whose local time drives the stock.

    ``psi[j]`` is the jump response of the driver to atom ``j``; an empty
    tuple means the driver does not jump.
    """

    phi: PiecewiseConstant = field(default_factory=lambda: PiecewiseConstant.constant(1.0))
    psi: tuple[PiecewiseConstant, ...] = ()

    def psi_for(self, nu: LevyMeasure) -> tuple[PiecewiseConstant, ...]:
        """Per-atom jump responses, padded with zeros to the size of ``nu``."""
        zero = PiecewiseConstant.constant(0.0)
        return tuple(self.psi) + (zero,) * (len(nu) - len(self.psi))

    def is_brownian(self, nu: LevyMeasure) -> bool:
        """True when the driver is exactly the Brownian motion."""
        if not (self.phi.is_constant and self.phi.values[0] == 1.0):
            return False
        return all(all(v == 0.0 for v in p.values) for p in self.psi_for(nu))

    def continuous_variance(self, s: float, t: float) -> float:
        return self.phi.integral_of_square(s, t)

    def jump_variance(self, nu: LevyMeasure, s: float, t: float) -> float:
        return math.fsum(
            lam * p.integral_of_square(s, t) for lam, p in zip(nu.lam, self.psi_for(nu))
        )


def brownian_driver() -> DriverSpec:
    return DriverSpec(phi=PiecewiseConstant.constant(1.0))


@dataclass(frozen=True)
class UtilityWeights:
    """Weights of log-consumption (``a``) and log-terminal-wealth (``b``)."""

    a: float = 0.0
    b: float = 1.0


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "valid" if self.ok else "; ".join(self.violations)


def validate_market(
    params: MarketParams,
    driver: DriverSpec,
    weights: UtilityWeights | None = None,
) -> ValidationReport:
    """Check the standing assumptions of the model and list every violation."""
    v = []
    finite = {k: getattr(params, k) for k in ("r", "mu", "sigma", "alpha", "T", "y")}
    for name, value in finite.items():
        if not math.isfinite(value):
            v.append(f"{name} must be finite")
    if not params.sigma > 0:
        v.append("sigma must be > 0")
    if not params.T > 0:
        v.append("T must be > 0")
    nu = params.nu
    for j, (z, lam) in enumerate(nu.atoms):
        if z == 0 or not math.isfinite(z):
            v.append(f"jump size must be nonzero and finite (atom {j})")
        if not (lam > 0 and math.isfinite(lam)):
            v.append(f"jump intensity must be > 0 and finite (atom {j})")
    if len(params.gamma) != len(nu):
        v.append(f"gamma needs one value per atom ({len(params.gamma)} given, {len(nu)} atoms)")
    for j, g in enumerate(params.gamma):
        if not (g > 0 and math.isfinite(g)):
            v.append(f"gamma must be > 0 (atom {j})")
    if len(driver.psi) > len(nu):
        v.append("driver psi has more entries than there are atoms")
    else:
        v.extend(_driver_violations(driver, nu, params.T))
    if weights is not None:
        if not weights.a >= 0:
            v.append("a must be >= 0")
        if not weights.b > 0:
            v.append("b must be > 0")
    return ValidationReport(v)


def _driver_violations(driver: DriverSpec, nu: LevyMeasure, T: float) -> list[str]:
    funcs = (driver.phi,) + driver.psi_for(nu)
    values = [x for f in funcs for x in f.values]
    if not all(math.isfinite(x) for x in values):
        return ["driver coefficients must be finite"]
    if not T > 0:
        return []
    # Constant pieces: the forward variance is positive on every [t, T) iff it
    # is positive on the last piece before T.
    last = max(s for f in funcs for s in f.starts if s < T)
    rate = driver.phi(last) ** 2 + math.fsum(
        lam * p(last) ** 2 for lam, p in zip(nu.lam, driver.psi_for(nu))
    )
    if not rate > 0:
        return ["driver variance over [t, T] must be > 0 for every t < T"]
    return []


def levy_integral(nu: LevyMeasure, integrand: Callable[[float], float]) -> float:
    """Integral of ``integrand`` against the jump measure (a weighted atom sum)."""
    terms = []
    for z, lam in nu.atoms:
        value = float(integrand(z))
        if not math.isfinite(value):
            raise DomainError(f"integrand is not finite at jump size {z}")
        terms.append(value * lam)
    return math.fsum(terms)
