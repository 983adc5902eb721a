"""Experiment configuration: an INI-style text file with CLI overrides.

Values are resolved as CLI flag, then config file, then built-in default.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .donsker import QuadConfig
from .errors import ConfigError
from .market import DriverSpec, LevyMeasure, MarketParams, PiecewiseConstant, UtilityWeights

__all__ = ["RunSection", "OutputSection", "ExperimentConfig", "load_config", "parse_config"]

_MARKET_KEYS = ("r", "mu", "sigma", "alpha", "T", "y")
_RUN_DEFAULTS = {
    "theta": "0.1",
    "n_steps": "1000",
    "n_paths": "10000",
    "seed": "20240601",
    "epsilon_c": "2.0",
    "tail_tol": "1e-12",
    "nodes_per_unit": "16",
    "workers": "1",
    "early": "frozen",
    "form": "pointwise",
    "on_violation": "raise",
    "lt_steps": "100, 1000, 10000",
    "dump_paths": "5",
}
_TUPLE = re.compile(r"\(([^()]*)\)")


def _num(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class RunSection:
    theta: tuple[float, ...] = (0.1,)
    n_steps: int = 1000
    n_paths: int = 10000
    seed: int = 20240601
    epsilon_c: float = 2.0
    tail_tol: float = 1e-12
    nodes_per_unit: int = 16
    workers: int = 1
    early: str = "frozen"
    form: str = "pointwise"
    on_violation: str = "raise"
    lt_steps: tuple[int, ...] = (100, 1000, 10000)
    dump_paths: int = 5

    @property
    def quad(self) -> QuadConfig:
        return QuadConfig(tail_tol=self.tail_tol, nodes_per_unit=self.nodes_per_unit)


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    svg: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketParams
    driver: DriverSpec
    weights: UtilityWeights = field(default_factory=UtilityWeights)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)
    # raw text of every [levy]/[driver] value, kept for resolved.cfg
    raw: dict = field(default_factory=dict, compare=False)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Apply CLI overrides; ``None`` values are ignored."""
        run = {k: v for k, v in kw.items() if k in RunSection.__dataclass_fields__ and v is not None}
        out = {k: v for k, v in kw.items() if k in OutputSection.__dataclass_fields__ and v is not None}
        if "theta" in run:
            run["theta"] = tuple(run["theta"])
        cfg = replace(self, run=replace(self.run, **run), output=replace(self.output, **out))
        _check_run(cfg.run)
        return cfg

    def to_text(self) -> str:
        """Every effective value in the config file format."""
        m, r = self.market, self.run
        lines = ["[market]"]
        lines += [f"{k} = {_num(getattr(m, k))}" for k in _MARKET_KEYS]
        lines += ["", "[levy]", f"atoms = {self.raw.get('atoms', '')}".rstrip()]
        lines += ["", "[driver]", f"phi = {self.raw.get('phi', '1')}"]
        lines += ["", "[weights]", f"a = {_num(self.weights.a)}", f"b = {_num(self.weights.b)}"]
        lines += [
            "", "[run]",
            "theta = " + ", ".join(_num(t) for t in r.theta),
            f"n_steps = {r.n_steps}",
            f"n_paths = {r.n_paths}",
            f"seed = {r.seed}",
            f"epsilon_c = {_num(r.epsilon_c)}",
            f"tail_tol = {_num(r.tail_tol)}",
            f"nodes_per_unit = {r.nodes_per_unit}",
            f"workers = {r.workers}",
            f"early = {r.early}",
            f"form = {r.form}",
            f"on_violation = {r.on_violation}",
            "lt_steps = " + ", ".join(str(n) for n in r.lt_steps),
            f"dump_paths = {r.dump_paths}",
        ]
        lines += ["", "[output]", f"dir = {self.output.dir}", f"svg = {str(self.output.svg).lower()}"]
        return "\n".join(lines) + "\n"


def _real(section: str, key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key}: value must be finite")
    return value


def _integer(section: str, key: str, text: str, minimum: int = 0) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: {text!r} is not an integer") from None
    if value < minimum:
        raise ConfigError(f"[{section}] {key}: must be >= {minimum}")
    return value


def _real_list(section: str, key: str, text: str) -> tuple[float, ...]:
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    if not items:
        raise ConfigError(f"[{section}] {key}: empty list")
    return tuple(_real(section, key, s) for s in items)


def parse_step_function(text: str) -> PiecewiseConstant:
    """``"1.0"`` or ``"0:1.0, 0.5:2.0"`` (piece start ``:`` value)."""
    where = "[driver] phi"
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError(f"{where}: empty value")
    if len(items) == 1 and ":" not in items[0]:
        return PiecewiseConstant.constant(_real("driver", "phi", items[0]))
    starts, values = [], []
    for item in items:
        if item.count(":") != 1:
            raise ConfigError(f"{where}: piece {item!r} must be start:value")
        s, v = item.split(":")
        starts.append(_real("driver", "phi", s))
        values.append(_real("driver", "phi", v))
    try:
        return PiecewiseConstant(tuple(starts), tuple(values))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_atoms(text: str):
    text = text.strip()
    if not text:
        return LevyMeasure(), (), ()
    tuples = _TUPLE.findall(text)
    if not tuples or _TUPLE.sub("", text).strip(" ,;\n") != "":
        raise ConfigError("[levy] atoms: expected (zeta, lambda, gamma, psi) tuples")
    atoms, gamma, psi = [], [], []
    for j, body in enumerate(tuples):
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != 4:
            raise ConfigError(f"[levy] atoms: atom {j} needs 4 fields (zeta, lambda, gamma, psi)")
        zeta, lam, g, p = (_real("levy", "atoms", x) for x in parts)
        atoms.append((zeta, lam))
        gamma.append(g)
        psi.append(PiecewiseConstant.constant(p))
    return LevyMeasure.from_atoms(atoms), tuple(gamma), tuple(psi)


def _check_run(run: RunSection):
    if any(not t > 0 for t in run.theta):
        raise ConfigError("[run] theta: every delay must be > 0")
    if run.n_steps < 1:
        raise ConfigError("[run] n_steps: must be >= 1")
    if run.n_paths < 0:
        raise ConfigError("[run] n_paths: must be >= 0")
    if not 0 <= run.seed < 2**64:
        raise ConfigError("[run] seed: must lie in [0, 2**64)")
    if not run.epsilon_c > 0:
        raise ConfigError("[run] epsilon_c: must be > 0")
    if not 0 < run.tail_tol < 1:
        raise ConfigError("[run] tail_tol: must lie in (0, 1)")
    if run.nodes_per_unit < 16:
        raise ConfigError("[run] nodes_per_unit: must be >= 16")
    if run.workers < 1:
        raise ConfigError("[run] workers: must be >= 1")
    for key, allowed in (
        ("early", ("frozen", "prior")),
        ("form", ("pointwise", "paper")),
        ("on_violation", ("raise", "clamp")),
    ):
        if getattr(run, key) not in allowed:
            raise ConfigError(f"[run] {key}: must be one of {', '.join(allowed)}")
    if not run.lt_steps or min(run.lt_steps) < 1:
        raise ConfigError("[run] lt_steps: needs positive step counts")


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keep "T" distinct from "t"
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    known = {"market", "levy", "driver", "weights", "run", "output"}
    unknown = [s for s in cp.sections() if s not in known]
    if unknown:
        raise ConfigError(f"unknown section [{unknown[0]}]")
    if not cp.has_section("market"):
        raise ConfigError("missing section [market]")
    for section, allowed in (
        ("market", _MARKET_KEYS), ("levy", ("atoms",)), ("driver", ("phi",)),
        ("weights", ("a", "b")), ("run", tuple(_RUN_DEFAULTS)), ("output", ("dir", "svg")),
    ):
        if cp.has_section(section):
            extra = [k for k in cp[section] if k not in allowed]
            if extra:
                raise ConfigError(f"[{section}] {extra[0]}: unknown key")

    mk = cp["market"]
    market_vals = {}
    for key in _MARKET_KEYS:
        if key not in mk:
            raise ConfigError(f"[market] {key}: missing")
        market_vals[key] = _real("market", key, mk[key])

    atoms_text = cp.get("levy", "atoms", fallback="")
    nu, gamma, psi = _parse_atoms(atoms_text)
    phi_text = cp.get("driver", "phi", fallback="1")
    driver = DriverSpec(phi=parse_step_function(phi_text), psi=psi)
    market = MarketParams(nu=nu, gamma=gamma, **market_vals)

    weights = UtilityWeights(
        a=_real("weights", "a", cp.get("weights", "a", fallback="0")),
        b=_real("weights", "b", cp.get("weights", "b", fallback="1")),
    )

    rv = dict(_RUN_DEFAULTS)
    if cp.has_section("run"):
        rv.update(cp["run"])
    run = RunSection(
        theta=_real_list("run", "theta", rv["theta"]),
        n_steps=_integer("run", "n_steps", rv["n_steps"], 1),
        n_paths=_integer("run", "n_paths", rv["n_paths"], 0),
        seed=_integer("run", "seed", rv["seed"], 0),
        epsilon_c=_real("run", "epsilon_c", rv["epsilon_c"]),
        tail_tol=_real("run", "tail_tol", rv["tail_tol"]),
        nodes_per_unit=_integer("run", "nodes_per_unit", rv["nodes_per_unit"], 16),
        workers=_integer("run", "workers", rv["workers"], 1),
        early=rv["early"].strip(),
        form=rv["form"].strip(),
        on_violation=rv["on_violation"].strip(),
        lt_steps=tuple(
            _integer("run", "lt_steps", s, 1) for s in re.split(r"[,\s]+", rv["lt_steps"].strip()) if s
        ),
        dump_paths=_integer("run", "dump_paths", rv["dump_paths"], 0),
    )
    _check_run(run)

    svg_text = cp.get("output", "svg", fallback="false").strip().lower()
    if svg_text not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
        raise ConfigError("[output] svg: must be true or false")
    output = OutputSection(
        dir=cp.get("output", "dir", fallback="out").strip(),
        svg=svg_text in ("true", "yes", "1", "on"),
    )
    raw = {"atoms": " ".join(atoms_text.split()), "phi": " ".join(phi_text.split())}
    return ExperimentConfig(market, driver, weights, run, output, raw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
