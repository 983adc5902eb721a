"""Command-line front end: ``singular-drift <subcommand> <cfg> [flags]``.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical or
domain error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .control import delayed_policy, write_policy_csv
from .errors import ArgumentError, ConfigError, DomainError
from .local_time import band_epsilon, band_occupation_local_time, expected_local_time, write_local_time_csv
from .market import validate_market
from .paths import (
    TimeGrid, format_float, map_path_blocks, sample_statistics, simulate_paths,
    write_jumps_csv, write_paths_csv,
)
from .performance import (
    SWEEP_COLUMNS, closed_form_applies, closed_form_J_hat, evaluate_J, theta_sweep, write_sweep_csv,
)
from .svg import write_line_chart

__all__ = ["run", "main"]

log = logging.getLogger("singular_drift")

EVALUATE_COLUMNS = (
    "theta", "j_mc", "j_mc_stderr", "j_paper", "j_corrected", "n_clamped", "n_paths", "seed",
)
LOCAL_TIME_COLUMNS = (
    "n_steps", "dt", "epsilon", "lt_mc", "lt_mc_stderr", "lt_expected", "rel_error", "n_paths", "seed",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _theta_list(text: str) -> list[float]:
    try:
        values = [float(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid theta list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty theta list")
    return values


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("cfg", nargs="?", help="config file (same as --config)")
    common.add_argument("--config", metavar="PATH", help="config file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=_nonneg_int, metavar="N")
    common.add_argument("--paths", type=_nonneg_int, metavar="N", help="Monte Carlo paths")
    common.add_argument("--theta", type=_theta_list, metavar="LIST", help="delays, e.g. 0.1,0.05")
    common.add_argument("--svg", action="store_true", default=None, help="also write SVG charts")
    common.add_argument("--workers", type=_nonneg_int, metavar="N", help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="singular-drift", description="Delayed-information portfolio experiments.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    helps = {
        "validate": "check the config and the model assumptions",
        "policy": "dump Lambda, u* and c* trajectories",
        "evaluate": "Monte Carlo value of the delayed optimal policy",
        "closed-form": "explicit value in the Brownian setting (both variants)",
        "sweep": "value over the theta list",
        "local-time": "convergence table of the band local-time estimator",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _resolve(args) -> ExperimentConfig:
    path = args.config or args.cfg
    if args.config and args.cfg and args.config != args.cfg:
        raise ConfigError("give the config either as an argument or with --config, not both")
    if not path:
        raise ConfigError("no config file given")
    cfg = load_config(path)
    return cfg.with_overrides(
        seed=args.seed, n_paths=args.paths, theta=args.theta,
        workers=args.workers or None, dir=args.out, svg=args.svg,
    )


def _check_market(cfg: ExperimentConfig):
    report = validate_market(cfg.market, cfg.driver, cfg.weights)
    if not report.ok:
        raise ConfigError("invalid model: " + "; ".join(report.violations))


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(cfg.to_text(), encoding="utf-8", newline="\n")
    return out


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else format_float(v) for v in row])


def _nan(v):
    return math.nan if v is None else v


def cmd_validate(cfg: ExperimentConfig) -> int:
    report = validate_market(cfg.market, cfg.driver, cfg.weights)
    if report.ok:
        print("valid")
        return 0
    for msg in report.violations:
        print(f"invalid: {msg}", file=sys.stderr)
    return 1


def cmd_policy(cfg: ExperimentConfig) -> int:
    _check_market(cfg)
    out = _out_dir(cfg)
    run = cfg.run
    grid = TimeGrid(cfg.market.T, run.n_steps)
    n = run.dump_paths
    if n == 0:
        raise ConfigError("[run] dump_paths: policy needs at least one path")
    paths = simulate_paths(cfg.driver, cfg.market.nu, grid, n, run.seed)
    write_paths_csv(paths, out / "paths.csv")
    write_jumps_csv(paths, cfg.market.nu, out / "jumps.csv")
    for theta in run.theta:
        pol = delayed_policy(
            paths, cfg.market, cfg.driver, cfg.weights, theta, run.quad,
            form=run.form, on_violation=run.on_violation,
        )
        name = f"policy_theta_{theta!r}.csv" if len(run.theta) > 1 else "policy.csv"
        write_policy_csv(pol, out / name)
        print(f"theta={theta:g} wrote {out / name} ({n} paths, {pol.n_clamped} clamped)")
    return 0


def cmd_evaluate(cfg: ExperimentConfig) -> int:
    _check_market(cfg)
    out = _out_dir(cfg)
    run = cfg.run
    if run.n_paths < 1:
        raise ConfigError("[run] n_paths: evaluate needs at least one path")
    grid = TimeGrid(cfg.market.T, run.n_steps)
    rows = []
    for theta in run.theta:
        rep = evaluate_J(
            cfg.market, cfg.driver, cfg.weights, theta, grid, run.n_paths, run.seed, run.quad,
            early=run.early, form=run.form, on_violation=run.on_violation, n_workers=run.workers,
        )
        rows.append((
            theta, rep.mc_estimate, rep.mc_stderr, _nan(rep.closed_form_paper),
            _nan(rep.closed_form_corrected), rep.n_clamped, rep.n_paths, run.seed,
        ))
        line = f"theta={theta:g} J_mc={rep.mc_estimate:.10g} stderr={rep.mc_stderr:.3g}"
        if rep.closed_form_corrected is not None:
            line += f" J_corrected={rep.closed_form_corrected:.10g} J_paper={rep.closed_form_paper:.10g}"
        print(line)
    _write_rows(out / "evaluate.csv", EVALUATE_COLUMNS, rows)
    return 0


def cmd_closed_form(cfg: ExperimentConfig) -> int:
    _check_market(cfg)
    m = cfg.market
    if not closed_form_applies(m, cfg.driver, cfg.weights):
        raise DomainError(
            "the explicit value needs a = 0, b = 1, r = 0, y = 0, no jumps and a Brownian driver"
        )
    out = _out_dir(cfg)
    rows = []
    for theta in cfg.run.theta:
        paper = closed_form_J_hat(theta, m.mu, m.alpha, m.sigma, m.T, variant="paper")
        corrected = closed_form_J_hat(theta, m.mu, m.alpha, m.sigma, m.T, variant="corrected")
        rows.append((theta, paper, corrected))
        print(f"theta={theta:g} J_paper={paper:.15g} J_corrected={corrected:.15g}")
    _write_rows(out / "closed_form.csv", ("theta", "j_paper", "j_corrected"), rows)
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    _check_market(cfg)
    out = _out_dir(cfg)
    run = cfg.run
    grid = TimeGrid(cfg.market.T, run.n_steps)
    rows = theta_sweep(
        cfg.market, cfg.driver, cfg.weights, run.theta, grid, run.n_paths, run.seed, run.quad,
        early=run.early, form=run.form, on_violation=run.on_violation, n_workers=run.workers,
    )
    write_sweep_csv(rows, out / "sweep.csv")
    for r in rows:
        print(" ".join(f"{k}={getattr(r, k):.10g}" for k in SWEEP_COLUMNS[:5]))
    if cfg.output.svg:
        xs = [r.theta for r in rows]
        series = {
            "J corrected": (xs, [r.j_corrected for r in rows]),
            "J paper": (xs, [r.j_paper for r in rows]),
            "J Monte Carlo": (xs, [r.j_mc for r in rows]),
        }
        write_line_chart(
            out / "sweep.svg", series, title="Optimal value against delay",
            xlabel="theta", ylabel="J", logx=True, logy=True,
        )
    return 0


def cmd_local_time(cfg: ExperimentConfig) -> int:
    _check_market(cfg)
    out = _out_dir(cfg)
    run, m = cfg.run, cfg.market
    if run.n_paths < 2:
        raise ConfigError("[run] n_paths: local-time needs at least two paths")
    expected = expected_local_time(cfg.driver, m.nu, m.y, m.T, run.quad)
    rows = []
    for n in run.lt_steps:
        grid = TimeGrid(m.T, n)
        eps = band_epsilon(grid.dt, run.epsilon_c)
        parts = map_path_blocks(
            lambda b: band_occupation_local_time(b, m.y, eps).terminal,
            cfg.driver, m.nu, grid, run.n_paths, run.seed, n_workers=run.workers,
        )
        st = sample_statistics(np.concatenate(parts))
        rel = (st.mean - expected) / expected if expected > 0 else math.nan
        rows.append((n, grid.dt, eps, st.mean, st.stderr, expected, rel, run.n_paths, run.seed))
        print(f"n_steps={n} L_mc={st.mean:.8g} stderr={st.stderr:.3g} E[L]={expected:.8g} rel={rel:+.4f}")
    _write_rows(out / "local_time_convergence.csv", LOCAL_TIME_COLUMNS, rows)
    if run.dump_paths:
        finest = TimeGrid(m.T, max(run.lt_steps))
        paths = simulate_paths(cfg.driver, m.nu, finest, run.dump_paths, run.seed)
        eps = band_epsilon(finest.dt, run.epsilon_c)
        write_local_time_csv(band_occupation_local_time(paths, m.y, eps), out / "local_time.csv")
    if cfg.output.svg:
        dts = [r[1] for r in rows]
        write_line_chart(
            out / "local_time.svg",
            {"band estimator": (dts, [r[3] for r in rows]), "E[L_T(y)]": (dts, [expected] * len(rows))},
            title="Band local-time estimator against grid step",
            xlabel="dt", ylabel="mean L_T(y)", logx=True,
        )
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "policy": cmd_policy,
    "evaluate": cmd_evaluate,
    "closed-form": cmd_closed_form,
    "sweep": cmd_sweep,
    "local-time": cmd_local_time,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, ArgumentError, FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
