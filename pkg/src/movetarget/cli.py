"""Command line front end.

Subcommands: solve, lambda, simulate, verify, report.  One JSON config file
per run; flags override config values.  Every output directory receives a
run_config.json sidecar with the fully resolved configuration so each number
is regenerable.  Exit codes: 0 success / verification PASS, 1 parse or
config error, 2 solver error (NoSolution, DegenerateDenominator,
NoTerminalLimit, SingularSigma), 3 verification FAIL.

The default output directory is $MOVETARGET_OUT, else './out'.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as mio
from .coeffs import (
    FeedbackControl,
    Utility,
    feedback_control,
    find_lambda_star,
    solve_cubic_coeffs,
    solve_quadratic_coeffs,
    solve_quartic_coeffs,
)
from .errors import (
    ConfigError,
    DegenerateDenominator,
    MoveTargetError,
    NoSolution,
    NoTerminalLimit,
    SingularSigma,
    ZeroTheta,
)
from .market import build_market
from .report import render_report
from .sim import Measure, Scheme, SimulationConfig, simulate_wealth
from .verify import run_verification

_SOLVER_ERRORS = (NoSolution, DegenerateDenominator, NoTerminalLimit, SingularSigma, ZeroTheta)


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _resolve_out(args) -> Path:
    out = args.out or os.environ.get("MOVETARGET_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _utility(name: str) -> Utility:
    try:
        return {
            "quadratic": Utility.QUADRATIC,
            "cubic": Utility.CUBIC,
            "quartic": Utility.QUARTIC,
            "negative_part": Utility.NEGATIVE_PART,
            "x-": Utility.NEGATIVE_PART,
        }[name]
    except KeyError as exc:
        raise ConfigError(f"unknown utility {name!r}") from exc


def _solve_for(market, utility: Utility, config: dict):
    if utility is Utility.QUADRATIC:
        if "lambda" in config:
            return solve_quadratic_coeffs(market, _lambda_from_config(market, config))
        _, curves = find_lambda_star(market)
        return curves
    if utility is Utility.CUBIC:
        return solve_cubic_coeffs(market)
    if utility is Utility.QUARTIC:
        return solve_quartic_coeffs(market)
    raise ConfigError("solve supports quadratic, cubic and quartic utilities")


def _lambda_from_config(market, config):
    lam = config["lambda"]
    if isinstance(lam, dict):
        from .market import Curve

        return Curve(np.asarray(lam["grid"], float), np.asarray(lam["values"], float))
    return float(lam)


def _control_for(market, utility: Utility, config: dict) -> FeedbackControl:
    if utility is Utility.NEGATIVE_PART:
        return FeedbackControl.zero(market, utility)
    return feedback_control(_solve_for(market, utility, config), market)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_solve(args) -> int:
    config = _load_config(args.config)
    market = build_market(config["market"])
    utility = _utility(args.utility or config.get("utility", "quadratic"))
    curves = _solve_for(market, utility, config)
    out = _resolve_out(args)
    mio.write_coefficient_curves(curves, market, mio.curves_csv_path(out))
    mio.write_sidecar(out, {"config": config, "utility": utility.value}, "solve")
    print(f"wrote {mio.curves_csv_path(out)}")
    return 0


def _cmd_lambda(args) -> int:
    config = _load_config(args.config)
    market = build_market(config["market"])
    out = _resolve_out(args)
    try:
        lam, curves = find_lambda_star(market)
    except (NoSolution, ZeroTheta) as exc:
        diag = {"error": type(exc).__name__, "detail": str(exc)}
        mio.write_json(diag, out / "lambda_diagnostic.json")
        print(f"no multiplier: {exc}", file=sys.stderr)
        return 2
    mio.write_lambda_curve(lam, out / "lambda.csv")
    mio.write_coefficient_curves(curves, market, mio.curves_csv_path(out))
    mio.write_sidecar(out, {"config": config}, "lambda")
    print(f"wrote {out / 'lambda.csv'}")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    market = build_market(config["market"])
    utility = _utility(args.utility or config.get("utility", "quadratic"))
    control = _control_for(market, utility, config)
    cfg = SimulationConfig(
        n_paths=args.paths or int(config.get("paths", 10_000)),
        n_steps=args.steps or int(config.get("steps", 256)),
        seed=args.seed if args.seed is not None else int(config.get("seed", 0)),
        scheme=Scheme.EXACT_LOG if (args.scheme or config.get("scheme", "exact")) == "exact"
        else Scheme.EULER_MARUYAMA,
        measure=Measure.RISK_NEUTRAL
        if (args.measure or config.get("measure", "physical")) == "risk_neutral"
        else Measure.PHYSICAL,
        antithetic=bool(config.get("antithetic", False)),
    )
    x0 = args.x0 if args.x0 is not None else float(config.get("x0", 1.0))
    ensemble = simulate_wealth(market, control, x0, cfg)
    out = _resolve_out(args)
    mio.write_ensemble_csv(ensemble, out / "ensemble.csv")
    mio.write_json(ensemble.terminal_summary(), out / "summary.json")
    mio.write_sidecar(
        out,
        {
            "config": config,
            "utility": utility.value,
            "x0": x0,
            "paths": cfg.n_paths,
            "steps": cfg.n_steps,
            "seed": cfg.seed,
            "scheme": cfg.scheme.value,
            "measure": cfg.measure.value,
        },
        "simulate",
    )
    print(f"wrote {out / 'ensemble.csv'} and {out / 'summary.json'}")
    return 0


def _cmd_verify(args) -> int:
    config = _load_config(args.config)
    market = build_market(config["market"])
    utility = _utility(args.utility or config.get("utility", "quadratic"))
    out = _resolve_out(args)
    curves = None
    if args.curves:
        curves = mio.read_coefficient_curves(args.curves, market)
    report = run_verification(
        market,
        utility,
        x0=args.x0 if args.x0 is not None else float(config.get("x0", 1.0)),
        seed=args.seed if args.seed is not None else int(config.get("seed", 0)),
        n_paths=args.paths or int(config.get("paths", 20_000)),
        epsilons=tuple(config.get("epsilons", (0.1, 0.05, 0.025))),
        curves=curves,
    )
    mio.write_json(report.to_dict(), out / "report.json")
    mio.write_sidecar(out, {"config": config, "utility": utility.value}, "verify")
    print(f"verdict: {report.verdict} -> {out / 'report.json'}")
    return 0 if report.verdict == "PASS" else 3


def _cmd_report(args) -> int:
    out = render_report(args.indir, args.out, figures=not args.no_figures)
    print(out.read_text(), end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="movetarget",
        description="Equilibrium portfolio controls under a moving wealth target",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--x0", type=float, default=None)

    p_solve = sub.add_parser("solve", help="solve coefficient curves, write CSV")
    add_common(p_solve)
    p_solve.add_argument("--utility", choices=["quadratic", "cubic", "quartic"])
    p_solve.set_defaults(func=_cmd_solve)

    p_lambda = sub.add_parser("lambda", help="find the target-restoring multiplier")
    add_common(p_lambda)
    p_lambda.set_defaults(func=_cmd_lambda)

    p_sim = sub.add_parser("simulate", help="simulate the wealth SDE")
    add_common(p_sim)
    p_sim.add_argument("--utility", choices=["quadratic", "cubic", "quartic", "negative_part"])
    p_sim.add_argument("--paths", type=int, default=None)
    p_sim.add_argument("--steps", type=int, default=None)
    p_sim.add_argument("--scheme", choices=["exact", "euler"], default=None)
    p_sim.add_argument("--measure", choices=["physical", "risk_neutral"], default=None)
    p_sim.set_defaults(func=_cmd_simulate)

    p_ver = sub.add_parser("verify", help="full equilibrium verification")
    add_common(p_ver)
    p_ver.add_argument(
        "--utility", choices=["quadratic", "cubic", "quartic", "negative_part"]
    )
    p_ver.add_argument("--paths", type=int, default=None)
    p_ver.add_argument("--curves", default=None, help="re-ingest a solved coeffs.csv")
    p_ver.set_defaults(func=_cmd_verify)

    p_rep = sub.add_parser("report", help="render summary table, plot CSVs and figures")
    p_rep.add_argument("--in", dest="indir", required=True)
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--no-figures", action="store_true")
    p_rep.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _SOLVER_ERRORS as exc:
        print(f"solver error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MoveTargetError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
