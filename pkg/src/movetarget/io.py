"""CSV/JSON serialization.

CSV dialect: comma-separated, '.' decimal, header row, LF line endings,
numbers at 17 significant digits so curve round-trips are lossless.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .coeffs import CoefficientCurves, Utility, equilibrium_residual
from .errors import ConfigError
from .market import Curve, MarketModel
from .sim import PathEnsemble


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def curves_csv_path(outdir) -> Path:
    return Path(outdir) / "coeffs.csv"


def write_coefficient_curves(
    curves: CoefficientCurves, market: MarketModel, path
) -> Path:
    """Write s, M, N, Gamma, Phi, alpha_1..alpha_d, lambda, residual."""
    path = Path(path)
    resid = equilibrium_residual(curves, market).curve.values
    alpha = curves.alpha.values
    alpha_cols = alpha.shape[1] if alpha.ndim == 2 else 1
    header = (
        ["s", "M", "N", "Gamma", "Phi"]
        + [f"alpha_{i + 1}" for i in range(alpha_cols)]
        + ["lambda", "residual"]
    )
    with path.open("w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, s in enumerate(curves.grid):
            row = [_fmt(s), _fmt(curves.M.values[i])]
            row.append(_fmt(curves.N.values[i]) if curves.N is not None else "")
            row.append(_fmt(curves.Gamma.values[i]))
            row.append(_fmt(curves.Phi.values[i]) if curves.Phi is not None else "")
            if alpha.ndim == 2:
                row.extend(_fmt(a) for a in alpha[i])
            else:
                row.append(_fmt(alpha[i]))
            row.append(_fmt(curves.lambda_.values[i]) if curves.lambda_ is not None else "")
            row.append(_fmt(resid[i]))
            w.writerow(row)
    return path


def read_coefficient_curves(path, market: MarketModel) -> CoefficientCurves:
    """Re-ingest a coeffs.csv written by write_coefficient_curves."""
    path = Path(path)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    grid = np.array([float(r["s"]) for r in rows])
    alpha_cols = sorted(k for k in rows[0] if k.startswith("alpha_"))

    def col(name) -> Optional[np.ndarray]:
        if rows[0].get(name, "") == "":
            return None
        return np.array([float(r[name]) for r in rows])

    M = col("M")
    N = col("N")
    gamma = col("Gamma")
    phi = col("Phi")
    lam = col("lambda")
    if lam is not None:
        utility = Utility.QUADRATIC
        alpha = np.column_stack([col(c) for c in alpha_cols])
    elif phi is not None:
        utility = Utility.QUARTIC
        alpha = col("alpha_1")
    else:
        utility = Utility.CUBIC
        alpha = col("alpha_1")
    rhat = market.r(grid) - (lam if lam is not None else market.mu(grid))
    return CoefficientCurves(
        utility=utility,
        M=Curve(grid, M),
        Gamma=Curve(grid, gamma),
        alpha=Curve(grid, alpha),
        r_hat=Curve(grid, np.atleast_1d(rhat)),
        N=Curve(grid, N) if N is not None else None,
        Phi=Curve(grid, phi) if phi is not None else None,
        lambda_=Curve(grid, lam) if lam is not None else None,
    )


def write_lambda_curve(lam: Curve, path) -> Path:
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "lambda"])
        for s, v in zip(lam.grid, lam.values):
            w.writerow([_fmt(s), _fmt(v)])
    return path


def write_ensemble_csv(ensemble: PathEnsemble, path) -> Path:
    """Long format: path_id, step, time, wealth."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "step", "time", "wealth"])
        for pid in range(ensemble.n_paths):
            for step, (s, x) in enumerate(zip(ensemble.times, ensemble.wealth[pid])):
                w.writerow([pid, step, _fmt(s), _fmt(x)])
    return path


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def write_sidecar(outdir, resolved_config: dict, command: str) -> Path:
    """Provenance sidecar: every emitted number must be regenerable."""
    return write_json(
        {"command": command, "config": resolved_config},
        Path(outdir) / "run_config.json",
    )
