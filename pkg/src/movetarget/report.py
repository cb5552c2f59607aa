"""Human-readable summaries, plot-ready CSVs and figures for run outputs.

Reads whatever a solve/lambda/simulate/verify run left in a directory and
renders: a summary table (report.txt), plot-ready CSVs (time vs gain and
residual, slope vs eps), and matplotlib PNG figures next to them (opt out
with --no-figures).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _read_csv(path: Path) -> list[dict]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def render_report(indir, outdir=None, figures: bool = True) -> Path:
    indir = Path(indir)
    outdir = Path(outdir) if outdir is not None else indir
    outdir.mkdir(parents=True, exist_ok=True)
    lines: list[str] = []

    coeffs = indir / "coeffs.csv"
    if coeffs.exists():
        rows = _read_csv(coeffs)
        lines += _coeffs_section(rows, outdir, figures)

    report_json = indir / "report.json"
    if report_json.exists():
        rep = json.loads(report_json.read_text())
        lines += _verify_section(rep, outdir, figures)

    summary_json = indir / "summary.json"
    if summary_json.exists():
        summ = json.loads(summary_json.read_text())
        lines += _sim_section(summ)

    if not lines:
        lines = [f"nothing to report in {indir}"]
    out = outdir / "report.txt"
    out.write_text("\n".join(lines) + "\n")
    return out


def _coeffs_section(rows, outdir: Path, figures: bool) -> list[str]:
    s = [float(r["s"]) for r in rows]
    resid = [float(r["residual"]) for r in rows]
    alpha_cols = sorted(k for k in rows[0] if k.startswith("alpha_") and rows[0][k] != "")
    alphas = {c: [float(r[c]) for r in rows] for c in alpha_cols}

    plot_csv = outdir / "curves_plot.csv"
    with plot_csv.open("w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + alpha_cols + ["residual"])
        for i, t in enumerate(s):
            w.writerow([t] + [alphas[c][i] for c in alpha_cols] + [resid[i]])

    if figures:
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(6, 4))
        for c in alpha_cols:
            ax.plot(s, alphas[c], label=c)
        ax.set_xlabel("time")
        ax.set_ylabel("gain")
        ax.legend()
        fig.tight_layout()
        fig.savefig(outdir / "gain.png", dpi=130)
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(s, resid)
        ax.set_xlabel("time")
        ax.set_ylabel("equilibrium residual")
        fig.tight_layout()
        fig.savefig(outdir / "residual.png", dpi=130)
        plt.close(fig)

    sup = max(abs(x) for x in resid)
    head = ["coefficient curves", "-" * 60]
    head.append(f"  grid points : {len(s)}  horizon {s[-1]:g}")
    for c in alpha_cols:
        head.append(f"  {c:10s}: start {alphas[c][0]:+.6g}  end {alphas[c][-1]:+.6g}")
    head.append(f"  sup|residual| = {sup:.3e}")
    head.append(f"  plot data -> {plot_csv.name}")
    return head + [""]


def _verify_section(rep: dict, outdir: Path, figures: bool) -> list[str]:
    lines = ["equilibrium verification", "-" * 60]
    lines.append(f"  utility : {rep.get('utility')}")
    lines.append(f"  verdict : {rep.get('verdict')}")
    if rep.get("residual_sup") is not None:
        lines.append(
            f"  residual sup = {rep['residual_sup']:.3e} (tol {rep['residual_tol']:g})"
        )
    for reason in rep.get("reasons", []):
        lines.append(f"  FAIL reason: {reason['code']}")

    slope_rows = []
    for ladder in rep.get("slopes", []):
        vtxt = ",".join(f"{x:+g}" for x in ladder["v"])
        for rec in ladder["records"]:
            slope_rows.append((vtxt, rec["eps"], rec["slope"], rec["stderr"]))
            lines.append(
                f"  v=[{vtxt}] eps={rec['eps']:<7g} slope={rec['slope']:+.4e}"
                f" +- {rec['stderr']:.2e}"
            )
    if slope_rows:
        plot_csv = outdir / "slopes_plot.csv"
        with plot_csv.open("w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["v", "eps", "slope", "stderr"])
            w.writerows(slope_rows)
        lines.append(f"  plot data -> {plot_csv.name}")
        if figures:
            plt = _pyplot()
            fig, ax = plt.subplots(figsize=(6, 4))
            by_v: dict = {}
            for vtxt, eps, slope, stderr in slope_rows:
                by_v.setdefault(vtxt, []).append((eps, slope, stderr))
            for vtxt, recs in by_v.items():
                recs.sort()
                ax.errorbar(
                    [r[0] for r in recs],
                    [r[1] for r in recs],
                    yerr=[3 * r[2] for r in recs],
                    marker="o",
                    capsize=3,
                    label=f"v=[{vtxt}]",
                )
            ax.axhline(0.0, color="k", lw=0.8)
            ax.set_xlabel("eps")
            ax.set_ylabel("spike slope")
            ax.legend()
            fig.tight_layout()
            fig.savefig(outdir / "slopes.png", dpi=130)
            plt.close(fig)

    if rep.get("negative_part"):
        npc = rep["negative_part"]
        lines.append(
            f"  x^- condition: analytic={npc.get('analytic')}"
            f" violation_fraction={npc.get('empirical_violation_fraction'):.4f}"
        )
    for te in rep.get("target_errors", []):
        lines.append(
            f"  target t={te['t']:<6g} analytic_err={te['analytic_error']:.2e}"
            f" mc={te['signed_estimate']:+.2e} +- {te['stderr']:.2e}"
        )
    return lines + [""]


def _sim_section(summ: dict) -> list[str]:
    lines = ["simulation summary", "-" * 60]
    lines.append(f"  paths : {summ.get('n_paths')}")
    lines.append(f"  E[X_T] = {summ.get('mean'):.6g} +- {summ.get('stderr'):.2e}")
    q = summ.get("quantiles", {})
    if q:
        qtxt = "  ".join(f"q{k}={v:.5g}" for k, v in q.items())
        lines.append(f"  {qtxt}")
    return lines + [""]
