"""Run artifacts: regret CSVs, bound curves, run metadata and the SVG chart.

Floats are written with 17 significant digits through ``format`` so files do
not depend on the locale, and rows are emitted in a fixed order so equal
runs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .bounds import BoundReport, Infeasible, evaluate_bounds
from .simulation import ExperimentResult, STREAM_LAYOUT

REGRET_HEADER = ["scenario", "policy", "replication", "task_index", "round",
                 "instant_regret", "cum_regret"]
TRANSFER_HEADER = ["scenario", "policy", "round", "mean_cum_regret", "std_cum_regret", "n"]
BOUNDS_HEADER = ["round", "proposition1", "proposition2", "theorem1"]

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def fmt(x) -> str:
    return format(float(x), ".17g")


def _writer(path: Path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_regret_csv(path, scenario: str, result: ExperimentResult) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(REGRET_HEADER)
        for policy in sorted(result.policies):
            inst = result.instant(policy)
            cum = np.cumsum(inst, axis=2)
            for rep in range(inst.shape[0]):
                for task in range(inst.shape[1]):
                    for t in range(inst.shape[2]):
                        w.writerow([scenario, policy, rep, task, t + 1,
                                    fmt(inst[rep, task, t]), fmt(cum[rep, task, t])])
    return path


def write_transfer_csv(path, scenario: str, result: ExperimentResult) -> Path:
    path = Path(path)
    est = result.transfer_estimate()
    fh, w = _writer(path)
    with fh:
        w.writerow(TRANSFER_HEADER)
        for policy in sorted(est.per_policy):
            curve = est.per_policy[policy]
            for t in range(curve.mean.shape[0]):
                w.writerow([scenario, policy, t + 1, fmt(curve.mean[t]),
                            fmt(curve.std[t]), curve.n])
    return path


def write_bounds_csv(path, report: BoundReport) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(BOUNDS_HEADER)
        rows = zip(report.proposition1_curve, report.proposition2_curve, report.theorem1_curve)
        for t, (p1, p2, th) in enumerate(rows, start=1):
            w.writerow([t, fmt(p1), fmt(p2), fmt(th)])
    return path


def scenario_bounds(config, result: ExperimentResult | None, t0: int) -> BoundReport:
    """Bound curves for a scenario, using training eigenvalues when available."""
    mix = config.mixture
    variances = [e.variance_about_mean() for e in mix.environments]
    second = [v + float(mu @ mu) for v, mu in zip(variances, mix.means)]
    eigs = None
    if result is not None and result.replications:
        eigs = result.replications[0].training_min_eigenvalues
        if not any(eigs):
            eigs = None
    return evaluate_bounds(
        T=config.horizon, T0=t0, d=mix.dim, L=config.actions.norm_bound, lam=config.lam,
        R=config.noise_R, S=config.resolved_S(), delta=config.resolved_delta(),
        probabilities=list(mix.probabilities), variances=variances, second_moments=second,
        gamma=mix.gamma, K=config.sub_gaussian_K(), counts=list(config.training_tasks),
        pooled_second_moment=mix.pooled_variance(), min_eigenvalues=eigs,
    )


def approximation_flags(config) -> dict:
    policies = set(config.policies)
    families = sorted({e.family.value for e in config.mixture.environments})
    flags = {
        "bias_distance_mode": config.bias_oracle.mode.value,
        "bound_constants": "C=1 (shape up to universal constants)",
        "exploration_regret_charged": True,
        "exploration_estimate": "unregularized least squares on exploration rounds",
    }
    if "gaussian" in families:
        flags["gaussian_support"] = ("untruncated Gaussian task parameters; "
                                     "S resolved as max ||mu|| + 4 K sqrt(d)")
    if "RR-OFUL" in policies:
        flags["rr_oful_stand_in"] = ("pooled average of d-round round-robin prefix estimates "
                                     "taken from each training task")
    if "Oracle" in policies:
        flags["oracle_knows_label"] = "Oracle uses the true mean of the task's environment"
    if "AVG-OFUL" in policies:
        flags["avg_oful"] = "pooled average of all training estimates, labels ignored"
    return flags


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_metadata(path, config, *, t0: int, t0_warning: str | None, report: BoundReport,
                   version: str, backend: str, wall_clock: float, replications: int,
                   root_seed: int, misclassification_rate: float | None) -> Path:
    path = Path(path)
    t0_formula = report.t0_lower_bound
    meta = {
        "config": config.echo(),
        "resolved": {
            "T0": t0,
            "T0_formula": (t0_formula.reason if isinstance(t0_formula, Infeasible)
                           else t0_formula),
            "T0_warning": t0_warning,
            "delta": config.resolved_delta(),
            "S": config.resolved_S(),
            "n_replications": replications,
            "root_seed": root_seed,
        },
        "bound_constants": "C=1",
        "bounds": {
            "note": report.note,
            "tau": report.tau_bound,
            "n_condition_satisfied": report.n_condition_satisfied,
            "delta_interval": list(report.delta_interval),
            "delta_admissible": report.delta_admissible,
        },
        "rng_streams": STREAM_LAYOUT,
        "approximations": approximation_flags(config),
        "misclassification_rate": misclassification_rate,
        "software": {"package": "meml-bandits", "version": version, "backend": backend},
        "wall_clock_seconds": wall_clock,
    }
    path.write_text(json.dumps(_json_safe(meta), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


# -- chart ------------------------------------------------------------------

def read_transfer_csv(path) -> tuple[str, dict]:
    """Return the scenario name and ``{policy: (rounds, mean, std)}``."""
    series: dict = {}
    scenario = ""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRANSFER_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            scenario = row["scenario"]
            r, m, s = series.setdefault(row["policy"], ([], [], []))
            r.append(int(row["round"]))
            m.append(float(row["mean_cum_regret"]))
            s.append(float(row["std_cum_regret"]))
    return scenario, series


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for step in (1, 2, 2.5, 5, 10):
        if step * mag >= v:
            return step * mag
    return 10 * mag


def render_svg(transfer_csv, svg_path, width: int = 640, height: int = 420) -> Path:
    """Line chart of mean cumulative regret with +-1 std bands, from the CSV alone."""
    scenario, series = read_transfer_csv(transfer_csv)
    if not series:
        raise ValueError(f"{transfer_csv}: no data rows")
    left, right, top, bottom = 64, 150, 36, 48
    pw, ph = width - left - right, height - top - bottom
    t_max = max(max(r) for r, _, _ in series.values())
    y_top = _nice_max(max(max(m + s for m, s in zip(ms, ss)) for _, ms, ss in series.values()))

    def sx(t):
        return left + pw * (t / t_max if t_max else 0.0)

    def sy(y):
        return top + ph * (1.0 - max(y, 0.0) / y_top)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left + pw / 2:.2f}" y="20" text-anchor="middle" font-size="14">'
           f'{escape(scenario)}: transfer regret</text>']
    # axes and ticks
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for k in range(6):
        yv = y_top * k / 5
        y = sy(yv)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 7}" y="{y + 4:.2f}" text-anchor="end">{yv:.4g}</text>')
    for k in range(6):
        tv = t_max * k / 5
        x = sx(tv)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 17}" text-anchor="middle">{tv:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 8}" text-anchor="middle">round t</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.2f})">mean cumulative regret</text>')

    for i, policy in enumerate(sorted(series)):
        color = PALETTE[i % len(PALETTE)]
        rounds, means, stds = series[policy]
        upper = [f"{sx(t):.2f},{sy(m + s):.2f}" for t, m, s in zip(rounds, means, stds)]
        lower = [f"{sx(t):.2f},{sy(m - s):.2f}" for t, m, s in zip(rounds, means, stds)]
        out.append(f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{color}" '
                   f'fill-opacity="0.18" stroke="none"/>')
        line = " ".join(f"{sx(t):.2f},{sy(m):.2f}" for t, m in zip(rounds, means))
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 14 + 20 * i
        lx = left + pw + 14
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{lx + 28}" y="{ly + 4}">{escape(policy)}</text>')
    out.append("</svg>")
    svg_path = Path(svg_path)
    svg_path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return svg_path
