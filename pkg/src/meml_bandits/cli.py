"""Command-line front end.

    meml-bandits run <config> [--seed N] [--out DIR] [--replications K] [--workers W]
    meml-bandits preset <fig-left|fig-middle|fig-right> [same options]
    meml-bandits diagnose <config>
    meml-bandits t0-study <config> [--seed N] [--out DIR] [--tasks N]

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from . import __version__
from ._backend import BACKEND
from .bounds import Infeasible, compute_t0, delta_admissible_interval, n_condition
from .config import PRESETS, ConfigError, ScenarioConfig, parse_config, preset_path
from .environments import assumption_diagnostics
from .estimation import ConfigurationError
from .output import (
    fmt,
    render_svg,
    scenario_bounds,
    write_bounds_csv,
    write_metadata,
    write_regret_csv,
    write_transfer_csv,
)
from .policies import build_bias_set
from .rng import StreamFactory
from .simulation import ExperimentSetup, misclassification_study, run_experiment, run_training_phase

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("meml_bandits")


def run_scenario(config: ScenarioConfig, out_dir=None, *, seed: int | None = None,
                 replications: int | None = None, workers: int | None = None) -> dict:
    """Run every replication of a scenario and write all artifacts."""
    out = Path(out_dir or config.output_dir or f"results/{config.scenario}")
    seed = config.root_seed if seed is None else seed
    reps = config.n_replications if replications is None else replications
    workers = config.workers if workers is None else workers
    if reps < 1:
        raise ConfigError("must be positive", "n_replications")
    t0, warning = config.resolved_t0()
    if warning:
        log.warning(warning)
    cfg = config.meml_config(t0)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RuntimeError(f"output directory {out} is not writable: {exc}") from None

    setup = ExperimentSetup(config.mixture, config.actions, cfg, list(config.policies),
                            list(config.training_tasks), config.n_test_tasks, seed)
    start = time.perf_counter()
    result = run_experiment(setup, reps, workers)
    elapsed = time.perf_counter() - start

    report = scenario_bounds(config, result, t0)
    paths = {
        "regret": write_regret_csv(out / "regret.csv", config.scenario, result),
        "transfer": write_transfer_csv(out / "transfer_regret.csv", config.scenario, result),
        "bounds": write_bounds_csv(out / "bounds.csv", report),
    }
    paths["svg"] = render_svg(paths["transfer"], out / "regret_curves.svg")
    miscl = result.misclassification_rate() if "MEML-OFUL" in config.policies else None
    paths["metadata"] = write_metadata(
        out / "metadata.json", config, t0=t0, t0_warning=warning, report=report,
        version=__version__, backend=BACKEND, wall_clock=elapsed, replications=reps,
        root_seed=seed, misclassification_rate=miscl)
    return {"paths": paths, "result": result, "t0": t0}


def diagnose(config: ScenarioConfig, n_samples: int = 20000) -> list[str]:
    mix = config.mixture
    rng = StreamFactory(config.root_seed).generator("diagnose")
    lines = [f"scenario: {config.scenario}", f"dimension d = {mix.dim}, environments m = {mix.m}"]
    lines += assumption_diagnostics(mix, n_samples, rng).lines()
    K = config.sub_gaussian_K()
    delta = config.resolved_delta()
    lines.append(f"sub-Gaussian constant K = {K:.6g}, delta = {delta:.6g}, R = {config.noise_R:.6g}")
    if mix.m == 2:
        N1, N2 = config.training_tasks
        ok = n_condition(mix.gamma, K, mix.dim, N1, N2) if mix.gamma > 0 else False
        lines.append(f"N-condition gamma^2 >= K sqrt(d (1/N1 + 1/N2)): {'holds' if ok else 'violated'}")
        t0 = compute_t0(mix.gamma, K, mix.dim, config.noise_R, delta, N1, N2)
        if isinstance(t0, Infeasible):
            lines.append(f"T0 formula: Infeasible ({t0.reason})")
        else:
            lines.append(f"T0 formula: {t0}")
        lo, hi = delta_admissible_interval(mix.gamma, K)
        inside = lo < delta < hi
        lines.append(f"delta admissible interval: ({lo:.6g}, {hi:.6g}); delta = {delta:.6g} "
                     f"{'inside' if inside else 'outside'}")
    else:
        lines.append("T0 formula: Infeasible (exploration-length formula is stated for two environments)")
    t0, warning = config.resolved_t0()
    lines.append(f"exploration rounds used: {t0}" + (f" ({warning})" if warning else ""))
    return lines


def t0_study(config: ScenarioConfig, *, seed: int | None = None, n_tasks: int | None = None):
    seed = config.root_seed if seed is None else seed
    streams = StreamFactory(seed)
    cfg = config.meml_config(config.resolved_t0()[0])
    records = run_training_phase(config.mixture, config.actions, config.training_tasks, cfg,
                                 streams)
    bias_set = build_bias_set(records)
    return misclassification_study(config.mixture, bias_set, config.t0_grid,
                                   n_tasks or config.t0_study_tasks, cfg, config.actions, streams)


def _add_run_options(p):
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--replications", type=int, help="independent repeats of the whole experiment")
    p.add_argument("--workers", type=int, help="worker processes for replications")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meml-bandits",
                                     description="Meta-learning linear bandit simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a scenario config")
    p.add_argument("config")
    _add_run_options(p)
    p = sub.add_parser("preset", help="run a bundled figure preset")
    p.add_argument("name", choices=PRESETS)
    _add_run_options(p)
    p = sub.add_parser("diagnose", help="assumption and exploration-length diagnostics")
    p.add_argument("config")
    p = sub.add_parser("t0-study", help="misclassification rate versus exploration length")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write t0_study.csv here")
    p.add_argument("--tasks", type=int, help="tasks per exploration length")
    return parser


def _load(path_or_preset: str, preset: bool) -> ScenarioConfig:
    return parse_config(preset_path(path_or_preset) if preset else path_or_preset)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command in ("run", "preset"):
            config = _load(args.config if args.command == "run" else args.name,
                           args.command == "preset")
            if args.replications is not None and args.replications < 1:
                raise ConfigError("must be positive", "--replications")
            if args.workers is not None and args.workers < 1:
                raise ConfigError("must be positive", "--workers")
            res = run_scenario(config, args.out, seed=args.seed,
                               replications=args.replications, workers=args.workers)
            for kind, path in res["paths"].items():
                print(f"{kind}: {path}")
        elif args.command == "diagnose":
            print("\n".join(diagnose(_load(args.config, False))))
        else:
            config = _load(args.config, False)
            if args.tasks is not None and args.tasks < 1:
                raise ConfigError("must be positive", "--tasks")
            table = t0_study(config, seed=args.seed, n_tasks=args.tasks)
            print("T0,misclassification_rate,standard_error")
            for t0, rate, se in table:
                print(f"{t0},{fmt(rate)},{fmt(se)}")
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                with open(out / "t0_study.csv", "w", newline="", encoding="utf-8") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["T0", "misclassification_rate", "standard_error"])
                    for t0, rate, se in table:
                        w.writerow([t0, fmt(rate), fmt(se)])
    except (ConfigError, ConfigurationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
