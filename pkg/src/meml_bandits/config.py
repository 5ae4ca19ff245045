"""Scenario configuration files.

A scenario is a YAML mapping. Every key is optional except the mixture
means (under ``mixture.means`` or ``mixture.environments[*].mean``) and
``horizon``. Unknown keys are rejected, and every error names the key path
and the line it came from. See ``presets/fig-left.cfg`` for a full example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .bounds import Infeasible, compute_t0
from .environments import (
    ActionSetSpec,
    EnvironmentSpec,
    MixtureSpec,
    NoiseFamily,
    Regeneration,
)
from .estimation import BiasOracleConfig, BiasOracleMode, ConfigurationError
from .policies import MemlConfig, Policy

PRESET_DIR = Path(__file__).parent / "presets"
PRESETS = ("fig-left", "fig-middle", "fig-right")

DEFAULT_POLICIES = ("MEML-OFUL", "ITL", "Oracle")


class ConfigError(ConfigurationError):
    def __init__(self, message, path=None, line=None, source=None):
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        if where:
            where += " "
        if path:
            where += f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass
class ScenarioConfig:
    scenario: str
    horizon: int
    mixture: MixtureSpec
    actions: ActionSetSpec = field(default_factory=ActionSetSpec)
    exploration_rounds: object = "auto"
    exploration_fallback: int | None = None
    lam: float = 1.0
    delta: object = "1/T"
    noise_R: float = 0.1
    param_bound_S: object = "auto"
    policies: tuple = DEFAULT_POLICIES
    training_tasks: tuple = ()
    n_test_tasks: int = 10
    n_replications: int = 20
    root_seed: int = 0
    bias_oracle: BiasOracleConfig = field(default_factory=BiasOracleConfig)
    update_bias_after_task: bool = False
    t0_grid: tuple = (1, 2, 5, 10, 20)
    t0_study_tasks: int = 500
    output_dir: str | None = None
    workers: int = 1
    source: str | None = None

    @property
    def dimension(self) -> int:
        return self.mixture.dim

    def resolved_delta(self) -> float:
        return 1.0 / self.horizon if self.delta == "1/T" else float(self.delta)

    def resolved_S(self) -> float:
        if self.param_bound_S == "auto":
            return self.mixture.default_param_bound()
        return float(self.param_bound_S)

    def sub_gaussian_K(self) -> float:
        return max(e.sub_gaussian_K for e in self.mixture.environments)

    def t0_formula(self):
        if self.mixture.m != 2:
            return Infeasible("exploration-length formula is stated for two environments")
        return compute_t0(self.mixture.gamma, self.sub_gaussian_K(), self.dimension,
                          self.noise_R, self.resolved_delta(), *self.training_tasks)

    def resolved_t0(self) -> tuple[int, str | None]:
        """Exploration length and, when the formula was not usable, a warning."""
        if self.exploration_rounds != "auto":
            return int(self.exploration_rounds), None
        t0 = self.t0_formula()
        fallback = self.exploration_fallback if self.exploration_fallback is not None \
            else self.dimension
        if isinstance(t0, Infeasible):
            return fallback, f"T0 formula infeasible ({t0.reason}); using configured T0={fallback}"
        if t0 >= self.horizon:
            return fallback, f"T0 formula gives {t0} >= T={self.horizon}; using configured T0={fallback}"
        return t0, None

    def meml_config(self, t0: int | None = None) -> MemlConfig:
        if t0 is None:
            t0, _ = self.resolved_t0()
        return MemlConfig(
            exploration_rounds=t0,
            total_rounds=self.horizon,
            lam=self.lam,
            delta=self.resolved_delta(),
            noise_R=self.noise_R,
            action_bound_L=self.actions.norm_bound,
            param_bound_S=self.resolved_S(),
            bias_oracle=self.bias_oracle,
            update_bias_after_task=self.update_bias_after_task,
        )

    def echo(self) -> dict:
        """Plain-data view with defaults filled in."""
        envs = []
        for e in self.mixture.environments:
            envs.append({
                "mean": [float(v) for v in e.mean],
                "noise": e.family.value,
                "scale": e.scale,
                "variance": e.variance_about_mean(),
                "truncation_radius": e.trunc_radius,
                "sub_gaussian_K": e.sub_gaussian_K,
            })
        return {
            "scenario": self.scenario,
            "dimension": self.dimension,
            "horizon": self.horizon,
            "exploration_rounds": self.exploration_rounds,
            "exploration_fallback": self.exploration_fallback,
            "lambda": self.lam,
            "delta": self.delta,
            "noise_R": self.noise_R,
            "S": self.param_bound_S,
            "L": self.actions.norm_bound,
            "mixture": {"probabilities": list(self.mixture.probabilities), "environments": envs},
            "actions": {"arms_per_round": self.actions.arms_per_round,
                        "regeneration": self.actions.regeneration.value},
            "policies": list(self.policies),
            "training_tasks": list(self.training_tasks),
            "n_test_tasks": self.n_test_tasks,
            "n_replications": self.n_replications,
            "root_seed": self.root_seed,
            "bias_oracle": {"mode": self.bias_oracle.mode.value,
                            "constant_bound": self.bias_oracle.constant_bound},
            "update_bias_after_task": self.update_bias_after_task,
            "t0_grid": list(self.t0_grid),
            "t0_study_tasks": self.t0_study_tasks,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }


# -- YAML node tree -> plain values with line numbers -------------------------

def _to_python(node, path, lines):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = str(k.value)
            sub = f"{path}.{key}" if path else key
            if key in out:
                raise ConfigError("duplicate key", sub, k.start_mark.line + 1)
            out[key] = _to_python(v, sub, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


class _Reader:
    def __init__(self, data: dict, lines: dict, source: str | None):
        self.lines = lines
        self.source = source
        self.data = data

    def error(self, path, message):
        line = self.lines.get(path)
        if line is None and "." in path:
            line = self.lines.get(path.rsplit(".", 1)[0])
        return ConfigError(message, path, line, self.source)

    def check_keys(self, mapping, path, allowed):
        if not isinstance(mapping, dict):
            raise self.error(path, "expected a mapping")
        for k in mapping:
            if k not in allowed:
                sub = f"{path}.{k}" if path else k
                raise self.error(sub, f"unknown key (allowed: {', '.join(sorted(allowed))})")

    def number(self, value, path, *, positive=False, nonneg=False, integer=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(path, f"expected a number, got {value!r}")
        if integer and (not float(value).is_integer()):
            raise self.error(path, f"expected an integer, got {value!r}")
        if positive and not value > 0:
            raise self.error(path, f"must be positive, got {value!r}")
        if nonneg and value < 0:
            raise self.error(path, f"must be nonnegative, got {value!r}")
        if not math.isfinite(float(value)):
            raise self.error(path, "must be finite")
        return int(value) if integer else float(value)

    def vector(self, value, path):
        if not isinstance(value, list) or not value:
            raise self.error(path, "expected a nonempty list of numbers")
        return np.array([self.number(v, f"{path}[{i}]") for i, v in enumerate(value)])


_TOP_KEYS = {
    "scenario", "dimension", "horizon", "exploration_rounds", "exploration_fallback",
    "lambda", "delta", "noise_R", "S", "L", "mixture", "actions", "policies",
    "training_tasks", "n_test_tasks", "n_replications", "root_seed", "bias_oracle",
    "update_bias_after_task", "t0_grid", "t0_study_tasks", "output_dir", "workers",
}
_ENV_KEYS = {"mean", "noise", "sigma", "variance", "halfwidth", "truncation_radius",
             "sub_gaussian_K"}


def _environment(r: _Reader, raw, path, default_variance) -> EnvironmentSpec:
    r.check_keys(raw, path, _ENV_KEYS)
    if "mean" not in raw:
        raise r.error(path, "environment needs a 'mean'")
    mean = r.vector(raw["mean"], f"{path}.mean")
    d = mean.shape[0]
    family_name = raw.get("noise", "gaussian")
    try:
        family = NoiseFamily(family_name)
    except ValueError:
        raise r.error(f"{path}.noise",
                      f"unknown noise family {family_name!r}; expected one of "
                      f"{[f.value for f in NoiseFamily]}") from None
    given = [k for k in ("sigma", "variance", "halfwidth") if k in raw]
    if len(given) > 1:
        raise r.error(path, f"give only one of sigma/variance/halfwidth, got {given}")
    if family is NoiseFamily.UNIFORM_BOX:
        if "sigma" in raw:
            raise r.error(f"{path}.sigma", "uniform_box takes 'halfwidth' or 'variance'")
        if "halfwidth" in raw:
            scale = r.number(raw["halfwidth"], f"{path}.halfwidth", nonneg=True)
        else:
            var = r.number(raw.get("variance", default_variance), f"{path}.variance", nonneg=True)
            scale = math.sqrt(3.0 * var / d)
    else:
        if "halfwidth" in raw:
            raise r.error(f"{path}.halfwidth", "halfwidth only applies to uniform_box")
        if "sigma" in raw:
            scale = r.number(raw["sigma"], f"{path}.sigma", nonneg=True)
        else:
            var = r.number(raw.get("variance", default_variance), f"{path}.variance", nonneg=True)
            scale = math.sqrt(var / d)
    trunc = None
    if "truncation_radius" in raw:
        if family is not NoiseFamily.TRUNCATED_GAUSSIAN:
            raise r.error(f"{path}.truncation_radius", "only applies to truncated_gaussian")
        trunc = r.number(raw["truncation_radius"], f"{path}.truncation_radius", positive=True)
    K = None
    if "sub_gaussian_K" in raw and raw["sub_gaussian_K"] != "auto":
        K = r.number(raw["sub_gaussian_K"], f"{path}.sub_gaussian_K", nonneg=True)
    # variance given for a truncated Gaussian describes the untruncated sigma
    return EnvironmentSpec(mean=mean, family=family, scale=scale, trunc_radius=trunc,
                           sub_gaussian_K=K)


def _mixture(r: _Reader, raw) -> MixtureSpec:
    r.check_keys(raw, "mixture", {"means", "environments", "probabilities", "variance", "noise"})
    if ("means" in raw) == ("environments" in raw):
        raise r.error("mixture", "give exactly one of 'means' or 'environments'")
    default_variance = 1.0
    if "variance" in raw:
        default_variance = r.number(raw["variance"], "mixture.variance", nonneg=True)
    if "means" in raw:
        if not isinstance(raw["means"], list) or not raw["means"]:
            raise r.error("mixture.means", "expected a nonempty list of mean vectors")
        items = [({"mean": m} | ({"noise": raw["noise"]} if "noise" in raw else {}),
                  f"mixture.means[{i}]") for i, m in enumerate(raw["means"])]
    else:
        if not isinstance(raw["environments"], list) or not raw["environments"]:
            raise r.error("mixture.environments", "expected a nonempty list")
        items = [(e, f"mixture.environments[{i}]") for i, e in enumerate(raw["environments"])]
    envs = []
    for env_raw, path in items:
        if path.startswith("mixture.means"):
            r.lines.setdefault(f"{path}.mean", r.lines.get(path))
            env_raw = dict(env_raw)
        envs.append(_environment(r, env_raw, path, default_variance))
    dims = {e.dim for e in envs}
    if len(dims) != 1:
        raise r.error("mixture", f"environment means have differing dimensions {sorted(dims)}")
    m = len(envs)
    if "probabilities" in raw:
        probs = r.vector(raw["probabilities"], "mixture.probabilities")
        if probs.shape[0] != m:
            raise r.error("mixture.probabilities", f"expected {m} probabilities, got {probs.shape[0]}")
        if np.any(probs < 0):
            raise r.error("mixture.probabilities", "probabilities must be nonnegative")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise r.error("mixture.probabilities", "probabilities must sum to 1")
    else:
        probs = np.full(m, 1.0 / m)
    return MixtureSpec(tuple(envs), tuple(float(p) for p in probs))


def parse_config_text(text: str, source: str | None = None) -> ScenarioConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"parse error: {getattr(exc, 'problem', exc)}", None, line, source) from None
    if node is None:
        raise ConfigError("empty configuration", None, None, source)
    lines: dict = {}
    data = _to_python(node, "", lines)
    r = _Reader(data, lines, source)
    r.check_keys(data, "", _TOP_KEYS)

    if "horizon" not in data:
        raise r.error("horizon", "missing required key")
    if "mixture" not in data:
        raise r.error("mixture", "missing required key")
    horizon = r.number(data["horizon"], "horizon", positive=True, integer=True)
    mixture = _mixture(r, data["mixture"])
    if "dimension" in data:
        dim = r.number(data["dimension"], "dimension", positive=True, integer=True)
        if dim != mixture.dim:
            raise r.error("dimension", f"dimension {dim} disagrees with mean length {mixture.dim}")

    L = r.number(data.get("L", 1.0), "L", positive=True)
    actions_raw = data.get("actions", {})
    r.check_keys(actions_raw, "actions", {"arms_per_round", "regeneration"})
    arms = r.number(actions_raw.get("arms_per_round", 10), "actions.arms_per_round",
                    positive=True, integer=True)
    regen_name = actions_raw.get("regeneration", "fresh")
    try:
        regen = Regeneration(regen_name)
    except ValueError:
        raise r.error("actions.regeneration", "expected 'fresh' or 'fixed'") from None
    actions = ActionSetSpec(arms, L, regen)

    t0 = data.get("exploration_rounds", "auto")
    if t0 != "auto":
        t0 = r.number(t0, "exploration_rounds", nonneg=True, integer=True)
        if t0 >= horizon:
            raise r.error("exploration_rounds", f"T0={t0} must be smaller than T={horizon}")
    fallback = None
    if "exploration_fallback" in data:
        fallback = r.number(data["exploration_fallback"], "exploration_fallback",
                            nonneg=True, integer=True)
        if fallback >= horizon:
            raise r.error("exploration_fallback", f"T0={fallback} must be smaller than T={horizon}")

    delta = data.get("delta", "1/T")
    if delta != "1/T":
        delta = r.number(delta, "delta", positive=True)
        if not delta < 1:
            raise r.error("delta", "delta must lie in (0, 1)")

    S = data.get("S", "auto")
    if S != "auto":
        S = r.number(S, "S", positive=True)

    policies_raw = data.get("policies", list(DEFAULT_POLICIES))
    if not isinstance(policies_raw, list) or not policies_raw:
        raise r.error("policies", "expected a nonempty list of policy names")
    policies = []
    for i, name in enumerate(policies_raw):
        try:
            policies.append(Policy.parse(str(name)).value)
        except ConfigurationError as exc:
            raise r.error(f"policies[{i}]", str(exc)) from None
    if len(set(policies)) != len(policies):
        raise r.error("policies", "duplicate policy")

    if "training_tasks" in data:
        tt = data["training_tasks"]
        if isinstance(tt, int) and not isinstance(tt, bool):
            tt = [tt] * mixture.m
        if not isinstance(tt, list) or len(tt) != mixture.m:
            raise r.error("training_tasks", f"expected {mixture.m} per-environment counts")
        training = tuple(r.number(v, f"training_tasks[{i}]", positive=True, integer=True)
                         for i, v in enumerate(tt))
    else:
        training = tuple(10 for _ in range(mixture.m))

    oracle_raw = data.get("bias_oracle", {})
    r.check_keys(oracle_raw, "bias_oracle", {"mode", "constant_bound"})
    try:
        mode = BiasOracleMode(oracle_raw.get("mode", BiasOracleMode.EMPIRICAL_SPREAD.value))
    except ValueError:
        raise r.error("bias_oracle.mode",
                      f"expected one of {[m.value for m in BiasOracleMode]}") from None
    cb = oracle_raw.get("constant_bound", "auto")
    cb = None if cb == "auto" else r.number(cb, "bias_oracle.constant_bound", nonneg=True)

    t0_grid = data.get("t0_grid", [1, 2, 5, 10, 20])
    if not isinstance(t0_grid, list) or not t0_grid:
        raise r.error("t0_grid", "expected a nonempty list of exploration lengths")
    t0_grid = tuple(r.number(v, f"t0_grid[{i}]", positive=True, integer=True)
                    for i, v in enumerate(t0_grid))

    update = data.get("update_bias_after_task", False)
    if not isinstance(update, bool):
        raise r.error("update_bias_after_task", "expected true or false")

    output_dir = data.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise r.error("output_dir", "expected a path string")

    cfg = ScenarioConfig(
        scenario=str(data.get("scenario", Path(source).stem if source else "scenario")),
        horizon=horizon,
        mixture=mixture,
        actions=actions,
        exploration_rounds=t0,
        exploration_fallback=fallback,
        lam=r.number(data.get("lambda", 1.0), "lambda", positive=True),
        delta=delta,
        noise_R=r.number(data.get("noise_R", 0.1), "noise_R", nonneg=True),
        param_bound_S=S,
        policies=tuple(policies),
        training_tasks=training,
        n_test_tasks=r.number(data.get("n_test_tasks", 10), "n_test_tasks",
                              positive=True, integer=True),
        n_replications=r.number(data.get("n_replications", 20), "n_replications",
                                positive=True, integer=True),
        root_seed=r.number(data.get("root_seed", 0), "root_seed", nonneg=True, integer=True),
        bias_oracle=BiasOracleConfig(mode, cb),
        update_bias_after_task=update,
        t0_grid=t0_grid,
        t0_study_tasks=r.number(data.get("t0_study_tasks", 500), "t0_study_tasks",
                                positive=True, integer=True),
        output_dir=output_dir,
        workers=r.number(data.get("workers", 1), "workers", positive=True, integer=True),
        source=source,
    )
    S_val = cfg.resolved_S()
    if cb is not None and cb > 2 * S_val + 1e-12:
        raise r.error("bias_oracle.constant_bound", f"must not exceed 2S = {2 * S_val:.6g}")
    if cfg.exploration_fallback is not None and cfg.exploration_fallback >= horizon:
        raise r.error("exploration_fallback", "must be smaller than the horizon")
    return cfg


def parse_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such configuration file: {p}")
    try:
        text = p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"not valid UTF-8 ({exc.reason})", None, None, str(p)) from None
    return parse_config_text(text, str(p))


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {list(PRESETS)}")
    return PRESET_DIR / f"{name}.cfg"
