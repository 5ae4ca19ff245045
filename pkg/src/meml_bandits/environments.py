"""Task-parameter mixtures, action sets, reward noise and assumption checks.

Environment labels are 1-based throughout (``1..m``), matching how results
are reported.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .estimation import ConfigurationError


class NoiseFamily(enum.Enum):
    GAUSSIAN = "gaussian"
    TRUNCATED_GAUSSIAN = "truncated_gaussian"
    UNIFORM_BOX = "uniform_box"


@dataclass(frozen=True)
class EnvironmentSpec:
    """One mixture component: theta = mean + z, z with i.i.d. entries.

    ``scale`` is sigma for the Gaussian families and the half-width for the
    uniform box. ``trunc_radius`` (truncated Gaussian only) defaults to
    4 * sigma.
    """

    mean: np.ndarray
    family: NoiseFamily = NoiseFamily.GAUSSIAN
    scale: float = 0.0
    trunc_radius: float | None = None
    sub_gaussian_K: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(-1))
        if self.scale < 0:
            raise ConfigurationError(f"noise scale must be nonnegative, got {self.scale}")
        if self.family is NoiseFamily.TRUNCATED_GAUSSIAN and self.trunc_radius is None:
            object.__setattr__(self, "trunc_radius", 4.0 * self.scale)
        if self.sub_gaussian_K is None:
            object.__setattr__(self, "sub_gaussian_K", float(self.scale))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def support_bound(self) -> float:
        """Bound on ||theta - mean||_inf (inf for the plain Gaussian)."""
        if self.family is NoiseFamily.GAUSSIAN:
            return 0.0 if self.scale == 0 else math.inf
        if self.family is NoiseFamily.UNIFORM_BOX:
            return self.scale
        return self.trunc_radius

    def entry_variance(self) -> float:
        s = self.scale
        if s == 0:
            return 0.0
        if self.family is NoiseFamily.GAUSSIAN:
            return s * s
        if self.family is NoiseFamily.UNIFORM_BOX:
            return s * s / 3.0
        c = self.trunc_radius / s
        pdf = math.exp(-0.5 * c * c) / math.sqrt(2.0 * math.pi)
        mass = math.erf(c / math.sqrt(2.0))
        return s * s * (1.0 - 2.0 * c * pdf / mass)

    def variance_about_mean(self) -> float:
        """Analytic E||theta - mean||^2."""
        return self.dim * self.entry_variance()

    def sample_offset(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        if self.scale == 0:
            return np.zeros(shape)
        if self.family is NoiseFamily.GAUSSIAN:
            return rng.normal(0.0, self.scale, size=shape)
        if self.family is NoiseFamily.UNIFORM_BOX:
            return rng.uniform(-self.scale, self.scale, size=shape)
        z = rng.normal(0.0, self.scale, size=shape)
        bad = np.abs(z) > self.trunc_radius
        while bad.any():
            z[bad] = rng.normal(0.0, self.scale, size=int(bad.sum()))
            bad = np.abs(z) > self.trunc_radius
        return z


@dataclass(frozen=True)
class MixtureSpec:
    environments: tuple
    probabilities: tuple

    def __post_init__(self):
        envs = tuple(self.environments)
        probs = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "environments", envs)
        object.__setattr__(self, "probabilities", probs)
        if not envs:
            raise ConfigurationError("mixture needs at least one environment")
        if len(probs) != len(envs):
            raise ConfigurationError(
                f"{len(probs)} probabilities given for {len(envs)} environments")
        if any(p < 0 for p in probs):
            raise ConfigurationError("probabilities must be nonnegative")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ConfigurationError("probabilities must sum to 1")
        dims = {e.dim for e in envs}
        if len(dims) != 1:
            raise ConfigurationError(f"environment means have differing dimensions {sorted(dims)}")

    @property
    def m(self) -> int:
        return len(self.environments)

    @property
    def dim(self) -> int:
        return self.environments[0].dim

    @property
    def means(self) -> list[np.ndarray]:
        return [e.mean for e in self.environments]

    @property
    def gamma(self) -> float:
        """Smallest pairwise distance between environment means."""
        if self.m == 1:
            return math.inf
        return min(float(np.linalg.norm(a.mean - b.mean))
                   for i, a in enumerate(self.environments)
                   for b in self.environments[i + 1:])

    @property
    def mixture_mean(self) -> np.ndarray:
        return sum(p * e.mean for p, e in zip(self.probabilities, self.environments))

    def pooled_variance(self) -> float:
        """Analytic E||theta - mixture_mean||^2 under the whole mixture."""
        mu = self.mixture_mean
        return sum(p * (e.variance_about_mean() + float(np.sum((e.mean - mu) ** 2)))
                   for p, e in zip(self.probabilities, self.environments))

    def default_param_bound(self) -> float:
        """max ||mu|| + 4 K sqrt(d): covers the Gaussian bulk."""
        return max(float(np.linalg.norm(e.mean)) + 4.0 * e.sub_gaussian_K * math.sqrt(e.dim)
                   for e in self.environments)


@dataclass(frozen=True)
class TaskParameter:
    theta: np.ndarray
    environment_label: int


def sample_task(mixture: MixtureSpec, rng: np.random.Generator) -> TaskParameter:
    nu = int(rng.choice(mixture.m, p=mixture.probabilities))
    return sample_task_in(mixture.environments[nu], nu + 1, rng)


def sample_task_in(env: EnvironmentSpec, label: int, rng: np.random.Generator) -> TaskParameter:
    return TaskParameter(theta=env.mean + env.sample_offset(rng), environment_label=label)


class Regeneration(enum.Enum):
    FRESH_EACH_ROUND = "fresh"
    FIXED_ACROSS_ROUNDS = "fixed"


@dataclass(frozen=True)
class ActionSetSpec:
    arms_per_round: int = 10
    norm_bound: float = 1.0
    regeneration: Regeneration = Regeneration.FRESH_EACH_ROUND

    def __post_init__(self):
        if self.arms_per_round < 1:
            raise ConfigurationError("arms_per_round must be positive")
        if not self.norm_bound > 0:
            raise ConfigurationError("action norm bound L must be positive")


def _sphere(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero draw has probability zero; guard anyway
    norms[norms == 0] = 1.0
    g[np.all(g == 0, axis=1), 0] = 1.0
    return radius * g / norms


def generate_action_set(spec: ActionSetSpec, dim: int, rng: np.random.Generator) -> np.ndarray:
    """One round's decision set: ``arms_per_round`` points on the radius-L sphere."""
    return _sphere(rng, spec.arms_per_round, dim, spec.norm_bound)


def action_set_sequence(spec: ActionSetSpec, dim: int, horizon: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Decision sets for rounds 1..horizon as a ``(horizon, K, dim)`` array."""
    if spec.regeneration is Regeneration.FIXED_ACROSS_ROUNDS:
        first = generate_action_set(spec, dim, rng)
        return np.ascontiguousarray(np.broadcast_to(first, (horizon,) + first.shape))
    pts = _sphere(rng, horizon * spec.arms_per_round, dim, spec.norm_bound)
    return np.ascontiguousarray(pts.reshape(horizon, spec.arms_per_round, dim))


def sample_noise(R: float, rng: np.random.Generator) -> float:
    if R < 0:
        raise ConfigurationError(f"noise level R must be nonnegative, got {R}")
    return float(rng.normal(0.0, R))


def noise_sequence(R: float, horizon: int, rng: np.random.Generator) -> np.ndarray:
    if R < 0:
        raise ConfigurationError(f"noise level R must be nonnegative, got {R}")
    return rng.normal(0.0, R, size=horizon)


@dataclass
class EnvironmentDiagnostics:
    label: int
    variance_about_mean: float
    second_moment: float
    ratio: float
    variance_below_gamma: bool


@dataclass
class DiagnosticsReport:
    environments: list[EnvironmentDiagnostics]
    gamma: float
    mixture_mean: np.ndarray
    empirical_mixture_mean: np.ndarray
    pooled_variance: float
    pooled_second_moment: float
    n_samples: int = field(default=0)

    def lines(self) -> list[str]:
        out = [f"gamma (min distance between means): {self.gamma:.6g}"]
        for e in self.environments:
            out.append(
                f"environment {e.label}: Var about mean = {e.variance_about_mean:.6g}, "
                f"E||theta||^2 = {e.second_moment:.6g}, ratio = {e.ratio:.6g}, "
                f"Var < gamma: {e.variance_below_gamma}")
        out.append(
            f"pooled mixture: mean = {np.array2string(self.mixture_mean, precision=6)}, "
            f"empirical mean = {np.array2string(self.empirical_mixture_mean, precision=6)}, "
            f"Var about pooled mean = {self.pooled_variance:.6g}, "
            f"E||theta||^2 = {self.pooled_second_moment:.6g}")
        return out


def assumption_diagnostics(mixture: MixtureSpec, n_samples: int,
                           rng: np.random.Generator) -> DiagnosticsReport:
    """Monte Carlo check of the variance-vs-second-moment and separation conditions."""
    if n_samples < 1000:
        raise ConfigurationError("assumption_diagnostics needs n_samples >= 1000")
    gamma = mixture.gamma
    envs = []
    for i, env in enumerate(mixture.environments):
        theta = env.mean + env.sample_offset(rng, size=n_samples)
        var = float(np.mean(np.sum((theta - env.mean) ** 2, axis=1)))
        second = float(np.mean(np.sum(theta ** 2, axis=1)))
        ratio = var / second if second > 0 else 0.0
        envs.append(EnvironmentDiagnostics(i + 1, var, second, ratio, var < gamma))

    labels = rng.choice(mixture.m, size=n_samples, p=mixture.probabilities)
    pooled = np.empty((n_samples, mixture.dim))
    for i, env in enumerate(mixture.environments):
        idx = np.flatnonzero(labels == i)
        pooled[idx] = env.mean + env.sample_offset(rng, size=idx.size)
    mu = mixture.mixture_mean
    return DiagnosticsReport(
        environments=envs,
        gamma=gamma,
        mixture_mean=mu,
        empirical_mixture_mean=pooled.mean(axis=0),
        pooled_variance=float(np.mean(np.sum((pooled - mu) ** 2, axis=1))),
        pooled_second_moment=float(np.mean(np.sum(pooled ** 2, axis=1))),
        n_samples=n_samples,
    )
