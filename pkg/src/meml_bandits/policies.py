"""Per-task bandit policies and the MEML-OFUL meta-policy.

All policies share one episode driver (``play_episode``): a run of rounds
in which each round either plays a forced arm (random exploration,
round-robin probing) or the optimistic arm of a confidence ellipsoid
centred on the ridge estimate shrunk toward a bias vector. A zero bias is
plain OFUL.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._backend import kernels
from .environments import TaskParameter
from .estimation import (
    REFRESH_EVERY,
    BiasOracleConfig,
    ConfigurationError,
    OnlineRLSState,
    biased_radius,
    biased_rls_estimate,
    rls_estimate,
)


class InsufficientTrainingTasks(ValueError):
    """An environment has no labeled training task to build its bias from."""


class Policy(str, enum.Enum):
    MEML_OFUL = "MEML-OFUL"
    ITL = "ITL"
    ORACLE = "Oracle"
    AVG_OFUL = "AVG-OFUL"
    RR_OFUL = "RR-OFUL"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        key = name.strip().upper().replace("_", "-")
        for p in cls:
            if p.value.upper() == key:
                return p
        raise ConfigurationError(
            f"unknown policy {name!r}; expected one of {[p.value for p in cls]}")


class BiasSource(enum.Enum):
    LABELED_TRAINING = "labeled_training"
    ORACLE_MEANS = "oracle_means"
    POOLED_AVERAGE = "pooled_average"


@dataclass(frozen=True)
class BiasSet:
    """Bias vectors, one per environment, with the estimates that built them."""

    biases: tuple
    counts: tuple
    source: BiasSource
    members: tuple = ()
    spreads: tuple = ()

    def __post_init__(self):
        if len(self.biases) < 1 or len(self.biases) != len(self.counts):
            raise ConfigurationError("bias set needs m >= 1 biases with matching counts")

    @property
    def m(self) -> int:
        return len(self.biases)

    def bias(self, label: int) -> np.ndarray:
        return self.biases[label - 1]

    def spread(self, label: int) -> float | None:
        return self.spreads[label - 1] if self.spreads else None

    def with_task(self, label: int, estimate) -> "BiasSet":
        """Fold one more task estimate into environment ``label``'s average."""
        i = label - 1
        est = np.asarray(estimate, dtype=float)
        members = list(self.members) if self.members else [() for _ in self.biases]
        members[i] = tuple(members[i]) + (est,)
        n = self.counts[i]
        biases = list(self.biases)
        biases[i] = (n * biases[i] + est) / (n + 1)
        counts = list(self.counts)
        counts[i] = n + 1
        spreads = list(self.spreads) if self.spreads else [None for _ in self.biases]
        spreads[i] = _spread(members[i], biases[i])
        return replace(self, biases=tuple(biases), counts=tuple(counts),
                       members=tuple(members), spreads=tuple(spreads))


@dataclass(frozen=True)
class MemlConfig:
    exploration_rounds: int
    total_rounds: int
    lam: float
    delta: float
    noise_R: float
    action_bound_L: float
    param_bound_S: float
    bias_oracle: BiasOracleConfig = field(default_factory=BiasOracleConfig)
    update_bias_after_task: bool = False

    def __post_init__(self):
        if self.total_rounds < 1:
            raise ConfigurationError("horizon T must be positive")
        if not 0 <= self.exploration_rounds < self.total_rounds:
            raise ConfigurationError(
                f"exploration rounds T0={self.exploration_rounds} must satisfy 0 <= T0 < T={self.total_rounds}")
        if not self.lam > 0:
            raise ConfigurationError("lambda must be positive")
        if not 0 < self.delta <= 1:
            raise ConfigurationError("delta must lie in (0, 1]")


@dataclass
class RegretTrace:
    instant: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def from_instant(cls, instant) -> "RegretTrace":
        inst = np.asarray(instant, dtype=float)
        return cls(instant=inst, cumulative=np.cumsum(inst))


@dataclass
class TaskRunRecord:
    """The interaction dataset of one task plus summary estimates."""

    actions: np.ndarray
    rewards: np.ndarray
    chosen_indices: np.ndarray
    final_unbiased_estimate: np.ndarray
    chosen_environment: int | None = None
    true_environment: int | None = None
    final_min_eigenvalue: float | None = None
    prefix_estimate: np.ndarray | None = None
    exploration_estimate: np.ndarray | None = None


def play_episode(state: OnlineRLSState, actions: np.ndarray, noise: np.ndarray,
                 theta: np.ndarray, bias: np.ndarray, bias_distance: float,
                 forced: np.ndarray, cfg: MemlConfig):
    """Play ``len(noise)`` rounds, mutating ``state``.

    Returns ``(chosen indices, rewards, instant regret)``.
    """
    n = noise.shape[0]
    chosen = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    regret = np.empty(n)
    if n == 0:
        return chosen, rewards, regret
    state.round_count = kernels.play_rounds(
        np.ascontiguousarray(actions, dtype=np.float64),
        np.ascontiguousarray(noise, dtype=np.float64),
        np.ascontiguousarray(theta, dtype=np.float64),
        np.ascontiguousarray(bias, dtype=np.float64),
        np.ascontiguousarray(forced, dtype=np.int64),
        state.gram, state.gram_reg_inverse, state.response_sum,
        state.lam, cfg.noise_R, cfg.action_bound_L, cfg.delta, float(bias_distance),
        state.round_count, REFRESH_EVERY, chosen, rewards, regret)
    return chosen, rewards, regret


def oful_select_action(state: OnlineRLSState, bias, bias_distance: float, action_set,
                       t: int, delta: float, *, R: float, L: float):
    """Optimistic arm of the (biased) confidence ellipsoid; lowest index wins ties."""
    arms = np.ascontiguousarray(action_set, dtype=np.float64)
    if arms.ndim != 2 or arms.shape[0] == 0:
        raise ConfigurationError("action set must be a nonempty (K, d) array")
    if arms.shape[1] != state.dim:
        raise ConfigurationError(f"actions have dimension {arms.shape[1]}, state has {state.dim}")
    center = biased_rls_estimate(state, bias)
    radius = biased_radius(t, state.dim, state.lam, L, R, delta, bias_distance)
    idx, _ = kernels.ucb_argmax(arms, np.ascontiguousarray(center),
                                state.gram_reg_inverse, radius)
    return idx, arms[idx]


def _mean(vectors) -> np.ndarray:
    return np.mean(np.stack([np.asarray(v, dtype=float) for v in vectors]), axis=0)


def _spread(estimates, bias) -> float | None:
    """Estimate of sqrt(E||theta_new - bias||^2) from the estimates behind ``bias``.

    Sample variance (ddof=1) inflated by (1 + 1/N) for the error of the mean
    itself; undefined for a single estimate.
    """
    n = len(estimates)
    if n < 2:
        return None
    sq = sum(float(np.sum((np.asarray(e) - bias) ** 2)) for e in estimates)
    return float(np.sqrt(sq / (n - 1) * (1.0 + 1.0 / n)))


def build_bias_set(training_records: Sequence[Sequence[TaskRunRecord]]) -> BiasSet:
    """Per-environment average of the training tasks' final unbiased estimates."""
    if len(training_records) == 0:
        raise InsufficientTrainingTasks("no environments supplied")
    biases, counts, members = [], [], []
    for i, recs in enumerate(training_records):
        if len(recs) == 0:
            raise InsufficientTrainingTasks(f"environment {i + 1} has no training tasks")
        ests = tuple(np.asarray(r.final_unbiased_estimate, dtype=float) for r in recs)
        biases.append(_mean(ests))
        counts.append(len(ests))
        members.append(ests)
    spreads = tuple(_spread(e, h) for e, h in zip(members, biases))
    return BiasSet(tuple(biases), tuple(counts), BiasSource.LABELED_TRAINING, tuple(members),
                   spreads)


def pooled_bias_set(training_records: Sequence[Sequence[TaskRunRecord]],
                    use_prefix: bool = False) -> BiasSet:
    """A single bias averaging every training task regardless of label.

    ``use_prefix`` averages the round-robin prefix estimates instead of the
    full-task estimates.
    """
    flat = [r for recs in training_records for r in recs]
    if not flat:
        raise InsufficientTrainingTasks("no training tasks to pool")
    if use_prefix:
        if any(r.prefix_estimate is None for r in flat):
            raise ConfigurationError("training records lack round-robin prefix estimates")
        ests = tuple(r.prefix_estimate for r in flat)
    else:
        ests = tuple(r.final_unbiased_estimate for r in flat)
    h = _mean(ests)
    return BiasSet((h,), (len(ests),), BiasSource.POOLED_AVERAGE, (ests,), (_spread(ests, h),))


def oracle_bias_set(means, variances=None) -> BiasSet:
    """Biases at the true environment means; ``variances`` are the known
    E||theta - mu||^2, whose roots serve as spreads."""
    means = tuple(np.asarray(m, dtype=float) for m in means)
    spreads = () if variances is None else tuple(float(np.sqrt(v)) for v in variances)
    return BiasSet(means, tuple(0 for _ in means), BiasSource.ORACLE_MEANS, (), spreads)


def classify_environment(exploration_estimate, bias_set: BiasSet) -> int:
    """Label (1-based) of the nearest bias in squared Euclidean distance."""
    est = np.asarray(exploration_estimate, dtype=float)
    dists = [float(np.sum((est - h) ** 2)) for h in bias_set.biases]
    return int(np.argmin(dists)) + 1


def _record(state, actions, chosen, rewards, **extra) -> TaskRunRecord:
    played = actions[np.arange(len(chosen)), chosen] if len(chosen) else np.empty((0, state.dim))
    min_eig = float(np.linalg.eigvalsh(state.gram)[0])
    return TaskRunRecord(actions=played, rewards=rewards, chosen_indices=chosen,
                         final_unbiased_estimate=rls_estimate(state),
                         final_min_eigenvalue=min_eig, **extra)


def run_biased_task(cfg: MemlConfig, task: TaskParameter, actions, noise, bias,
                    bias_distance: float | None = None, spread: float | None = None):
    """BIAS-OFUL for the whole horizon, no exploration phase."""
    T = cfg.total_rounds
    _check_streams(actions, noise, T)
    h = np.asarray(bias, dtype=float)
    if bias_distance is None:
        bias_distance = cfg.bias_oracle.distance(h, task.theta, cfg.param_bound_S, spread)
    state = OnlineRLSState.fresh(task.theta.shape[0], cfg.lam)
    chosen, rewards, regret = play_episode(state, actions[:T], noise[:T], task.theta, h,
                                           bias_distance, np.full(T, -1, dtype=np.int64), cfg)
    rec = _record(state, actions[:T], chosen, rewards, true_environment=task.environment_label)
    return rec, RegretTrace.from_instant(regret)


def run_oful_task(cfg: MemlConfig, task: TaskParameter, actions, noise):
    """Plain OFUL (zero bias, radius with the parameter-norm bound S)."""
    zero = np.zeros(task.theta.shape[0])
    return run_biased_task(cfg, task, actions, noise, zero, bias_distance=cfg.param_bound_S)


def round_robin_prefix_estimate(cfg: MemlConfig, task: TaskParameter, actions, noise) -> np.ndarray:
    """Ridge estimate from d probing rounds, round t playing the arm most
    aligned with the t-th standard basis vector."""
    d = task.theta.shape[0]
    arms = np.asarray(actions[:d])
    forced = np.array([int(np.argmax(arms[t][:, t])) for t in range(d)], dtype=np.int64)
    state = OnlineRLSState.fresh(d, cfg.lam)
    play_episode(state, arms, noise[:d], task.theta, np.zeros(d), 0.0, forced, cfg)
    return rls_estimate(state)


def exploration_estimate(state: OnlineRLSState) -> np.ndarray:
    """Unregularized least-squares fit of the exploration data.

    Ridge shrinkage toward the origin would pull every estimate toward the
    environment nearest zero (badly so for large lambda), so the classifier
    uses the minimum-norm least-squares solution on the raw Gram matrix.
    """
    return np.linalg.pinv(state.gram, hermitian=True) @ state.response_sum


def _check_streams(actions, noise, T):
    if np.shape(actions)[0] < T or np.shape(noise)[0] < T:
        raise ConfigurationError(f"action/noise streams shorter than the horizon T={T}")
    if np.shape(actions)[1] == 0:
        raise ConfigurationError("action set must be nonempty")


def meml_run_task(cfg: MemlConfig, bias_set: BiasSet, task: TaskParameter, actions, noise,
                  exploration_rng: np.random.Generator):
    """One test task under MEML-OFUL.

    Rounds 1..T0 play uniformly random arms and feed an unbiased ridge
    estimate; that estimate picks the nearest environment bias, which is then
    fixed for the optimistic rounds T0+1..T. Exploration regret is charged.
    """
    T, T0 = cfg.total_rounds, cfg.exploration_rounds
    _check_streams(actions, noise, T)
    actions = np.asarray(actions[:T])
    noise = np.asarray(noise[:T])
    d = task.theta.shape[0]
    n_arms = actions.shape[1]
    state = OnlineRLSState.fresh(d, cfg.lam)

    forced = exploration_rng.integers(0, n_arms, size=T0).astype(np.int64)
    zero = np.zeros(d)
    c1, r1, g1 = play_episode(state, actions[:T0], noise[:T0], task.theta, zero, 0.0, forced, cfg)
    explore_est = exploration_estimate(state)
    label = classify_environment(explore_est, bias_set)
    h = bias_set.bias(label)
    dist = cfg.bias_oracle.distance(h, task.theta, cfg.param_bound_S, bias_set.spread(label))
    c2, r2, g2 = play_episode(state, actions[T0:], noise[T0:], task.theta, h, dist,
                              np.full(T - T0, -1, dtype=np.int64), cfg)
    rec = _record(state, actions, np.concatenate([c1, c2]), np.concatenate([r1, r2]),
                  chosen_environment=label, true_environment=task.environment_label,
                  exploration_estimate=explore_est)
    return rec, RegretTrace.from_instant(np.concatenate([g1, g2]))


def explore_and_classify(cfg: MemlConfig, bias_set: BiasSet, task: TaskParameter, actions,
                         noise, exploration_rng: np.random.Generator) -> int:
    """Only the exploration + classification stage of MEML-OFUL."""
    T0 = cfg.exploration_rounds
    d = task.theta.shape[0]
    n_arms = np.shape(actions)[1]
    state = OnlineRLSState.fresh(d, cfg.lam)
    forced = exploration_rng.integers(0, n_arms, size=T0).astype(np.int64)
    play_episode(state, np.asarray(actions[:T0]), np.asarray(noise[:T0]), task.theta,
                 np.zeros(d), 0.0, forced, cfg)
    return classify_environment(exploration_estimate(state), bias_set)


def run_baseline_task(policy: Policy, cfg: MemlConfig, task: TaskParameter, actions, noise, *,
                      true_means=None, pooled_bias: BiasSet | None = None):
    """ITL, Oracle, AVG-OFUL or RR-OFUL on one task (no exploration phase)."""
    policy = Policy(policy)
    if policy is Policy.ITL:
        return run_oful_task(cfg, task, actions, noise)
    if policy is Policy.ORACLE:
        if true_means is None:
            raise ConfigurationError("Oracle policy needs the true environment means")
        oracle = true_means if isinstance(true_means, BiasSet) else oracle_bias_set(true_means)
        label = task.environment_label
        return run_biased_task(cfg, task, actions, noise, oracle.bias(label),
                               spread=oracle.spread(label))
    if policy in (Policy.AVG_OFUL, Policy.RR_OFUL):
        if pooled_bias is None:
            raise ConfigurationError(f"{policy.value} needs a pooled bias")
        return run_biased_task(cfg, task, actions, noise, pooled_bias.biases[0],
                               spread=pooled_bias.spread(1))
    raise ConfigurationError(f"{policy.value} is not a baseline policy")
