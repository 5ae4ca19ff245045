"""The meta-learning protocol: labeled training, coupled test evaluation,
aggregation over replications, and the misclassification study.

Random streams are keyed by ``(phase, replication, task, purpose)``; the
task, action-set and noise streams of a test task carry no policy label,
so every policy faces exactly the same problem instance.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .environments import (
    ActionSetSpec,
    MixtureSpec,
    action_set_sequence,
    noise_sequence,
    sample_task,
    sample_task_in,
)
from .estimation import ConfigurationError
from .policies import (
    BiasSet,
    MemlConfig,
    Policy,
    RegretTrace,
    TaskRunRecord,
    build_bias_set,
    explore_and_classify,
    meml_run_task,
    oracle_bias_set,
    pooled_bias_set,
    round_robin_prefix_estimate,
    run_baseline_task,
    run_oful_task,
)
from .rng import StreamFactory

__all__ = [
    "RegretTrace", "PolicyCurve", "TransferRegretEstimate", "ReplicationResult",
    "ExperimentResult", "ExperimentSetup", "run_training_phase", "evaluate_transfer", "run_replication",
    "run_experiment", "misclassification_study", "STREAM_LAYOUT",
]

STREAM_LAYOUT = {
    "task-draw": ["train/<rep>/<env>/<j>", "test/<rep>/<i>"],
    "actions": ["train/<rep>/<env>/<j>", "test/<rep>/<i>"],
    "noise": ["train/<rep>/<env>/<j>", "test/<rep>/<i>"],
    "exploration-choice": ["test/<rep>/<i>/MEML-OFUL", "t0-study/<T0>/<i>"],
}


@dataclass
class PolicyCurve:
    mean: np.ndarray
    std: np.ndarray
    n: int


@dataclass
class TransferRegretEstimate:
    per_policy: dict[str, PolicyCurve]

    @classmethod
    def from_traces(cls, cumulative: dict[str, np.ndarray]) -> "TransferRegretEstimate":
        """``cumulative[policy]`` has shape (units, T); units are test tasks."""
        out = {}
        lengths = {v.shape[-1] for v in cumulative.values()}
        if len(lengths) > 1:
            raise ValueError("regret curves of differing lengths")
        for name, arr in cumulative.items():
            arr = np.asarray(arr, dtype=float).reshape(-1, arr.shape[-1])
            n = arr.shape[0]
            if n < 1:
                raise ValueError("transfer regret needs at least one replication")
            std = arr.std(axis=0, ddof=1) if n > 1 else np.zeros(arr.shape[1])
            out[name] = PolicyCurve(mean=arr.mean(axis=0), std=std, n=n)
        return cls(out)


def _fingerprint(*arrays) -> str:
    h = hashlib.sha1()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def _task_streams(streams: StreamFactory, action_spec: ActionSetSpec, dim, T, R, *prefix):
    actions = action_set_sequence(action_spec, dim, T, streams.generator(*prefix, "actions"))
    noise = noise_sequence(R, T, streams.generator(*prefix, "noise"))
    return actions, noise


def run_training_phase(mixture: MixtureSpec, action_spec: ActionSetSpec,
                       counts: Sequence[int], cfg: MemlConfig, streams: StreamFactory,
                       replication: int = 0, with_prefix: bool = False):
    """Labeled training tasks, run with plain OFUL.

    Returns one list of ``TaskRunRecord`` per environment. ``with_prefix``
    also stores a round-robin prefix estimate on each record.
    """
    if len(counts) != mixture.m:
        raise ConfigurationError(f"{len(counts)} training counts for {mixture.m} environments")
    if any(n < 1 for n in counts):
        raise ConfigurationError("every environment needs at least one labeled training task")
    T = cfg.total_rounds
    out = []
    for i, (env, n) in enumerate(zip(mixture.environments, counts)):
        recs = []
        for j in range(n):
            key = ("train", replication, i + 1, j)
            task = sample_task_in(env, i + 1, streams.generator(*key, "task-draw"))
            actions, noise = _task_streams(streams, action_spec, mixture.dim, T, cfg.noise_R, *key)
            rec, _ = run_oful_task(cfg, task, actions, noise)
            if with_prefix:
                rec.prefix_estimate = round_robin_prefix_estimate(cfg, task, actions, noise)
            recs.append(rec)
        out.append(recs)
    return out


@dataclass
class TransferRun:
    cumulative: dict[str, np.ndarray]
    instant: dict[str, np.ndarray]
    true_labels: np.ndarray
    chosen_labels: np.ndarray
    fingerprints: dict[str, list]
    final_bias_set: BiasSet | None = None


def evaluate_transfer(policies: Sequence[Policy], mixture: MixtureSpec,
                      action_spec: ActionSetSpec, cfg: MemlConfig, n_test_tasks: int,
                      streams: StreamFactory, *, bias_set: BiasSet | None = None,
                      pooled_bias: BiasSet | None = None, rr_bias: BiasSet | None = None,
                      replication: int = 0) -> TransferRun:
    """Run every policy on the same ``n_test_tasks`` fresh tasks."""
    policies = [Policy(p) for p in policies]
    if not policies:
        raise ConfigurationError("no policies to evaluate")
    if n_test_tasks < 1:
        raise ConfigurationError("n_test_tasks must be positive")
    if Policy.MEML_OFUL in policies and bias_set is None:
        raise ConfigurationError("MEML-OFUL needs a bias set")
    T = cfg.total_rounds
    instant = {p.value: np.zeros((n_test_tasks, T)) for p in policies}
    fingerprints = {p.value: [] for p in policies}
    true_labels = np.zeros(n_test_tasks, dtype=np.int64)
    chosen = np.zeros(n_test_tasks, dtype=np.int64)
    current = bias_set
    oracle = oracle_bias(mixture)
    for i in range(n_test_tasks):
        key = ("test", replication, i)
        task = sample_task(mixture, streams.generator(*key, "task-draw"))
        actions, noise = _task_streams(streams, action_spec, mixture.dim, T, cfg.noise_R, *key)
        true_labels[i] = task.environment_label
        for p in policies:
            fingerprints[p.value].append(_fingerprint(task.theta, actions, noise))
            if p is Policy.MEML_OFUL:
                rec, trace = meml_run_task(cfg, current, task, actions, noise,
                                           streams.generator(*key, p.value, "exploration-choice"))
                chosen[i] = rec.chosen_environment
                if cfg.update_bias_after_task:
                    current = current.with_task(rec.chosen_environment, rec.final_unbiased_estimate)
            else:
                pooled = rr_bias if p is Policy.RR_OFUL else pooled_bias
                rec, trace = run_baseline_task(p, cfg, task, actions, noise,
                                               true_means=oracle, pooled_bias=pooled)
            instant[p.value][i] = trace.instant
    cumulative = {k: np.cumsum(v, axis=1) for k, v in instant.items()}
    return TransferRun(cumulative, instant, true_labels, chosen, fingerprints, current)


@dataclass
class ReplicationResult:
    replication: int
    instant: dict[str, np.ndarray]
    true_labels: np.ndarray
    chosen_labels: np.ndarray
    bias_set: BiasSet | None
    pooled_bias: BiasSet | None
    rr_bias: BiasSet | None
    training_min_eigenvalues: list


@dataclass
class ExperimentResult:
    policies: list[str]
    replications: list[ReplicationResult]
    horizon: int

    def instant(self, policy: str) -> np.ndarray:
        """Shape (n_replications, n_test_tasks, T)."""
        return np.stack([r.instant[policy] for r in self.replications])

    def cumulative(self, policy: str) -> np.ndarray:
        return np.cumsum(self.instant(policy), axis=2)

    def transfer_estimate(self) -> TransferRegretEstimate:
        return TransferRegretEstimate.from_traces(
            {p: self.cumulative(p).reshape(-1, self.horizon) for p in self.policies})

    def replication_final(self, policy: str) -> np.ndarray:
        """Final transfer regret per replication (mean over its test tasks)."""
        return self.cumulative(policy)[:, :, -1].mean(axis=1)

    def misclassification_rate(self) -> float:
        true = np.concatenate([r.true_labels for r in self.replications])
        chosen = np.concatenate([r.chosen_labels for r in self.replications])
        return float(np.mean(true != chosen))


@dataclass
class ExperimentSetup:
    mixture: MixtureSpec
    action_spec: ActionSetSpec
    cfg: MemlConfig
    policies: list
    training_counts: list
    n_test_tasks: int
    root_seed: int
    extra: dict = field(default_factory=dict)


def run_replication(setup: ExperimentSetup, replication: int) -> ReplicationResult:
    streams = StreamFactory(setup.root_seed)
    policies = [Policy(p) for p in setup.policies]
    needs_training = any(p in (Policy.MEML_OFUL, Policy.AVG_OFUL, Policy.RR_OFUL) for p in policies)
    bias_set = pooled = rr = None
    eigs: list = [[] for _ in range(setup.mixture.m)]
    if needs_training:
        records = run_training_phase(setup.mixture, setup.action_spec, setup.training_counts,
                                     setup.cfg, streams, replication,
                                     with_prefix=Policy.RR_OFUL in policies)
        eigs = [[r.final_min_eigenvalue for r in recs] for recs in records]
        bias_set = build_bias_set(records)
        pooled = pooled_bias_set(records)
        if Policy.RR_OFUL in policies:
            rr = pooled_bias_set(records, use_prefix=True)
    run = evaluate_transfer(policies, setup.mixture, setup.action_spec, setup.cfg,
                            setup.n_test_tasks, streams, bias_set=bias_set, pooled_bias=pooled,
                            rr_bias=rr, replication=replication)
    return ReplicationResult(replication, run.instant, run.true_labels, run.chosen_labels,
                             bias_set, pooled, rr, eigs)


def run_experiment(setup: ExperimentSetup, n_replications: int, workers: int = 1) -> ExperimentResult:
    """Independent whole-experiment repeats; results ordered by replication index."""
    if n_replications < 1:
        raise ConfigurationError("n_replications must be positive")
    reps = range(n_replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replication, [setup] * n_replications, reps))
    else:
        results = [run_replication(setup, r) for r in reps]
    return ExperimentResult([Policy(p).value for p in setup.policies], results,
                            setup.cfg.total_rounds)


def misclassification_study(mixture: MixtureSpec, bias_set: BiasSet, t0_grid: Sequence[int],
                            n_tasks: int, cfg: MemlConfig, action_spec: ActionSetSpec,
                            streams: StreamFactory):
    """Empirical misclassification rate of the exploration stage per T0.

    Returns a list of ``(T0, rate, standard_error)``. For each T0 the same
    ``n_tasks`` tasks, action sets and noise are reused.
    """
    if len(t0_grid) == 0:
        raise ConfigurationError("T0 grid must be nonempty")
    horizon = max(t0_grid)
    table = []
    for t0 in t0_grid:
        wrong = 0
        for i in range(n_tasks):
            key = ("t0-study", i)
            task = sample_task(mixture, streams.generator(*key, "task-draw"))
            actions, noise = _task_streams(streams, action_spec, mixture.dim, horizon,
                                           cfg.noise_R, *key)
            label = explore_and_classify(
                MemlConfig(t0, horizon + 1, cfg.lam, cfg.delta, cfg.noise_R,
                           cfg.action_bound_L, cfg.param_bound_S),
                bias_set, task, actions, noise,
                streams.generator("t0-study", t0, i, "exploration-choice"))
            wrong += int(label != task.environment_label)
        rate = wrong / n_tasks
        table.append((int(t0), rate, float(np.sqrt(rate * (1 - rate) / n_tasks))))
    return table


def oracle_bias(mixture: MixtureSpec) -> BiasSet:
    return oracle_bias_set(mixture.means,
                           [e.variance_about_mean() for e in mixture.environments])
