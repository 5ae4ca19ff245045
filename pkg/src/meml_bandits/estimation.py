"""Online ridge regression, confidence ellipsoids and optimistic scoring.

The regularized Gram matrix ``lambda * I + sum x x^T`` is never inverted from
scratch on the hot path: its inverse is carried along with Sherman-Morrison
updates and rebuilt from the Gram matrix every ``REFRESH_EVERY`` updates to
keep round-off from accumulating.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels

REFRESH_EVERY = 256


class ConfigurationError(ValueError):
    """Invalid parameters or mismatched dimensions."""


@dataclass
class OnlineRLSState:
    """Sufficient statistics of one task's ridge regression.

    ``gram`` excludes the regularizer; ``gram_reg_inverse`` is the inverse of
    ``lam * I + gram``.
    """

    dim: int
    lam: float
    gram: np.ndarray = field(repr=False)
    gram_reg_inverse: np.ndarray = field(repr=False)
    response_sum: np.ndarray = field(repr=False)
    round_count: int = 0

    @classmethod
    def fresh(cls, dim: int, lam: float) -> "OnlineRLSState":
        if dim < 1:
            raise ConfigurationError(f"dimension must be positive, got {dim}")
        if not lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {lam}")
        return cls(
            dim=dim,
            lam=float(lam),
            gram=np.zeros((dim, dim)),
            gram_reg_inverse=np.eye(dim) / lam,
            response_sum=np.zeros(dim),
        )

    def regularized_gram(self) -> np.ndarray:
        return self.lam * np.eye(self.dim) + self.gram

    def copy(self) -> "OnlineRLSState":
        return OnlineRLSState(self.dim, self.lam, self.gram.copy(),
                              self.gram_reg_inverse.copy(), self.response_sum.copy(),
                              self.round_count)


def _as_vector(v, dim: int, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.shape != (dim,):
        raise ConfigurationError(f"{name} must have shape ({dim},), got {arr.shape}")
    return arr


def rls_update(state: OnlineRLSState, action, reward: float) -> OnlineRLSState:
    """Fold one (action, reward) observation into ``state`` (in place)."""
    x = _as_vector(action, state.dim, "action")
    kernels.rank_one_update(state.gram, state.gram_reg_inverse, state.response_sum,
                            x, float(reward))
    state.round_count += 1
    if state.round_count % REFRESH_EVERY == 0:
        kernels.refresh_inverse(state.gram, state.lam, state.gram_reg_inverse)
    return state


def rls_estimate(state: OnlineRLSState) -> np.ndarray:
    return state.gram_reg_inverse @ state.response_sum


def biased_rls_estimate(state: OnlineRLSState, bias) -> np.ndarray:
    """Ridge estimate shrunk toward ``bias`` instead of the origin.

    Equivalent to fitting the residual rewards ``y - x^T bias`` and adding
    ``bias`` back.
    """
    h = _as_vector(bias, state.dim, "bias")
    return state.gram_reg_inverse @ (state.response_sum - state.gram @ h) + h


def _check_delta(delta: float) -> None:
    # delta = 1 is admitted: it zeroes the data term, which tests rely on.
    if not 0.0 < delta <= 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1], got {delta}")


def _data_term(t: float, d: int, lam: float, L: float, R: float, delta: float) -> float:
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    _check_delta(delta)
    return R * math.sqrt(d * math.log((1.0 + t * L * L / lam) / delta))


def oful_radius(t, d, lam, L, R, S, delta) -> float:
    return _data_term(t, d, lam, L, R, delta) + math.sqrt(lam) * S


def biased_radius(t, d, lam, L, R, delta, bias_distance) -> float:
    if bias_distance < 0:
        raise ConfigurationError(f"bias distance must be nonnegative, got {bias_distance}")
    return _data_term(t, d, lam, L, R, delta) + math.sqrt(lam) * bias_distance


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    center: np.ndarray
    shape: np.ndarray
    radius: float

    def contains(self, v, tol: float = 0.0) -> bool:
        diff = np.asarray(v, dtype=float) - self.center
        return math.sqrt(max(diff @ self.shape @ diff, 0.0)) <= self.radius + tol


def confidence_ellipsoid(state: OnlineRLSState, radius: float, bias=None) -> ConfidenceEllipsoid:
    center = rls_estimate(state) if bias is None else biased_rls_estimate(state, bias)
    return ConfidenceEllipsoid(center=center, shape=state.regularized_gram(), radius=float(radius))


def ellipsoid_ucb(action, ellipsoid: ConfidenceEllipsoid, shape_inverse) -> float:
    """max over v in the ellipsoid of x^T v, in closed form."""
    x = np.asarray(action, dtype=float)
    quad = max(float(x @ shape_inverse @ x), 0.0)
    return float(x @ ellipsoid.center) + ellipsoid.radius * math.sqrt(quad)


class BiasOracleMode(enum.Enum):
    TRUE_PARAMETER = "true_parameter"
    CONSTANT_UPPER_BOUND = "constant_upper_bound"
    EMPIRICAL_SPREAD = "empirical_spread"


@dataclass(frozen=True)
class BiasOracleConfig:
    """Where the ``||h - theta||`` term of the biased radius comes from.

    ``EMPIRICAL_SPREAD`` (default) uses the spread that comes with the bias:
    the root of the expected squared distance between a fresh task and the
    bias, estimated from the training estimates that built it. Without a
    usable spread it falls back to the constant bound.
    ``CONSTANT_UPPER_BOUND`` uses ``min(constant_bound, ||h|| + S)``; both are
    valid upper bounds when ``||theta|| <= S``, and the second makes a zero
    bias reproduce the plain OFUL radius exactly.
    ``TRUE_PARAMETER`` peeks at theta and is meant for diagnostics only.
    """

    mode: BiasOracleMode = BiasOracleMode.EMPIRICAL_SPREAD
    constant_bound: float | None = None  # None means 2 * S

    def distance(self, bias, theta, S: float, spread: float | None = None) -> float:
        h = np.asarray(bias, dtype=float)
        if self.mode is BiasOracleMode.TRUE_PARAMETER:
            return float(np.linalg.norm(h - np.asarray(theta, dtype=float)))
        if self.mode is BiasOracleMode.EMPIRICAL_SPREAD and spread is not None:
            return float(spread)
        bound = 2.0 * S if self.constant_bound is None else self.constant_bound
        if bound > 2.0 * S + 1e-12:
            raise ConfigurationError(f"constant bias bound {bound} exceeds 2S = {2.0 * S}")
        return float(min(bound, np.linalg.norm(h) + S))
