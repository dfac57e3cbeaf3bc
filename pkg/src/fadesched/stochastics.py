"""Finite discrete distributions and the fractional moments used by every
closed-form power expression.

All distributions are finite-support. Continuous gain laws must be quantized
by the caller before they enter the library. Moments are cached by value
(support/probability tuples), so two structurally identical distributions
share cache entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "DiscreteDistribution",
    "ChannelModel",
    "ModelValidationError",
    "inv_gain_moment",
    "arrival_exp_moment",
    "gain_product",
    "convolve",
    "iid_sum",
    "sample",
]

_PROB_INPUT_TOL = 1e-9


class ModelValidationError(ValueError):
    """Raised when a distribution or channel violates its invariants."""


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite discrete distribution given as parallel value/probability tuples.

    Immutable and hashable; safe to share across threads and usable as a
    cache key. Probabilities must be nonnegative and sum to 1 within 1e-9 on
    input; they are renormalized so the stored sum is exact to 1e-12.
    """

    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        support = tuple(float(v) for v in self.support)
        probs = tuple(float(p) for p in self.probs)
        if len(support) != len(probs) or len(support) == 0:
            raise ModelValidationError(
                "support and probs must have equal length >= 1"
            )
        if any(not math.isfinite(v) or v < 0.0 for v in support):
            raise ModelValidationError("support values must be finite and >= 0")
        if any(not math.isfinite(p) or p < 0.0 for p in probs):
            raise ModelValidationError("probabilities must be finite and >= 0")
        total = math.fsum(probs)
        if abs(total - 1.0) > _PROB_INPUT_TOL:
            raise ModelValidationError(
                f"probabilities sum to {total!r}, expected 1 within {_PROB_INPUT_TOL}"
            )
        probs = tuple(p / total for p in probs)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, values: Sequence[float]) -> "DiscreteDistribution":
        n = len(values)
        return cls(tuple(values), tuple(1.0 / n for _ in range(n)))

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteDistribution":
        return cls((value,), (1.0,))

    @property
    def mean(self) -> float:
        return math.fsum(p * v for v, p in zip(self.support, self.probs))

    @property
    def second_moment(self) -> float:
        return math.fsum(p * v * v for v, p in zip(self.support, self.probs))

    @property
    def min_value(self) -> float:
        return min(self.support)

    @property
    def max_value(self) -> float:
        return max(self.support)

    def scaled(self, factor: float) -> "DiscreteDistribution":
        """Distribution of factor*X."""
        return DiscreteDistribution(
            tuple(factor * v for v in self.support), self.probs
        )


@dataclass(frozen=True)
class ChannelModel:
    """Fading-channel description: gain law plus rate-power constants.

    The rate-power law is R = ln(1 + gamma*P*H/sigma2). All policy formulas
    are derived for gamma = sigma2 = 1; other values are handled by the
    effective gain H' = gamma*H/sigma2, under which P = (e^R - 1)/H' exactly.
    """

    gains: DiscreteDistribution
    gamma: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        if any(v <= 0.0 for v in self.gains.support):
            raise ModelValidationError("channel gains must be strictly positive")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ModelValidationError("gamma must be a positive real")
        if not (self.sigma2 > 0.0 and math.isfinite(self.sigma2)):
            raise ModelValidationError("sigma2 must be a positive real")

    @cached_property
    def effective_gains(self) -> DiscreteDistribution:
        if self.gamma == 1.0 and self.sigma2 == 1.0:
            return self.gains
        return self.gains.scaled(self.gamma / self.sigma2)

    def effective_gain(self, h: float) -> float:
        return h * self.gamma / self.sigma2


@lru_cache(maxsize=None)
def _neg_power_moment(dist: DiscreteDistribution, j: int) -> float:
    return math.fsum(
        p * v ** (-1.0 / j) for v, p in zip(dist.support, dist.probs)
    )


@lru_cache(maxsize=None)
def _exp_moment(dist: DiscreteDistribution, j: int) -> float:
    return math.fsum(
        p * math.exp(v / j) for v, p in zip(dist.support, dist.probs)
    )


@lru_cache(maxsize=None)
def _log_gain_product(dist: DiscreteDistribution, horizon: int) -> float:
    # log-space throughout: the factors shrink geometrically for deep
    # horizons and their direct product underflows past D ~ a few hundred.
    return math.fsum(
        (z / horizon) * math.log(_neg_power_moment(dist, z))
        for z in range(1, horizon + 1)
    )


def inv_gain_moment(ch: ChannelModel, j: int) -> float:
    """Fractional inverse-gain moment E[1/H'^(1/j)] of the effective gain.

    This is the channel statistic every closed-form policy expression is
    built from; j=1 gives the plain E[1/H'] used as a routing link cost.
    """
    if j < 1:
        raise ModelValidationError(f"moment order must be >= 1, got {j}")
    return _neg_power_moment(ch.effective_gains, int(j))


def arrival_exp_moment(a: DiscreteDistribution, j: int) -> float:
    """Exponential arrival moment E[e^(A/j)]; >= 1 for nonnegative support."""
    if j < 1:
        raise ModelValidationError(f"moment order must be >= 1, got {j}")
    return _exp_moment(a, int(j))


def gain_product(ch: ChannelModel, horizon: int) -> float:
    """Geometric-weighted product of inverse-gain moments over a horizon.

    Returns prod_{z=1..D} E[1/H'^(1/z)]^(z/D) for D = horizon. Equals
    E[1/H'] at D=1 and never exceeds it (each factor is bounded by
    E[1/H']^(1/D) via the Lyapunov moment inequality).
    """
    if horizon < 1:
        raise ModelValidationError(f"horizon must be >= 1, got {horizon}")
    return math.exp(_log_gain_product(ch.effective_gains, int(horizon)))


def convolve(
    a: DiscreteDistribution, b: DiscreteDistribution
) -> DiscreteDistribution:
    """Distribution of X + Y for independent X ~ a, Y ~ b."""
    acc: dict[float, float] = {}
    for va, pa in zip(a.support, a.probs):
        for vb, pb in zip(b.support, b.probs):
            key = va + vb
            acc[key] = acc.get(key, 0.0) + pa * pb
    items = sorted(acc.items())
    return DiscreteDistribution(
        tuple(v for v, _ in items), tuple(p for _, p in items)
    )


@lru_cache(maxsize=None)
def iid_sum(dist: DiscreteDistribution, n: int) -> DiscreteDistribution:
    """Distribution of the sum of n iid copies of dist."""
    if n < 1:
        raise ModelValidationError(f"iid sum needs n >= 1, got {n}")
    if n == 1:
        return dist
    half = iid_sum(dist, n // 2)
    out = convolve(half, half)
    if n % 2:
        out = convolve(out, dist)
    return out


def sample(
    dist: DiscreteDistribution,
    rng: np.random.Generator,
    size: Optional[int] = None,
):
    """Draw from the distribution; reproducible for a fixed generator state."""
    values = np.asarray(dist.support)
    idx = rng.choice(len(values), size=size, p=np.asarray(dist.probs))
    return values[idx]
