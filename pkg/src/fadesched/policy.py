"""Closed-form expected-power formulas and per-slot optimal rate rules for a
single fading link under a hard frame deadline.

Two traffic patterns are covered:

* frame-start: all of a frame's data is present when the frame begins and
  must be drained within its M slots;
* per-slot: the frame opens with an initial backlog and one more arrival
  lands in each later slot of the frame, everything due by frame end.

The expected-power expressions are the exact optima of the underlying
finite-horizon recursion when its minimizer stays interior (0 <= R <= q).
For very small backlogs with deep fading the interior assumption fails and
the closed forms undershoot the feasible optimum; the rate rules below clamp
to [0, q] so simulated power stays physical, and the dp_oracle module
quantifies the resulting gap instead of hiding it. The frame-start
expression can even go slightly negative near q = 0; it is returned verbatim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .stochastics import (
    ChannelModel,
    DiscreteDistribution,
    ModelValidationError,
    arrival_exp_moment,
    gain_product,
    inv_gain_moment,
)

__all__ = [
    "FrameState",
    "ArrivalMode",
    "FRAME_START",
    "PER_SLOT",
    "power_for_rate",
    "expected_power_frame_start",
    "expected_power_frame_start_random",
    "expected_power_per_slot",
    "optimal_rate_frame_start",
    "optimal_rate_per_slot",
    "rate_constant_frame_start",
    "rate_constant_per_slot",
]

FRAME_START = "frame_start"
PER_SLOT = "per_slot"


@dataclass(frozen=True)
class FrameState:
    """Scheduler state inside one frame.

    q: backlog in nats, D: remaining deadline in slots (counting the current
    slot), M: frame size. 1 <= D <= M always.
    """

    q: float
    D: int
    M: int

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q >= 0.0):
            raise ModelValidationError(f"backlog must be finite and >= 0, got {self.q}")
        if not (1 <= self.D <= self.M):
            raise ModelValidationError(
                f"remaining deadline must satisfy 1 <= D <= M, got D={self.D} M={self.M}"
            )


@dataclass(frozen=True)
class ArrivalMode:
    """Traffic pattern for one link: frame-start batch or per-slot stream."""

    tag: str
    frame_start_dist: DiscreteDistribution
    per_slot_dist: Optional[DiscreteDistribution] = None

    def __post_init__(self):
        if self.tag not in (FRAME_START, PER_SLOT):
            raise ModelValidationError(f"unknown arrival mode {self.tag!r}")
        if self.tag == PER_SLOT and self.per_slot_dist is None:
            raise ModelValidationError("per-slot mode requires per_slot_dist")
        if self.tag == FRAME_START and self.per_slot_dist is not None:
            raise ModelValidationError("frame-start mode forbids per_slot_dist")


def power_for_rate(rate: float, h: float, ch: ChannelModel) -> float:
    """Transmit power needed for `rate` nats in one slot at gain h.

    Inverts R = ln(1 + gamma*P*h/sigma2): P = sigma2*(e^R - 1)/(gamma*h).
    """
    if rate < 0.0:
        raise ModelValidationError(f"rate must be >= 0, got {rate}")
    if h <= 0.0:
        raise ModelValidationError(f"gain must be > 0, got {h}")
    return ch.sigma2 * math.expm1(rate) / (ch.gamma * h)


def expected_power_frame_start(a1: float, m: int, ch: ChannelModel) -> float:
    """Expected frame energy for fixed frame-start data a1 over m slots.

    M * e^(a1/M) * prod_{j=1..M} E[1/H^(1/j)]^(j/M)  -  M * E[1/H].
    Reduces to (e^a1 - 1) E[1/H] at M=1.
    """
    if a1 < 0.0:
        raise ModelValidationError(f"frame data must be >= 0, got {a1}")
    if m < 1:
        raise ModelValidationError(f"frame size must be >= 1, got {m}")
    return m * math.exp(a1 / m) * gain_product(ch, m) - m * inv_gain_moment(ch, 1)


def expected_power_frame_start_random(
    a1_dist: DiscreteDistribution, m: int, ch: ChannelModel
) -> float:
    """Frame-start expected energy with random initial data.

    Replaces e^(a1/M) by E[e^(A1/M)] over the full (possibly convolved)
    distribution of the frame's opening backlog.
    """
    if m < 1:
        raise ModelValidationError(f"frame size must be >= 1, got {m}")
    return (
        m * arrival_exp_moment(a1_dist, m) * gain_product(ch, m)
        - m * inv_gain_moment(ch, 1)
    )


@lru_cache(maxsize=None)
def _log_arrival_product(a_dist: DiscreteDistribution, m: int) -> float:
    return math.fsum(
        (j / m) * math.log(arrival_exp_moment(a_dist, j)) for j in range(1, m)
    )


def expected_power_per_slot(
    abar_dist: DiscreteDistribution,
    a_dist: DiscreteDistribution,
    m: int,
    ch: ChannelModel,
) -> float:
    """Expected frame energy with opening backlog ~ abar_dist and one
    arrival ~ a_dist in each of the frame's later M-1 slots.

    M * E[e^(Abar/M)] * prod_{j=1..M} E[1/H^(1/j)]^(j/M)
      * prod_{j=1..M-1} E[e^(A/j)]^(j/M)  -  M * E[1/H].
    Reduces to (E[e^Abar] - 1) E[1/H] at M=1.
    """
    if m < 1:
        raise ModelValidationError(f"frame size must be >= 1, got {m}")
    return (
        m
        * arrival_exp_moment(abar_dist, m)
        * gain_product(ch, m)
        * math.exp(_log_arrival_product(a_dist, m))
        - m * inv_gain_moment(ch, 1)
    )


@lru_cache(maxsize=None)
def rate_constant_frame_start(ch: ChannelModel, d: int) -> float:
    """Additive log-constant of the frame-start rate rule at remaining
    deadline d: sum_{j=1..d-1} (j/d) ln E[1/H^(1/j)]."""
    return math.fsum(
        (j / d) * math.log(inv_gain_moment(ch, j)) for j in range(1, d)
    )


@lru_cache(maxsize=None)
def rate_constant_per_slot(
    ch: ChannelModel, a_dist: DiscreteDistribution, d: int
) -> float:
    """Rate-rule log-constant including the future-arrival terms:
    sum_{j=1..d-1} (j/d) [ln E[1/H^(1/j)] + ln E[e^(A/j)]]."""
    return rate_constant_frame_start(ch, d) + math.fsum(
        (j / d) * math.log(arrival_exp_moment(a_dist, j)) for j in range(1, d)
    )


def _clamped_rate(state: FrameState, h_eff: float, log_const: float) -> float:
    if state.D == 1:
        return state.q
    d = state.D
    r = state.q / d + ((d - 1) / d) * math.log(h_eff) + log_const
    return min(max(r, 0.0), state.q)


def optimal_rate_frame_start(state: FrameState, h: float, ch: ChannelModel) -> float:
    """Rate to transmit now under frame-start traffic, clamped to [0, q].

    R = ln( h^((D-1)/D) * e^(q/D) * prod_{j=1..D-1} E[1/H^(1/j)]^(j/D) ),
    evaluated on effective gains. The last slot (D=1) drains the backlog
    exactly; clamping preserves the hard deadline for gain draws where the
    interior minimizer leaves [0, q].
    """
    if h <= 0.0:
        raise ModelValidationError(f"gain must be > 0, got {h}")
    return _clamped_rate(
        state, ch.effective_gain(h), rate_constant_frame_start(ch, state.D)
    )


def optimal_rate_per_slot(
    state: FrameState,
    h: float,
    ch: ChannelModel,
    a_dist: DiscreteDistribution,
) -> float:
    """Rate under per-slot traffic; extra E[e^(A/j)] terms account for the
    arrivals still due before the deadline. Clamped to [0, q]; D=1 drains."""
    if h <= 0.0:
        raise ModelValidationError(f"gain must be > 0, got {h}")
    return _clamped_rate(
        state, ch.effective_gain(h), rate_constant_per_slot(ch, a_dist, state.D)
    )
