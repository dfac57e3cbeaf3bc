"""Numerical verification of the closed-form policies by finite-horizon
backward induction on a discretized backlog grid.

The recursion minimizes current slot power plus expected cost-to-go,

    W_d(q, h) = min_R  (e^R - 1)/h + E[ W_{d-1}(q - R (+ A), H) ],

with W_1(q, h) = (e^q - 1)/h (forced drain in the last slot). Expectations
over gains and arrivals are exact finite sums; the minimization is a scan
over a rate grid, so the oracle shares no code path with the policy module.

Two rate-bound modes:

* "backlog"  — rates confined to [0, q]: the physically feasible optimum.
* "interior" — rates may be negative or exceed q (backlog goes negative,
  final drain of a negative backlog refunds power): the relaxation whose
  exact solution the closed forms are. Comparing both against the closed
  form verifies the algebra and quantifies the feasibility gap that rate
  clamping introduces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .stochastics import (
    ChannelModel,
    DiscreteDistribution,
    ModelValidationError,
    inv_gain_moment,
)

__all__ = [
    "DpGrid",
    "DpSolution",
    "GridRangeError",
    "BACKLOG",
    "INTERIOR",
    "RATE_SLACK",
    "solve_frame_start",
    "solve_per_slot",
    "dp_value_at",
    "dp_policy_at",
]

BACKLOG = "backlog"
INTERIOR = "interior"

# Extra negative-rate range allowed in interior mode; generous for every
# channel in scope (|ln h| + moment-log terms stay well under this).
RATE_SLACK = 2.0

_BIG = 1e30
_CHUNK_CELLS = 1 << 22


class GridRangeError(ValueError):
    """Query or transition left the trusted grid range."""


@dataclass(frozen=True)
class DpGrid:
    """Uniform backlog grid on [q_min, q_max] with a per-state rate grid."""

    q_max: float
    n_points: int = 4001
    n_rate_points: int = 4001
    q_min: float = 0.0

    def __post_init__(self):
        if not (self.q_max > self.q_min):
            raise ModelValidationError("q_max must exceed q_min")
        if self.n_points < 2 or self.n_rate_points < 2:
            raise ModelValidationError("grids need at least 2 points")

    @classmethod
    def for_frame_data(
        cls,
        max_frame_data: float,
        m: int,
        a_max: float = 0.0,
        mode: str = BACKLOG,
        n_points: int = 4001,
        n_rate_points: int = 4001,
    ) -> "DpGrid":
        """Grid sized so queries up to max_frame_data stay trusted at every
        stage: 1.5x the frame data plus per-stage arrival/rate headroom."""
        if mode == BACKLOG:
            q_min = 0.0
            headroom = (m - 1) * a_max
        else:
            q_min = -(RATE_SLACK * m + 1.0)
            headroom = (m - 1) * (a_max + RATE_SLACK) + 1.0
        return cls(
            q_max=1.5 * max_frame_data + headroom,
            n_points=n_points,
            n_rate_points=n_rate_points,
            q_min=q_min,
        )

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.n_points)


@dataclass
class DpSolution:
    """Backward-induction output.

    values[s-1] is the gain-averaged cost-to-go at stage s (stage 1 = first
    slot of the frame, stage M = forced drain), on the backlog grid.
    policies[s-1][g] is the minimizing rate at stage s given current gain
    gains[g]; the minimizer is gain-dependent, hence the extra axis.
    valid_max[s-1] bounds the backlog range trusted at stage s (arrival and
    negative-rate shifts consume grid headroom stage by stage).
    """

    grid: DpGrid
    m: int
    gains: tuple[float, ...]
    values: np.ndarray
    policies: np.ndarray
    valid_max: tuple[float, ...]
    mode: str
    kind: str

    def stage_values(self, stage: int) -> np.ndarray:
        self._check_stage(stage)
        return self.values[stage - 1]

    def _check_stage(self, stage: int) -> None:
        if not (1 <= stage <= self.m):
            raise GridRangeError(f"stage must be in 1..{self.m}, got {stage}")


def _stage_sweep(
    qgrid: np.ndarray,
    vbar_prev: np.ndarray,
    h_eff: float,
    mode: str,
    grid: DpGrid,
    arrivals: Optional[DiscreteDistribution],
    n_rate: int,
) -> tuple[np.ndarray, np.ndarray]:
    """One Bellman minimization for a single current gain.

    Returns (W(q, h), argmin rate per q). Chunked over the backlog grid to
    bound the (n_q x n_rate) working set.
    """
    n_q = qgrid.size
    u = np.linspace(0.0, 1.0, n_rate)
    w = np.empty(n_q)
    pol = np.empty(n_q)
    chunk = max(1, _CHUNK_CELLS // n_rate)
    for lo in range(0, n_q, chunk):
        q = qgrid[lo : lo + chunk]
        if mode == BACKLOG:
            r_lo = np.zeros_like(q)
            r_hi = np.maximum(q, 0.0)
        else:
            r_lo = np.full_like(q, -RATE_SLACK)
            r_hi = np.maximum(q - grid.q_min, 0.0)
        rates = r_lo[:, None] + (r_hi - r_lo)[:, None] * u[None, :]
        q_next = q[:, None] - rates
        # transitions that leave the grid are infeasible, not clipped:
        # clipping would understate the cost of piling up backlog and let
        # the minimizer exploit the boundary.
        bad = (q_next < grid.q_min - 1e-12) | (q_next > grid.q_max + 1e-12)
        q_next = np.clip(q_next, grid.q_min, grid.q_max)
        if arrivals is None:
            future = np.interp(q_next, qgrid, vbar_prev)
        else:
            future = np.zeros_like(q_next)
            for a, pa in zip(arrivals.support, arrivals.probs):
                future += pa * np.interp(
                    np.minimum(q_next + a, grid.q_max), qgrid, vbar_prev
                )
        cost = np.expm1(rates) / h_eff + future
        cost[bad] = _BIG
        idx = np.argmin(cost, axis=1)
        rows = np.arange(q.size)
        w[lo : lo + chunk] = cost[rows, idx]
        pol[lo : lo + chunk] = rates[rows, idx]
    return w, pol


def _solve(
    m: int,
    ch: ChannelModel,
    grid: DpGrid,
    arrivals: Optional[DiscreteDistribution],
    mode: str,
    kind: str,
) -> DpSolution:
    if m < 1:
        raise ModelValidationError(f"horizon must be >= 1, got {m}")
    if mode not in (BACKLOG, INTERIOR):
        raise ModelValidationError(f"unknown rate-bound mode {mode!r}")
    if mode == INTERIOR and grid.q_min >= 0.0:
        raise GridRangeError(
            "interior mode needs q_min < 0 so overdrained backlogs are on the "
            "grid; build the grid with DpGrid.for_frame_data(..., mode='interior')"
        )
    if mode == BACKLOG and grid.q_min > 0.0:
        raise GridRangeError("backlog mode needs q_min <= 0 to cover drain to 0")

    qgrid = grid.points
    eff = ch.effective_gains
    e_inv = inv_gain_moment(ch, 1)

    # stage M (last slot): forced full drain.
    vbar = np.expm1(qgrid) * e_inv
    drain_pol = np.tile(np.maximum(qgrid, 0.0), (len(eff.support), 1))
    vbars = [vbar]
    pols = [drain_pol]

    for _d in range(2, m + 1):
        vbar_new = np.zeros_like(vbar)
        stage_pol = np.empty((len(eff.support), qgrid.size))
        for g, (h, ph) in enumerate(zip(eff.support, eff.probs)):
            w, pol = _stage_sweep(
                qgrid, vbar, h, mode, grid, arrivals, grid.n_rate_points
            )
            vbar_new += ph * w
            stage_pol[g] = pol
        vbar = vbar_new
        vbars.append(vbar)
        pols.append(stage_pol)

    # per-stage trusted range: each remaining slot consumes headroom equal
    # to the worst upward backlog shift it can see.
    shift = 0.0
    if arrivals is not None:
        shift += arrivals.max_value
    if mode == INTERIOR:
        shift += RATE_SLACK
    valid = tuple(grid.q_max - (m - s) * shift for s in range(1, m + 1))

    values = np.stack([vbars[m - s] for s in range(1, m + 1)])
    policies = np.stack([pols[m - s] for s in range(1, m + 1)])
    return DpSolution(
        grid=grid,
        m=m,
        gains=tuple(ch.gains.support),
        values=values,
        policies=policies,
        valid_max=valid,
        mode=mode,
        kind=kind,
    )


def solve_frame_start(
    m: int, ch: ChannelModel, grid: DpGrid, mode: str = BACKLOG
) -> DpSolution:
    """Solve the frame-start recursion for horizon m.

    Stage-M values equal the forced-drain cost (e^q - 1) E[1/H] exactly at
    grid points; earlier stages satisfy the Bellman recursion on the rate
    grid with linear interpolation between backlog grid points.
    """
    return _solve(m, ch, grid, arrivals=None, mode=mode, kind="frame_start")


def solve_per_slot(
    m: int,
    ch: ChannelModel,
    a_dist: DiscreteDistribution,
    grid: DpGrid,
    mode: str = BACKLOG,
) -> DpSolution:
    """Solve the per-slot-arrival recursion; the post-decision backlog gains
    one arrival per remaining slot, which must stay inside the grid (the
    trusted range shrinks by max A per stage; see DpSolution.valid_max)."""
    sol = _solve(m, ch, grid, arrivals=a_dist, mode=mode, kind="per_slot")
    if sol.valid_max[0] <= max(0.0, grid.q_min):
        raise GridRangeError(
            "arrival headroom exhausted the grid at stage 1; enlarge q_max "
            f"(got {grid.q_max}, trusted stage-1 max {sol.valid_max[0]:.3g})"
        )
    return sol


def _check_query(sol: DpSolution, stage: int, q: float) -> None:
    sol._check_stage(stage)
    if q < sol.grid.q_min - 1e-12 or q > sol.valid_max[stage - 1] + 1e-12:
        raise GridRangeError(
            f"backlog {q} outside trusted range "
            f"[{sol.grid.q_min}, {sol.valid_max[stage - 1]:.6g}] at stage {stage}; "
            "enlarge q_max"
        )


def dp_value_at(sol: DpSolution, stage: int, q: float) -> float:
    """Gain-averaged cost-to-go at (stage, q); linear interpolation, exact
    at grid points. Raises GridRangeError outside the trusted range."""
    _check_query(sol, stage, q)
    return float(np.interp(q, sol.grid.points, sol.values[stage - 1]))


def dp_policy_at(sol: DpSolution, stage: int, h: float, q: float) -> float:
    """Minimizing rate at (stage, current gain h, backlog q)."""
    _check_query(sol, stage, q)
    try:
        g = sol.gains.index(h)
    except ValueError:
        raise ModelValidationError(f"gain {h} not in channel support {sol.gains}")
    return float(np.interp(q, sol.grid.points, sol.policies[stage - 1][g]))
