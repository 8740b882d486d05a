"""Performance metrics for runs of the allocation dynamics.

All metrics are exact functions of a run (or an explicit allocation
matrix) plus a benchmark.  Multiplicative metrics on agents with zero
utility return ``inf`` rather than raising, so adversarial experiments
still produce comparable reports; the report records which agents were
flagged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import (
    Constrained,
    Proportional,
    RunTrace,
    Seeded,
    SetAside,
    Unconstrained,
    variant_label,
)
from .eg import PrefixSolution
from .model import AgentWeights, InstanceError, ValueSequence

AllocationLike = Union[np.ndarray, RunTrace]

_FLAG_FLOOR = 1e-12  # denominators below this count as zero


def regret(avg_utilities, hindsight_avg_utilities) -> np.ndarray:
    """Per-agent shortfall against the hindsight utilities, clipped at zero."""
    a = np.asarray(avg_utilities, dtype=np.float64)
    h = np.asarray(hindsight_avg_utilities, dtype=np.float64)
    if a.shape != h.shape:
        raise InstanceError("utility vectors differ in length")
    return np.maximum(h - a, 0.0)


def cross_utilities(values: ValueSequence, allocation: AllocationLike) -> np.ndarray:
    """Time-averaged swap utilities: entry (i, k) is agent i's average
    utility if handed agent k's allocation."""
    m = values.matrix
    t, n = values.t, values.n
    if isinstance(allocation, RunTrace):
        trace = allocation
        if trace.t != t or trace.n != n:
            raise InstanceError("trace shape does not match the instance")
        if isinstance(trace.variant, Proportional):
            share = trace.weights.array / trace.weights.total
            return np.outer(m.sum(axis=0), share) / t
        won = np.zeros((n, n))  # won[i, k] = sum of v_i over items won by k
        for k in range(n):
            mask = trace.winners == k
            if mask.any():
                won[:, k] = m[mask].sum(axis=0)
        if isinstance(trace.variant, SetAside):
            half_n = 1.0 / (2.0 * n)
            base = half_n * m.sum(axis=0)
            return (base[:, None] + 0.5 * won) / t
        return won / t
    x = np.asarray(allocation, dtype=np.float64)
    if x.shape != (t, n):
        raise InstanceError("allocation shape does not match the instance")
    return (m.T @ x) / t


def additive_envy(values: ValueSequence, allocation: AllocationLike, weights: AgentWeights) -> np.ndarray:
    """Per-agent envy ``max_k u_ik/B_k - u_ii/B_i`` (k ranges over all
    agents, so the result is nonnegative)."""
    cu = cross_utilities(values, allocation)
    b = weights.array
    own = np.diag(cu) / b
    return (cu / b).max(axis=1) - own


def multiplicative_envy(
    values: ValueSequence, allocation: AllocationLike, weights: AgentWeights
) -> np.ndarray:
    """Per-agent ``max_{k != i} (B_i/B_k) * (u_ik / u_ii)``.

    Agents with (numerically) zero own utility get ``inf`` unless they
    value nobody's bundle, and a single agent gets 0 (no rival).
    """
    cu = cross_utilities(values, allocation)
    b = weights.array
    n = b.size
    out = np.zeros(n)
    for i in range(n):
        others = [k for k in range(n) if k != i]
        if not others:
            out[i] = 0.0
            continue
        rivals = np.array([(b[i] / b[k]) * cu[i, k] for k in others])
        own = cu[i, i]
        if own <= _FLAG_FLOOR:
            out[i] = math.inf if rivals.max() > 0 else 0.0
        else:
            out[i] = float(rivals.max() / own)
    return out


def nash_welfare(utilities, weights: AgentWeights) -> float:
    """Weight-share geometric mean of utilities (0 if any utility is 0)."""
    u = np.asarray(utilities, dtype=np.float64)
    share = weights.array / weights.total
    if np.any(u <= 0):
        return 0.0
    return float(np.exp(np.dot(share, np.log(u))))


def competitive_ratio(utilities_alg, utilities_hindsight, weights: AgentWeights) -> float:
    """Hindsight-over-algorithm Nash welfare ratio (inf if an agent got 0)."""
    ua = np.asarray(utilities_alg, dtype=np.float64)
    uh = np.asarray(utilities_hindsight, dtype=np.float64)
    share = weights.array / weights.total
    if np.any(ua <= _FLAG_FLOOR):
        return math.inf
    return float(np.exp(np.dot(share, np.log(uh / ua))))


def utility_ratio(values: ValueSequence, utilities_alg, weights: AgentWeights) -> float:
    """Best weighted sum of utility ratios over all feasible allocations.

    The objective is linear in the allocation, so the supremum hands each
    item wholly to the agent maximizing ``B_i v_i^tau / U_i``; the value is
    computed in closed form as ``sum_tau max_i B_i v_i^tau / (||B||_1 U_i)``.
    """
    u = np.asarray(utilities_alg, dtype=np.float64)
    if np.any(u <= 0):
        raise InstanceError("utility ratio needs positive algorithm utilities")
    coeff = weights.array / (weights.total * u)
    return float((values.matrix * coeff).max(axis=1).sum())


def seeded_utility_ratio(
    values: ValueSequence, utilities_alg, weights: AgentWeights, seed_utility: float
) -> float:
    """Seeded variant of the utility ratio, with unnormalized weights:
    ``sum_i B_i xi/(U_i+xi) + sum_tau max_i B_i v_i^tau/(U_i+xi)``."""
    if not (seed_utility > 0):
        raise InstanceError("seed_utility must be positive")
    u = np.asarray(utilities_alg, dtype=np.float64)
    b = weights.array
    denom = u + seed_utility
    const = float(np.dot(b, seed_utility / denom))
    coeff = b / denom
    return const + float((values.matrix * coeff).max(axis=1).sum())


@dataclass(frozen=True)
class ExpenditureDeviation:
    """Squared distance of post-warm-up average spend from the weights.

    ``flagged`` marks traces where an infinite (unserved-state) spend
    falls after the warm-up window; the finite-part value is still
    reported for inspection.
    """

    value: float
    flagged: bool
    infinite_rounds_after_warmup: Tuple[int, ...] = ()


def expenditure_deviation(trace: RunTrace, weights: AgentWeights, warmup: int) -> ExpenditureDeviation:
    """``|| (1/t) sum_{tau > warmup} spend^tau - B ||^2`` for pacing runs.

    ``warmup`` must be 0 or one of the trace's checkpoints so the
    cumulative spend at the cut is known exactly.
    """
    if not isinstance(trace.variant, (Unconstrained, Constrained, Seeded, SetAside)):
        raise InstanceError("expenditure deviation is defined for pacing variants")
    if not (0 <= warmup < trace.t):
        raise InstanceError("warmup must lie in [0, t)")
    if warmup == 0:
        spend_at_warmup = np.zeros(trace.n)
    elif warmup in trace.checkpoints:
        spend_at_warmup = trace.checkpoint_spend[trace.checkpoints.index(warmup)]
    else:
        raise InstanceError("warmup must be 0 or one of the trace checkpoints")
    late = [r for r in trace.infinite_spend_rounds if r > warmup]
    avg = (trace.final_spend - spend_at_warmup) / trace.t
    value = float(((avg - weights.array) ** 2).sum())
    return ExpenditureDeviation(value=value, flagged=bool(late), infinite_rounds_after_warmup=tuple(late))


@dataclass(frozen=True)
class TrajectoryPoint:
    """Relative time-averaged regret at one checkpoint.

    ``per_agent[i]`` is ``max(u*_i - ubar_i, 0)/u*_i`` against the prefix
    benchmark; agents flagged by the benchmark (no value seen yet) are
    NaN and excluded from ``max``/``mean``, with their count recorded.
    """

    tau: int
    per_agent: np.ndarray
    max_value: float
    mean_value: float
    excluded: int


def relative_regret_trajectory(
    trace: RunTrace, prefix_solutions: Sequence[PrefixSolution]
) -> List[TrajectoryPoint]:
    """Relative regret of a run against prefix benchmarks at matching taus."""
    cps = dict(zip(trace.checkpoints, trace.checkpoint_utilities))
    out: List[TrajectoryPoint] = []
    for sol in prefix_solutions:
        if sol.tau == trace.t:
            cum = trace.final_utilities
        elif sol.tau in cps:
            cum = cps[sol.tau]
        else:
            raise InstanceError(f"trace has no checkpoint at tau={sol.tau}")
        ubar = cum / sol.tau
        per = np.full(trace.n, np.nan)
        ok = np.ones(trace.n, dtype=bool)
        for i in range(trace.n):
            star = sol.avg_utilities[i]
            if i in sol.flagged or star <= _FLAG_FLOOR:
                ok[i] = False
                continue
            per[i] = max(star - ubar[i], 0.0) / star
        vals = per[ok]
        out.append(
            TrajectoryPoint(
                tau=sol.tau,
                per_agent=per,
                max_value=float(vals.max()) if vals.size else math.nan,
                mean_value=float(vals.mean()) if vals.size else math.nan,
                excluded=int((~ok).sum()),
            )
        )
    return out


@dataclass(frozen=True)
class MetricsReport:
    """Final metrics of one run against a hindsight benchmark."""

    variant: str
    regret: np.ndarray
    additive_envy: np.ndarray
    multiplicative_envy: np.ndarray
    nash_welfare_alg: float
    nash_welfare_hindsight: float
    competitive_ratio: float
    utility_ratio: float
    seeded_ratio: Optional[float] = None
    flagged_agents: Tuple[int, ...] = ()

    def to_json_dict(self) -> dict:
        def _num(v):
            return None if (isinstance(v, float) and math.isinf(v)) else float(v)

        return {
            "variant": self.variant,
            "regret": [float(v) for v in self.regret],
            "additive_envy": [float(v) for v in self.additive_envy],
            "multiplicative_envy": [_num(v) for v in self.multiplicative_envy],
            "nash_welfare_alg": _num(self.nash_welfare_alg),
            "nash_welfare_hindsight": _num(self.nash_welfare_hindsight),
            "competitive_ratio": _num(self.competitive_ratio),
            "utility_ratio": _num(self.utility_ratio),
            "seeded_ratio": None if self.seeded_ratio is None else _num(self.seeded_ratio),
            "flagged_agents": list(self.flagged_agents),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, **kw)


def build_report(
    trace: RunTrace,
    values: ValueSequence,
    weights: AgentWeights,
    hindsight_utilities,
) -> MetricsReport:
    """Assemble the standard final report for one run.

    ``hindsight_utilities`` are cumulative benchmark utilities over the
    full horizon (e.g. ``solve_eg(...).utilities``).
    """
    uh = np.asarray(hindsight_utilities, dtype=np.float64)
    ua = trace.final_utilities
    flagged = tuple(int(i) for i in np.nonzero(ua <= _FLAG_FLOOR)[0])
    env_a = additive_envy(values, trace, weights)
    env_m = multiplicative_envy(values, trace, weights)
    if flagged:
        ur = math.inf
    else:
        ur = utility_ratio(values, ua, weights)
    seeded = None
    if isinstance(trace.variant, Seeded):
        seeded = seeded_utility_ratio(values, ua, weights, trace.variant.seed_utility)
    return MetricsReport(
        variant=variant_label(trace.variant),
        regret=regret(trace.final_avg_utilities, uh / trace.t),
        additive_envy=env_a,
        multiplicative_envy=env_m,
        nash_welfare_alg=nash_welfare(ua, weights),
        nash_welfare_hindsight=nash_welfare(uh, weights),
        competitive_ratio=competitive_ratio(ua, uh, weights),
        utility_ratio=ur,
        seeded_ratio=seeded,
        flagged_agents=flagged,
    )
