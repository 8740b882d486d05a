"""Seeded input generators and adversarial instance constructions.

Randomness comes from numpy's counter-based Philox bit generator with
the key ``(seed << 64) + repetition``, and every model consumes exactly
one uniform draw per round.  Generation is therefore a pure function of
(spec, repetition): bit-identical across runs and platforms, and
parallel repetitions are independent of scheduling.

Stochastic models
-----------------
``IID``        rows drawn independently from one finite distribution.
``Periodic``   position ``tau`` in a period of length q samples uniformly
               from pool ``tau mod q``; positions are independent.
``Block``      a partition of the horizon with one distribution per
               block; each block emits a fixed multiset (expected counts,
               largest-remainder rounding) in a shuffled order, which
               correlates rows within the block while keeping the block's
               empirical composition pinned.
``Ergodic``    a finite Markov chain over value vectors.
``Corrupted``  independent rounds from a base distribution, except listed
               rounds whose distribution is replaced outright.

Adversarial constructions
-------------------------
``adv_envy_worstcase``      a two-agent phased instance driving the
                            pacing dynamic to its worst multiplicative
                            envy for a given extremity.
``adv_cr_killer``           an adaptive construction that zeroes the
                            lowest-utility agent's values at each phase
                            end, certifying a lower bound on the
                            competitive ratio of the attacked policy.
``adv_constrained_failure`` the constant instance that starves agent 2
                            under interval-projected pacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import Variant, _Runner
from .model import AgentWeights, InstanceError, ValueSequence


# --------------------------------------------------------------------------
# finite distributions over value vectors


@dataclass(frozen=True)
class FiniteDistribution:
    """Probability distribution over finitely many value vectors."""

    support: np.ndarray  # (m, n) nonnegative
    probs: np.ndarray  # (m,) summing to one

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=np.float64)
        pr = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if sup.ndim != 2 or sup.shape[0] != pr.size or sup.shape[0] < 1:
            raise InstanceError("support and probs shapes do not match")
        if not np.all(np.isfinite(sup)) or np.any(sup < 0):
            raise InstanceError("support vectors must be nonnegative and finite")
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-12:
            raise InstanceError("probs must be nonnegative and sum to one")
        if np.any(pr @ sup <= 0):
            i = int(np.argmax(pr @ sup <= 0))
            raise InstanceError(f"agent {i + 1} has zero expected value")
        sup = np.ascontiguousarray(sup)
        sup.setflags(write=False)
        pr = np.ascontiguousarray(pr)
        pr.setflags(write=False)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", pr)

    @classmethod
    def uniform(cls, support) -> "FiniteDistribution":
        sup = np.asarray(support, dtype=np.float64)
        return cls(sup, np.full(sup.shape[0], 1.0 / sup.shape[0]))

    @property
    def n(self) -> int:
        return int(self.support.shape[1])


# --------------------------------------------------------------------------
# model specs


@dataclass(frozen=True)
class IID:
    dist: FiniteDistribution
    name: str = "iid"


@dataclass(frozen=True)
class Periodic:
    """One pool of vectors per position within the period; uniform draws."""

    pools: Tuple[np.ndarray, ...]
    name: str = "periodic"

    def __post_init__(self):
        pools = tuple(np.ascontiguousarray(p, dtype=np.float64) for p in self.pools)
        if not pools:
            raise InstanceError("need at least one pool")
        n = pools[0].shape[1]
        for p in pools:
            if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] != n:
                raise InstanceError("pools must be nonempty and share the agent count")
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise InstanceError("pool vectors must be nonnegative and finite")
            p.setflags(write=False)
        object.__setattr__(self, "pools", pools)

    @property
    def period(self) -> int:
        return len(self.pools)


@dataclass(frozen=True)
class Block:
    """Partition of the horizon with a distribution per block.

    ``max_delta``, when given, asserts a budget on the declared
    nonstationarity: generation fails if the exact average TV distance
    of the block distributions from their mixture exceeds it.
    """

    lengths: Tuple[int, ...]
    dists: Tuple[FiniteDistribution, ...]
    max_delta: Optional[float] = None
    name: str = "block"

    def __post_init__(self):
        lengths = tuple(int(x) for x in self.lengths)
        if len(lengths) != len(self.dists) or not lengths:
            raise InstanceError("need one distribution per block")
        if any(x < 1 for x in lengths):
            raise InstanceError("block lengths must be positive")
        n = self.dists[0].n
        if any(d.n != n for d in self.dists):
            raise InstanceError("block distributions must share the agent count")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "dists", tuple(self.dists))


@dataclass(frozen=True)
class Ergodic:
    """Finite Markov chain over value vectors; row one is the start state."""

    states: np.ndarray  # (m, n)
    transitions: np.ndarray  # (m, m), rows sum to one
    start: int = 0
    name: str = "ergodic"

    def __post_init__(self):
        st = np.ascontiguousarray(self.states, dtype=np.float64)
        tr = np.ascontiguousarray(self.transitions, dtype=np.float64)
        if st.ndim != 2 or tr.shape != (st.shape[0], st.shape[0]):
            raise InstanceError("states and transition matrix shapes do not match")
        if not np.all(np.isfinite(st)) or np.any(st < 0):
            raise InstanceError("state vectors must be nonnegative and finite")
        if np.any(tr < 0) or np.any(np.abs(tr.sum(axis=1) - 1.0) > 1e-12):
            raise InstanceError("transition rows must be distributions")
        if not (0 <= int(self.start) < st.shape[0]):
            raise InstanceError("start state out of range")
        st.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "transitions", tr)
        object.__setattr__(self, "start", int(self.start))


@dataclass(frozen=True)
class Corrupted:
    """IID base distribution with listed rounds replaced outright.

    ``corruptions`` maps 1-based round numbers to replacement
    distributions; all rounds stay independent.
    """

    base: FiniteDistribution
    corruptions: Mapping[int, FiniteDistribution] = field(default_factory=dict)
    max_delta: Optional[float] = None
    name: str = "corrupted"

    def __post_init__(self):
        corr = dict(self.corruptions)
        for r, d in corr.items():
            if int(r) < 1:
                raise InstanceError("corruption rounds are 1-based")
            if d.n != self.base.n:
                raise InstanceError("corruption distributions must share the agent count")
        object.__setattr__(self, "corruptions", corr)


ModelVariant = Union[IID, Periodic, Block, Ergodic, Corrupted]


@dataclass(frozen=True)
class InputModelSpec:
    """A generator description plus horizon and 64-bit seed."""

    model: ModelVariant
    t: int
    seed: int

    def __post_init__(self):
        if int(self.t) < 1:
            raise InstanceError("t must be positive")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)


# --------------------------------------------------------------------------
# generation


def _round_uniforms(seed: int, repetition: int, count: int) -> np.ndarray:
    """One float64 uniform per round from the (seed, repetition) substream."""
    key = ((int(seed) & 0xFFFFFFFFFFFFFFFF) << 64) + (int(repetition) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key)).random(count)


def _sample_indices(dist: FiniteDistribution, uniforms: np.ndarray) -> np.ndarray:
    cum = np.cumsum(dist.probs)
    idx = np.searchsorted(cum, uniforms, side="right")
    return np.minimum(idx, dist.probs.size - 1)


def _largest_remainder_counts(length: int, probs: np.ndarray) -> np.ndarray:
    """Integer counts summing to ``length`` with quotas ``length * probs``."""
    quota = length * probs
    counts = np.floor(quota).astype(np.int64)
    short = length - int(counts.sum())
    if short > 0:
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def gen(spec: InputModelSpec, repetition: int = 0) -> ValueSequence:
    """Generate the value sequence for one repetition of a spec."""
    t = spec.t
    u = _round_uniforms(spec.seed, repetition, t)
    model = spec.model
    if isinstance(model, IID):
        rows = model.dist.support[_sample_indices(model.dist, u)]
    elif isinstance(model, Periodic):
        q = model.period
        pos = np.arange(t) % q
        n = model.pools[0].shape[1]
        rows = np.empty((t, n))
        for j, pool in enumerate(model.pools):
            mask = pos == j
            size = pool.shape[0]
            idx = np.minimum((u[mask] * size).astype(np.int64), size - 1)
            rows[mask] = pool[idx]
    elif isinstance(model, Block):
        if sum(model.lengths) != t:
            raise InstanceError(f"block lengths sum to {sum(model.lengths)}, not t={t}")
        if model.max_delta is not None:
            delta = empirical_tv_delta(spec)
            if delta > model.max_delta + 1e-12:
                raise InstanceError(
                    f"declared block nonstationarity {delta:.6g} exceeds budget {model.max_delta:.6g}"
                )
        parts = []
        start = 0
        for length, dist in zip(model.lengths, model.dists):
            counts = _largest_remainder_counts(length, dist.probs)
            multiset = np.repeat(np.arange(dist.probs.size), counts)
            order = np.argsort(u[start : start + length], kind="stable")
            parts.append(dist.support[multiset[order]])
            start += length
        rows = np.concatenate(parts, axis=0)
    elif isinstance(model, Ergodic):
        cum = np.cumsum(model.transitions, axis=1)
        m = model.states.shape[0]
        idx = np.empty(t, dtype=np.int64)
        s = model.start
        for tau in range(t):
            idx[tau] = s
            s = min(int(np.searchsorted(cum[s], u[tau], side="right")), m - 1)
        rows = model.states[idx]
    elif isinstance(model, Corrupted):
        if model.max_delta is not None:
            delta = empirical_tv_delta(spec)
            if delta > model.max_delta + 1e-12:
                raise InstanceError(
                    f"declared corruption {delta:.6g} exceeds budget {model.max_delta:.6g}"
                )
        rows = model.base.support[_sample_indices(model.base, u)]
        for r, dist in sorted(model.corruptions.items()):
            if r > t:
                continue
            rows[r - 1] = dist.support[int(_sample_indices(dist, u[r - 1 : r])[0])]
    else:
        raise InstanceError(f"unknown input model {type(model).__name__}")
    return ValueSequence(rows)


# --------------------------------------------------------------------------
# declared nonstationarity


def _tv(p: Dict[tuple, float], q: Dict[tuple, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _as_pmf(dist: FiniteDistribution) -> Dict[tuple, float]:
    pmf: Dict[tuple, float] = {}
    for vec, pr in zip(dist.support, dist.probs):
        key = tuple(float(x) for x in vec)
        pmf[key] = pmf.get(key, 0.0) + float(pr)
    return pmf


def empirical_tv_delta(spec: InputModelSpec) -> float:
    """Exact average TV distance of per-round/per-block distributions
    from their mixture, computed from the declared spec (not samples).

    Defined for ``Block`` (length-weighted over blocks) and ``Corrupted``
    (uniform over rounds) models.
    """
    model = spec.model
    t = spec.t
    if isinstance(model, Block):
        if sum(model.lengths) != t:
            raise InstanceError(f"block lengths sum to {sum(model.lengths)}, not t={t}")
        pmfs = [_as_pmf(d) for d in model.dists]
        mixture: Dict[tuple, float] = {}
        for length, pmf in zip(model.lengths, pmfs):
            wgt = length / t
            for k, v in pmf.items():
                mixture[k] = mixture.get(k, 0.0) + wgt * v
        return sum(
            length * _tv(pmf, mixture) for length, pmf in zip(model.lengths, pmfs)
        ) / t
    if isinstance(model, Corrupted):
        base = _as_pmf(model.base)
        corrupt = {r: _as_pmf(d) for r, d in model.corruptions.items() if r <= t}
        clean = t - len(corrupt)
        mixture: Dict[tuple, float] = {}
        for k, v in base.items():
            mixture[k] = mixture.get(k, 0.0) + v * (clean / t)
        for pmf in corrupt.values():
            for k, v in pmf.items():
                mixture[k] = mixture.get(k, 0.0) + v / t
        total = clean * _tv(base, mixture) + sum(_tv(pmf, mixture) for pmf in corrupt.values())
        return total / t
    raise InstanceError("nonstationarity budget is defined for block and corrupted models")


def ergodic_deviation(model: Ergodic, iota: int, t: int) -> float:
    """Conservative mixing deviation of the chain at lag ``iota``:
    the largest TV distance between any state's ``iota``-step transition
    law and the horizon-averaged marginal distribution."""
    if iota < 1:
        raise InstanceError("iota must be at least 1")
    m = model.states.shape[0]
    mu = np.zeros(m)
    mu[model.start] = 1.0
    acc = np.zeros(m)
    for _ in range(t):
        acc += mu
        mu = mu @ model.transitions
    marg = acc / t
    piota = np.linalg.matrix_power(model.transitions, iota)
    return float(0.5 * np.abs(piota - marg).sum(axis=1).max())


# --------------------------------------------------------------------------
# adversarial constructions


@dataclass(frozen=True)
class EnvyWorstCase:
    """Phased two-agent instance plus its envy prediction.

    ``predicted_envy`` is implied by the realized integer phase lengths
    (not the limiting formula): total forgone value of agent 2 divided
    by its phase-one utility.  ``growth`` is the realized per-phase value
    ratio after adjusting the requested one so the level count is an
    integer.
    """

    values: ValueSequence
    predicted_envy: float
    growth: float
    levels: int
    phase_lengths: Tuple[int, ...]


def adv_envy_worstcase(extremity: float, growth: float, base_length: int) -> EnvyWorstCase:
    """Worst-case envy instance for the pacing dynamic.

    Agent 2 values every item; agent 1's values climb a geometric ladder
    from ``extremity`` to one so that each phase ends with the auction
    decision exactly at its boundary.  The requested ``growth`` ratio is
    adjusted to the nearest value making the ladder land exactly on one.
    """
    if not (0 < extremity <= 1):
        raise InstanceError("extremity must lie in (0, 1]")
    if base_length < 1:
        raise InstanceError("base_length must be positive")
    r = int(base_length)
    if extremity == 1.0:
        k = 0
        a = growth
    else:
        if not (growth > 1):
            raise InstanceError("growth must exceed 1")
        k = max(1, round(math.log(1 / extremity) / math.log(growth)))
        a = (1 / extremity) ** (1 / k)
    blocks: List[np.ndarray] = [
        np.tile([0.0, 1.0], (r, 1)),
        np.tile([extremity, 1.0], (r, 1)),
    ]
    lengths = [r, r]
    if k > 0:
        len_b = math.ceil((1 - 1 / a) * r)
        len_c = math.ceil((1 - 1 / a) * r / extremity)
        levels = [extremity * a**j for j in range(1, k + 1)]
        levels[-1] = 1.0  # exact top keeps the extremity of the instance exact
        for v1 in levels:
            blocks.append(np.tile([v1, 1.0], (len_b, 1)))
            lengths.append(len_b)
        for v1 in levels:
            blocks.append(np.tile([v1, extremity], (len_c, 1)))
            lengths.append(len_c)
    matrix = np.concatenate(blocks, axis=0)
    w2 = float(matrix[:, 1].sum())
    predicted = (w2 - r) / r
    return EnvyWorstCase(
        values=ValueSequence(matrix),
        predicted_envy=predicted,
        growth=a,
        levels=k,
        phase_lengths=tuple(lengths),
    )


@dataclass(frozen=True)
class KillerResult:
    """Adaptive competitive-ratio attack against one policy.

    ``bound`` certifies that any online policy's competitive ratio on
    ``values`` is at least ``(n! * prod_k (t_k - t_{k-1}) / t_k)^(1/n)``;
    the witness allocation concentrating phase k on ``kill_order[k]``
    achieves ``witness_utilities`` exactly.
    """

    values: ValueSequence
    bound: float
    kill_order: Tuple[int, ...]
    witness_utilities: Tuple[float, ...]
    policy_utilities: np.ndarray
    phase_ends: Tuple[int, ...]


def adv_cr_killer(
    num_agents: int, phase_ends: Sequence[int], variant: Variant
) -> KillerResult:
    """Build the phase-kill instance adaptively against a policy.

    Phase 1 is all-ones; at each phase end the surviving agent with the
    lowest cumulative utility under the attacked policy (smallest index
    on ties) has its value zeroed for the rest of the horizon.  Agents
    carry equal weights — the certified bound is derived for that case.
    """
    ends = [int(x) for x in phase_ends]
    n = int(num_agents)
    if n < 1:
        raise InstanceError("need at least one agent")
    if len(ends) < n:
        raise InstanceError(f"{n} agents need {n} phases, got {len(ends)}")
    if len(ends) > n:
        raise InstanceError("one phase per agent")
    if ends[0] < 1 or any(a <= b for b, a in zip(ends, ends[1:])):
        raise InstanceError("phase ends must be strictly increasing and positive")

    weights = AgentWeights.equal(n)
    runner = _Runner(variant, weights)
    alive = [True] * n
    kill_order: List[int] = []
    blocks: List[np.ndarray] = []
    prev = 0
    for k, end in enumerate(ends):
        row = [1.0 if alive[i] else 0.0 for i in range(n)]
        length = end - prev
        blocks.append(np.tile(row, (length, 1)))
        for _ in range(length):
            runner.step(row)
        prev = end
        if k < n - 1:
            candidates = [i for i in range(n) if alive[i]]
            victim = min(candidates, key=lambda i: (runner.u[i], i))
            alive[victim] = False
            kill_order.append(victim)
    kill_order.append(next(i for i in range(n) if alive[i]))

    matrix = np.concatenate(blocks, axis=0)
    spans = [ends[0]] + [b - a for a, b in zip(ends, ends[1:])]
    bound = (math.factorial(n) * math.prod(s / e for s, e in zip(spans, ends))) ** (1.0 / n)
    return KillerResult(
        values=ValueSequence(matrix),
        bound=float(bound),
        kill_order=tuple(kill_order),
        witness_utilities=tuple(float(s) for s in spans),
        policy_utilities=np.array(runner.u),
        phase_ends=tuple(ends),
    )


def adv_constrained_failure(upper_bound_2: float, value_cap: float, t: int) -> ValueSequence:
    """Constant two-agent instance that starves agent 2 under projected
    pacing with upper bounds ``r_1 >= r_2 = upper_bound_2``: both agents
    value every item at ``min(1/r_2, value_cap)``."""
    if not (upper_bound_2 > 0) or not (value_cap > 0):
        raise InstanceError("bounds must be positive")
    if t < 1:
        raise InstanceError("t must be positive")
    c = min(1.0 / upper_bound_2, value_cap)
    return ValueSequence(np.full((int(t), 2), c))
