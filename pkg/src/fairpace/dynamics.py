"""Online allocation dynamics.

Each dynamic processes the item stream one row at a time and is a pure,
deterministic function of (instance, weights, variant): re-running
produces bit-identical traces.  The pacing variants simulate a
first-price auction each round — an agent bids its pacing multiplier
times its value, the whole item goes to the highest bidder, smallest
index winning ties — and then reset the multiplier to weight divided by
the tracked average utility.

Variants
--------
``Unconstrained``   plain pacing; an agent whose tracked utility is still
                    zero holds a distinguished unserved state and bids
                    infinite on any item it values.
``Constrained``     pacing with the multiplier projected to a fixed
                    per-agent interval after every update.
``Seeded``          pacing where every agent is granted a fictitious
                    initial utility, added once before any item arrives;
                    the unserved state never occurs.
``SetAside``        half of every item is reserved and split equally
                    (1/(2n) to each agent); the other half is auctioned
                    with seeded pacing on values normalized by each
                    agent's monopolistic utility (seed 1/(2n)).
``OneStepGreedy``   gives the item to the agent with the largest exact
                    increment of weighted log welfare.
``Proportional``    splits every item in proportion to the weights; no
                    auction takes place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .model import AgentWeights, InstanceError, ValueSequence, validate_instance

INF = math.inf


@dataclass(frozen=True)
class Unconstrained:
    name: str = "pace"


@dataclass(frozen=True)
class Constrained:
    """Pacing with multipliers projected to ``[lower_i, upper_i]``."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    name: str = "constrained"

    def __post_init__(self):
        lows = tuple(float(x) for x in self.lower)
        highs = tuple(float(x) for x in self.upper)
        if len(lows) != len(highs):
            raise InstanceError("interval bounds differ in length")
        for i, (lo, hi) in enumerate(zip(lows, highs)):
            if not (0 <= lo < hi < INF):
                raise InstanceError(f"need 0 <= lower < upper < inf at agent {i + 1}")
        object.__setattr__(self, "lower", lows)
        object.__setattr__(self, "upper", highs)

    @classmethod
    def from_slack(cls, weights: AgentWeights, slack: float) -> "Constrained":
        """Default intervals ``[B_i/(1+slack), B_i*(1+slack)]``."""
        if slack <= 0:
            raise InstanceError("slack must be positive")
        b = weights.array
        return cls(tuple(b / (1.0 + slack)), tuple(b * (1.0 + slack)))


@dataclass(frozen=True)
class Seeded:
    """Pacing with a positive fictitious starting utility per agent."""

    seed_utility: float
    name: str = "seeded"

    def __post_init__(self):
        if not (float(self.seed_utility) > 0):
            raise InstanceError("seed_utility must be positive")
        object.__setattr__(self, "seed_utility", float(self.seed_utility))


@dataclass(frozen=True)
class SetAside:
    """Half-proportional, half-auctioned pacing.

    ``monopoly_utilities`` are each agent's total value over the whole
    sequence (or a caller-supplied prediction of it); when ``None`` the
    executor fills in the exact column sums.
    """

    monopoly_utilities: Optional[Tuple[float, ...]] = None
    name: str = "setaside"

    def __post_init__(self):
        w = self.monopoly_utilities
        if w is not None:
            w = tuple(float(x) for x in w)
            if any(not (x > 0 and math.isfinite(x)) for x in w):
                raise InstanceError("monopoly utilities must be positive and finite")
            object.__setattr__(self, "monopoly_utilities", w)


@dataclass(frozen=True)
class OneStepGreedy:
    name: str = "greedy"


@dataclass(frozen=True)
class Proportional:
    name: str = "proportional"


Variant = Union[Unconstrained, Constrained, Seeded, SetAside, OneStepGreedy, Proportional]


def resolve_variant(variant: Variant, values: ValueSequence) -> Variant:
    """Fill instance-dependent variant parameters and check dimensions."""
    if isinstance(variant, SetAside):
        if variant.monopoly_utilities is None:
            return replace(
                variant,
                monopoly_utilities=tuple(float(x) for x in values.monopolistic_utilities()),
            )
        if len(variant.monopoly_utilities) != values.n:
            raise InstanceError("monopoly utilities length does not match agent count")
    if isinstance(variant, Constrained) and len(variant.lower) != values.n:
        raise InstanceError("projection intervals length does not match agent count")
    return variant


@dataclass(frozen=True)
class PaceState:
    """One dynamic's per-agent state after ``tau`` completed rounds.

    ``utilities`` are cumulative realized utilities.  ``aux`` holds
    variant internals: the projected multipliers for ``Constrained``,
    the cumulative normalized auction utilities for ``SetAside``, and
    ``None`` otherwise.
    """

    tau: int
    utilities: np.ndarray
    variant: Variant
    weights: AgentWeights
    aux: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.utilities.size)

    @property
    def beta(self) -> np.ndarray:
        """Pacing multipliers; ``inf`` marks the unserved state.

        ``inf`` here is a display marker only — bid computation treats
        unserved agents by case, never by arithmetic on infinities.
        Under the unconstrained (and greedy) rule every agent starts
        unserved; the seeded, projected, and set-aside variants start
        with unit multipliers instead.
        """
        b = self.weights.array
        if self.tau == 0:
            if isinstance(self.variant, (Constrained, Seeded, SetAside, Proportional)):
                return np.ones(self.n)
            return np.full(self.n, INF)
        if isinstance(self.variant, Constrained):
            return self.aux.copy()
        if isinstance(self.variant, Seeded):
            return b / ((self.utilities + self.variant.seed_utility) / self.tau)
        if isinstance(self.variant, SetAside):
            half_n = 1.0 / (2.0 * self.n)
            return b / ((self.aux + half_n) / self.tau)
        with np.errstate(divide="ignore"):
            out = b / (self.utilities / self.tau)
        out[self.utilities == 0] = INF
        return out

    @property
    def averages(self) -> Optional[np.ndarray]:
        """The variant's tracked average utilities (None before round 1).

        For ``Seeded`` this includes the seed: (U + seed)/tau.  For
        ``SetAside`` it is in raw utility units, so that multiplier times
        average equals weight times monopolistic utility.
        """
        if self.tau == 0:
            return None
        if isinstance(self.variant, Seeded):
            return (self.utilities + self.variant.seed_utility) / self.tau
        if isinstance(self.variant, SetAside):
            w = np.asarray(self.variant.monopoly_utilities)
            half_n = 1.0 / (2.0 * self.n)
            return w * ((self.aux + half_n) / self.tau)
        return self.utilities / self.tau


def new_state(variant: Variant, weights: AgentWeights) -> PaceState:
    """Fresh state before any item has arrived."""
    n = weights.n
    if isinstance(variant, SetAside):
        if variant.monopoly_utilities is None:
            raise InstanceError("SetAside state needs resolved monopoly utilities")
        aux = np.zeros(n)
    elif isinstance(variant, Constrained):
        if len(variant.lower) != n:
            raise InstanceError("projection intervals length does not match agent count")
        aux = np.ones(n)
    else:
        aux = None
    return PaceState(tau=0, utilities=np.zeros(n), variant=variant, weights=weights, aux=aux)


@dataclass(frozen=True)
class StepOutcome:
    """Everything one round produced.

    ``bids`` are the decision scores actually compared: multiplier times
    value for the pacing variants (times weight-normalized value for
    ``SetAside``), log-welfare increments for the greedy rule, zeros for
    the proportional baseline.  ``expenditure`` is zero except at the
    winner, where it equals the winning bid; ``inf`` flags a win from the
    unserved state.
    """

    winner: Optional[int]
    allocation: np.ndarray
    bids: np.ndarray
    expenditure: np.ndarray
    utilities: np.ndarray


def _bid_scores(
    variant: Variant,
    b: Sequence[float],
    u: Sequence[float],
    aux,
    tau0: int,
    row: Sequence[float],
    n: int,
) -> List[float]:
    """Decision scores for the next item; INF only from the unserved state."""
    if isinstance(variant, Proportional):
        return [0.0] * n
    if isinstance(variant, OneStepGreedy):
        scores = []
        for i in range(n):
            v = row[i]
            if v <= 0.0:
                scores.append(0.0)
            elif u[i] == 0.0:
                scores.append(INF)
            else:
                scores.append(b[i] * math.log1p(v / u[i]))
        return scores
    if isinstance(variant, SetAside):
        w = variant.monopoly_utilities
        nrow = [row[i] / w[i] for i in range(n)]
        if tau0 == 0:
            return nrow
        half_n = 1.0 / (2.0 * n)
        return [(b[i] / ((aux[i] + half_n) / tau0)) * nrow[i] for i in range(n)]
    if isinstance(variant, Constrained):
        if tau0 == 0:
            return list(row)
        return [aux[i] * row[i] for i in range(n)]
    if isinstance(variant, Seeded):
        if tau0 == 0:
            return list(row)
        xi = variant.seed_utility
        return [(b[i] / ((u[i] + xi) / tau0)) * row[i] for i in range(n)]
    # unconstrained pacing; every agent starts unserved, so round one is
    # governed by the same infinite-bid rule as any other unserved round
    scores = []
    for i in range(n):
        v = row[i]
        if u[i] > 0.0:
            scores.append((b[i] / (u[i] / tau0)) * v)
        else:
            scores.append(INF if v > 0.0 else 0.0)
    return scores


def _argmax(scores: Sequence[float]) -> int:
    w = 0
    best = scores[0]
    for i in range(1, len(scores)):
        if scores[i] > best:
            best = scores[i]
            w = i
    return w


_K_PACE, _K_CONSTRAINED, _K_SEEDED, _K_SETASIDE, _K_GREEDY, _K_PROPORTIONAL = range(6)

_KIND = {
    Unconstrained: _K_PACE,
    Constrained: _K_CONSTRAINED,
    Seeded: _K_SEEDED,
    SetAside: _K_SETASIDE,
    OneStepGreedy: _K_GREEDY,
    Proportional: _K_PROPORTIONAL,
}


class _Runner:
    """Mutable executor shared by the single-step API and the full run.

    The step body repeats the arithmetic of :func:`_bid_scores` verbatim
    so that the full-run loop and the single-step API are bit-identical.
    """

    __slots__ = (
        "variant", "kind", "b", "u", "aux", "tau", "n",
        "spend", "infinite_spend_round", "share",
    )

    def __init__(self, variant: Variant, weights: AgentWeights):
        self.variant = variant
        self.kind = _KIND[type(variant)]
        self.b = [float(x) for x in weights.array]
        self.n = len(self.b)
        self.u = [0.0] * self.n
        self.tau = 0
        self.spend = [0.0] * self.n
        self.infinite_spend_round = [0] * self.n
        if isinstance(variant, SetAside):
            self.aux = [0.0] * self.n
        elif isinstance(variant, Constrained):
            self.aux = [1.0] * self.n
        else:
            self.aux = None
        total = sum(self.b)
        self.share = [x / total for x in self.b]

    def step(self, row: Sequence[float]) -> Tuple[int, List[float]]:
        """Advance one round; returns (winner, bid scores)."""
        kind, n, u, b, tau0 = self.kind, self.n, self.u, self.b, self.tau
        if kind == _K_PACE:
            scores = [
                ((b[i] / (u[i] / tau0)) * row[i])
                if u[i] > 0.0
                else (INF if row[i] > 0.0 else 0.0)
                for i in range(n)
            ]
            w = 0
            best = scores[0]
            for i in range(1, n):
                if scores[i] > best:
                    best = scores[i]
                    w = i
            unserved_win = u[w] == 0.0 and row[w] > 0.0
            u[w] += row[w]
            if unserved_win:
                self.infinite_spend_round[w] = tau0 + 1
            else:
                self.spend[w] += best
            self.tau = tau0 + 1
            return w, scores

        scores = _bid_scores(self.variant, b, u, self.aux, tau0, row, n)
        if kind == _K_PROPORTIONAL:
            for i in range(n):
                u[i] += self.share[i] * row[i]
            self.tau = tau0 + 1
            return -1, scores
        w = _argmax(scores)
        bid = scores[w]
        if kind == _K_SETASIDE:
            half_n = 1.0 / (2.0 * n)
            self.aux[w] += 0.5 * (row[w] / self.variant.monopoly_utilities[w])
            for i in range(n):
                u[i] += half_n * row[i]
            u[w] += 0.5 * row[w]
            self.spend[w] += bid
        else:
            u[w] += row[w]
            if kind == _K_CONSTRAINED:
                tau1 = tau0 + 1
                lo, hi = self.variant.lower, self.variant.upper
                for i in range(n):
                    if u[i] == 0.0:
                        self.aux[i] = hi[i]
                    else:
                        raw = b[i] / (u[i] / tau1)
                        self.aux[i] = min(max(raw, lo[i]), hi[i])
                self.spend[w] += bid
            elif kind == _K_SEEDED:
                self.spend[w] += bid
            # greedy scores are welfare increments, not money: no spend
        self.tau = tau0 + 1
        return w, scores

    def beta(self) -> np.ndarray:
        return PaceState(
            tau=self.tau,
            utilities=np.array(self.u),
            variant=self.variant,
            weights=AgentWeights(np.array(self.b)),
            aux=None if self.aux is None else np.array(self.aux),
        ).beta

    def outcome_row(self, w: int, row: Sequence[float], scores: List[float]) -> StepOutcome:
        n = self.n
        alloc = np.zeros(n)
        util = np.zeros(n)
        exp = np.zeros(n)
        if isinstance(self.variant, Proportional):
            alloc[:] = self.share
            util[:] = np.asarray(self.share) * np.asarray(row)
            return StepOutcome(None, alloc, np.array(scores), exp, util)
        if isinstance(self.variant, SetAside):
            half_n = 1.0 / (2.0 * n)
            alloc[:] = half_n
            alloc[w] += 0.5
            util[:] = half_n * np.asarray(row)
            util[w] += 0.5 * row[w]
            exp[w] = scores[w]
        else:
            alloc[w] = 1.0
            util[w] = row[w]
            if not isinstance(self.variant, OneStepGreedy):
                exp[w] = scores[w]  # inf when won from the unserved state
        return StepOutcome(w, alloc, np.array(scores), exp, util)


def pace_bid(state: PaceState, value_row: Sequence[float]) -> np.ndarray:
    """Decision scores the next auction would compare (``inf`` possible).

    An unserved agent bids infinite on any item it values and zero
    otherwise; under the unconstrained rule that covers every agent in
    round one.  The seeded, projected, and set-aside variants start from
    unit multipliers instead, so their first-round bids are the raw
    (for set-aside: weight-normalized) values.  Greedy scores are the
    exact log-welfare increments; the proportional baseline bids zero.
    """
    row = [float(x) for x in value_row]
    if len(row) != state.n:
        raise InstanceError("value row length does not match agent count")
    if any(x < 0 for x in row):
        raise InstanceError("negative value in row")
    aux = None if state.aux is None else [float(x) for x in state.aux]
    return np.array(
        _bid_scores(
            state.variant,
            [float(x) for x in state.weights.array],
            [float(x) for x in state.utilities],
            aux,
            state.tau,
            row,
            state.n,
        )
    )


def pace_step(state: PaceState, value_row: Sequence[float]) -> Tuple[PaceState, StepOutcome]:
    """Run one auction round; returns the advanced state and its outcome."""
    row = [float(x) for x in value_row]
    if len(row) != state.n:
        raise InstanceError("value row length does not match agent count")
    runner = _Runner(state.variant, state.weights)
    runner.u = [float(x) for x in state.utilities]
    runner.tau = state.tau
    if state.aux is not None:
        runner.aux = [float(x) for x in state.aux]
    w, scores = runner.step(row)
    outcome = runner.outcome_row(max(w, 0), row, scores)
    new = PaceState(
        tau=runner.tau,
        utilities=np.array(runner.u),
        variant=state.variant,
        weights=state.weights,
        aux=None if runner.aux is None else np.array(runner.aux),
    )
    return new, outcome


@dataclass(frozen=True)
class RunTrace:
    """Full record of one dynamic's run.

    ``winners`` holds the winning agent per round (-1 for the
    proportional baseline).  Checkpoint arrays snapshot cumulative
    utilities, multipliers, and cumulative finite expenditure after the
    listed rounds.  ``infinite_spend_rounds[i]`` is the round at which
    agent ``i`` won from the unserved state (0 if it never did); those
    infinite expenditures are excluded from the cumulative sums and
    flagged instead.
    """

    variant: Variant
    weights: AgentWeights
    t: int
    n: int
    winners: np.ndarray
    checkpoints: Tuple[int, ...]
    checkpoint_utilities: np.ndarray
    checkpoint_beta: np.ndarray
    checkpoint_spend: np.ndarray
    final_utilities: np.ndarray
    final_beta: np.ndarray
    final_spend: np.ndarray
    infinite_spend_rounds: Tuple[int, ...]
    instance_ref: Optional[str] = None
    outcomes: Optional[Tuple[StepOutcome, ...]] = None

    @property
    def final_avg_utilities(self) -> np.ndarray:
        """Realized time-averaged utilities U/t."""
        return self.final_utilities / self.t

    def allocation_matrix(self) -> np.ndarray:
        """Dense t x n allocation; rows sum to at most one."""
        x = np.zeros((self.t, self.n))
        if isinstance(self.variant, Proportional):
            x[:] = self.weights.array / self.weights.total
            return x
        rows = np.arange(self.t)
        if isinstance(self.variant, SetAside):
            x[:] = 1.0 / (2.0 * self.n)
            x[rows, self.winners] += 0.5
            return x
        x[rows, self.winners] = 1.0
        return x

    def to_csv(self, path) -> None:
        """Checkpoint table: tau, then per-agent avg utility, beta, spend."""
        import csv as _csv

        with open(path, "w", newline="") as fh:
            wr = _csv.writer(fh, lineterminator="\n")
            names = [f"a{i + 1}" for i in range(self.n)]
            wr.writerow(
                ["tau"]
                + [f"u_avg_{s}" for s in names]
                + [f"beta_{s}" for s in names]
                + [f"spend_{s}" for s in names]
            )
            for k, tau in enumerate(self.checkpoints):
                u_avg = self.checkpoint_utilities[k] / tau
                wr.writerow(
                    [tau]
                    + [repr(float(v)) for v in u_avg]
                    + [repr(float(v)) for v in self.checkpoint_beta[k]]
                    + [repr(float(v)) for v in self.checkpoint_spend[k]]
                )

    def to_json_dict(self, include_winners: bool = True) -> dict:
        def _vals(a):
            return [float(v) for v in a]

        def _beta(a):
            return [None if math.isinf(v) else float(v) for v in a]

        d = {
            "variant": variant_label(self.variant),
            "variant_spec": variant_to_dict(self.variant),
            "weights": _vals(self.weights.array),
            "t": self.t,
            "n": self.n,
            "instance_ref": self.instance_ref,
            "final_utilities": _vals(self.final_utilities),
            "final_avg_utilities": _vals(self.final_avg_utilities),
            "final_beta": _beta(self.final_beta),
            "final_spend": _vals(self.final_spend),
            "infinite_spend_rounds": list(self.infinite_spend_rounds),
            "checkpoints": list(self.checkpoints),
            "checkpoint_utilities": [_vals(r) for r in self.checkpoint_utilities],
            "checkpoint_beta": [_beta(r) for r in self.checkpoint_beta],
            "checkpoint_spend": [_vals(r) for r in self.checkpoint_spend],
        }
        if include_winners:
            d["winners"] = [int(w) for w in self.winners]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "RunTrace":
        """Rebuild a trace saved by :meth:`to_json_dict` (winners required)."""
        if "winners" not in d:
            raise InstanceError("trace JSON lacks the winners array")

        def _beta(rows):
            return np.array(
                [[INF if v is None else float(v) for v in row] for row in rows]
            )

        return cls(
            variant=variant_from_dict(d["variant_spec"]),
            weights=AgentWeights(np.array(d["weights"])),
            t=int(d["t"]),
            n=int(d["n"]),
            winners=np.array(d["winners"], dtype=np.int32),
            checkpoints=tuple(int(c) for c in d["checkpoints"]),
            checkpoint_utilities=np.array(d["checkpoint_utilities"], dtype=np.float64).reshape(
                len(d["checkpoints"]), int(d["n"])
            ),
            checkpoint_beta=_beta(d["checkpoint_beta"]).reshape(len(d["checkpoints"]), int(d["n"])),
            checkpoint_spend=np.array(d["checkpoint_spend"], dtype=np.float64).reshape(
                len(d["checkpoints"]), int(d["n"])
            ),
            final_utilities=np.array(d["final_utilities"]),
            final_beta=_beta([d["final_beta"]])[0],
            final_spend=np.array(d["final_spend"]),
            infinite_spend_rounds=tuple(int(r) for r in d["infinite_spend_rounds"]),
            instance_ref=d.get("instance_ref"),
        )


def variant_label(variant: Variant) -> str:
    """Short human/CLI label, e.g. ``seeded(seed_utility=0.5)``."""
    if isinstance(variant, Seeded):
        return f"seeded(seed_utility={variant.seed_utility:g})"
    if isinstance(variant, Constrained):
        return "constrained"
    return variant.name


def variant_to_dict(variant: Variant) -> dict:
    """JSON-friendly structured form, inverse of :func:`variant_from_dict`."""
    if isinstance(variant, Constrained):
        return {"type": "constrained", "lower": list(variant.lower), "upper": list(variant.upper)}
    if isinstance(variant, Seeded):
        return {"type": "seeded", "seed_utility": variant.seed_utility}
    if isinstance(variant, SetAside):
        w = variant.monopoly_utilities
        return {"type": "setaside", "monopoly_utilities": None if w is None else list(w)}
    return {"type": variant.name}


def variant_from_dict(d: dict, weights: Optional[AgentWeights] = None) -> Variant:
    """Build a variant from its structured form.

    ``constrained`` accepts either explicit ``lower``/``upper`` bounds or
    a ``slack`` (which needs ``weights`` to derive the default intervals).
    """
    kind = d.get("type")
    if kind == "pace":
        return Unconstrained()
    if kind == "constrained":
        if "slack" in d:
            if weights is None:
                raise InstanceError("constrained slack form needs agent weights")
            return Constrained.from_slack(weights, float(d["slack"]))
        if "lower" not in d or "upper" not in d:
            raise InstanceError("constrained needs lower/upper bounds or a slack")
        return Constrained(tuple(d["lower"]), tuple(d["upper"]))
    if kind == "seeded":
        if "seed_utility" not in d:
            raise InstanceError("seeded needs a seed_utility")
        return Seeded(float(d["seed_utility"]))
    if kind == "setaside":
        w = d.get("monopoly_utilities")
        return SetAside(None if w is None else tuple(w))
    if kind == "greedy":
        return OneStepGreedy()
    if kind == "proportional":
        return Proportional()
    raise InstanceError(f"unknown variant type {kind!r}")


def _normalize_checkpoints(checkpoints, t: int) -> Tuple[int, ...]:
    if checkpoints is None:
        return ()
    cps = sorted({int(c) for c in checkpoints})
    if cps and (cps[0] < 1 or cps[-1] > t):
        raise InstanceError(f"checkpoints must lie in [1, {t}]")
    return tuple(cps)


def run(
    values: ValueSequence,
    weights: AgentWeights,
    variant: Variant,
    checkpoints: Optional[Sequence[int]] = None,
    *,
    store_outcomes: bool = False,
    instance_ref: Optional[str] = None,
) -> RunTrace:
    """Execute a dynamic over the whole sequence.

    ``checkpoints`` (sorted round numbers) select where cumulative
    utilities, multipliers, and expenditures are snapshotted; the final
    round is always captured in the ``final_*`` fields.
    """
    report = validate_instance(values, weights)
    if not report.ok:
        raise InstanceError(report.first_failure())
    variant = resolve_variant(variant, values)
    t, n = values.t, values.n
    cps = _normalize_checkpoints(checkpoints, t)

    runner = _Runner(variant, weights)
    winners = np.empty(t, dtype=np.int32)
    k = len(cps)
    cp_u = np.zeros((k, n))
    cp_beta = np.zeros((k, n))
    cp_spend = np.zeros((k, n))
    outcomes: List[StepOutcome] = []

    rows = values.matrix.tolist()
    cp_iter = 0
    for tau0 in range(t):
        row = rows[tau0]
        w, scores = runner.step(row)
        winners[tau0] = w
        if store_outcomes:
            outcomes.append(runner.outcome_row(max(w, 0), row, scores))
        if cp_iter < k and cps[cp_iter] == tau0 + 1:
            cp_u[cp_iter] = runner.u
            cp_beta[cp_iter] = runner.beta()
            cp_spend[cp_iter] = runner.spend
            cp_iter += 1

    return RunTrace(
        variant=variant,
        weights=weights,
        t=t,
        n=n,
        winners=winners,
        checkpoints=cps,
        checkpoint_utilities=cp_u,
        checkpoint_beta=cp_beta,
        checkpoint_spend=cp_spend,
        final_utilities=np.array(runner.u),
        final_beta=runner.beta(),
        final_spend=np.array(runner.spend),
        infinite_spend_rounds=tuple(runner.infinite_spend_round),
        instance_ref=instance_ref,
        outcomes=tuple(outcomes) if store_outcomes else None,
    )


def restrict_instance(
    values: ValueSequence, trace: RunTrace, subset: Sequence[int]
) -> ValueSequence:
    """Drop agents outside ``subset`` and the items they won.

    ``trace`` must come from the unconstrained pacing dynamic on
    ``values``; re-running on the restriction reproduces the kept
    agents' utilities exactly.
    """
    if not isinstance(trace.variant, Unconstrained):
        raise InstanceError("instance restriction is defined for the unconstrained dynamic")
    agents = sorted({int(i) for i in subset})
    if not agents:
        raise InstanceError("agent subset must be nonempty")
    if agents[0] < 0 or agents[-1] >= values.n:
        raise InstanceError("agent subset out of range")
    keep_rows = np.isin(trace.winners, agents)
    matrix = values.matrix[keep_rows][:, agents]
    if matrix.shape[0] == 0:
        raise InstanceError("restriction removed every item")
    names = tuple(values.agents[i] for i in agents)
    return ValueSequence(matrix, names)
