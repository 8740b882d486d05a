"""Core domain types for online fair-allocation instances.

An instance is a matrix of item values (one row per item, in arrival
order, one column per agent) together with a vector of positive agent
weights.  Everything downstream — the allocation dynamics, the
equilibrium benchmark, the metrics — consumes these two objects.

All values are stored as float64.  Types are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np


class InstanceError(ValueError):
    """Raised for malformed instance files or ill-formed instance data."""


def _frozen_array(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AgentWeights:
    """Positive, finite agent weights (budgets in the market reading)."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise InstanceError("need at least one agent weight")
        if not np.all(np.isfinite(arr)):
            raise InstanceError("agent weights must be finite")
        if np.any(arr <= 0):
            i = int(np.argmax(arr <= 0))
            raise InstanceError(f"nonpositive weight at agent {i + 1}")
        object.__setattr__(self, "array", _frozen_array(arr))

    @classmethod
    def equal(cls, n: int) -> "AgentWeights":
        """Unit weight for each of ``n`` agents."""
        return cls(np.ones(n))

    @property
    def n(self) -> int:
        return int(self.array.size)

    @property
    def total(self) -> float:
        """L1 norm of the weights."""
        return float(self.array.sum())

    def __len__(self) -> int:
        return self.n


def _default_agent_names(n: int) -> Tuple[str, ...]:
    return tuple(f"a{i + 1}" for i in range(n))


@dataclass(frozen=True)
class ValueSequence:
    """A ``t x n`` matrix of nonnegative item values in arrival order.

    Row ``tau`` holds every agent's value for the item arriving at step
    ``tau`` (rows are 0-indexed in code, 1-based in messages).  ``agents``
    carries the column names from the CSV header, if any.
    """

    matrix: np.ndarray
    agents: Tuple[str, ...] = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise InstanceError(f"value matrix must be 2-D, got {m.ndim}-D")
        if m.shape[0] < 1 or m.shape[1] < 1:
            raise InstanceError("value matrix needs at least one item and one agent")
        object.__setattr__(self, "matrix", _frozen_array(m))
        names = tuple(self.agents) or _default_agent_names(m.shape[1])
        if len(names) != m.shape[1]:
            raise InstanceError(
                f"{len(names)} agent names for {m.shape[1]} value columns"
            )
        object.__setattr__(self, "agents", names)

    @property
    def t(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n(self) -> int:
        return int(self.matrix.shape[1])

    def monopolistic_utilities(self) -> np.ndarray:
        """Per-agent total value of the whole sequence (column sums)."""
        return self.matrix.sum(axis=0)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_instance`; carries every failure found."""

    ok: bool
    failures: Tuple[str, ...] = ()

    def first_failure(self) -> Optional[str]:
        return self.failures[0] if self.failures else None


def validate_instance(values: ValueSequence, weights: AgentWeights) -> ValidationReport:
    """Check an instance for well-formedness without raising.

    Reported failures: dimension mismatch, NaN or negative entries
    (located by 1-based item and agent index), nonpositive weights, and
    agents whose values are all zero (these make the multiplicative
    metrics undefined, so they are rejected here rather than carried).
    """
    failures: List[str] = []
    m = values.matrix
    if weights.n != values.n:
        failures.append(
            f"dimension mismatch: {weights.n} weights for {values.n} agents"
        )
    bad = ~np.isfinite(m)
    if bad.any():
        tau, i = np.argwhere(bad)[0]
        failures.append(f"non-finite value at item {tau + 1}, agent {i + 1}")
    neg = m < 0
    if neg.any():
        tau, i = np.argwhere(neg)[0]
        failures.append(f"negative value at item {tau + 1}, agent {i + 1}")
    with np.errstate(invalid="ignore"):
        col_pos = (m > 0).any(axis=0)
    for i in np.nonzero(~col_pos)[0]:
        failures.append(f"agent {i + 1} has all-zero values")
    # AgentWeights already rejects nonpositive entries at construction;
    # re-check here so reports built from raw arrays stay complete.
    if np.any(weights.array <= 0):
        i = int(np.argmax(weights.array <= 0))
        failures.append(f"nonpositive weight at agent {i + 1}")
    return ValidationReport(ok=not failures, failures=tuple(failures))


def load_csv(path) -> ValueSequence:
    """Parse an instance CSV: header row of agent names, one item per row.

    Raises :class:`InstanceError` naming the offending line for ragged
    rows, malformed numbers, or an empty data section.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InstanceError("empty file") from None
        names = tuple(name.strip() for name in header)
        if not names or any(not s for s in names):
            raise InstanceError("line 1: empty agent name in header")
        rows: List[List[float]] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue  # ignore blank lines
            if len(rec) != len(names):
                raise InstanceError(
                    f"line {lineno}: ragged row ({len(rec)} fields, expected {len(names)})"
                )
            try:
                rows.append([float(s) for s in rec])
            except ValueError:
                raise InstanceError(f"line {lineno}: malformed number") from None
        if not rows:
            raise InstanceError("no items")
    return ValueSequence(np.array(rows, dtype=np.float64), names)


def save_csv(path, values: ValueSequence) -> None:
    """Write an instance CSV that :func:`load_csv` reads back bit-exactly.

    Floats are rendered with ``repr``, which emits the shortest decimal
    string that round-trips the exact float64.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(values.agents)
        for row in values.matrix:
            writer.writerow([repr(float(x)) for x in row])


def normalize_values(values: ValueSequence) -> ValueSequence:
    """Rescale each agent's column so its values average to one per item.

    Column ``i`` is multiplied by ``t / sum_tau v[tau][i]``; afterwards each
    column sums to ``t``.  Errors on agents whose values are all zero.
    """
    sums = values.matrix.sum(axis=0)
    for i in np.nonzero(sums <= 0)[0]:
        raise InstanceError(f"agent {i + 1} has all-zero values, cannot normalize")
    scaled = values.matrix * (values.t / sums)
    return ValueSequence(scaled, values.agents)


def extremity(values: ValueSequence) -> float:
    """Smallest ratio, over agents, of minimum nonzero value to maximum value.

    The result lies in (0, 1]; instances score 1 when each agent's nonzero
    values are all equal.  Errors on agents with no positive value.
    """
    m = values.matrix
    eps = math.inf
    for i in range(values.n):
        col = m[:, i]
        pos = col[col > 0]
        if pos.size == 0:
            raise InstanceError(f"agent {i + 1} has all-zero values")
        eps = min(eps, float(pos.min() / col.max()))
    return eps
