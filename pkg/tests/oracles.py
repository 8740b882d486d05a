"""Independent oracles used by the test suite.

Each oracle derives expected values by a different route than the code
under test: exhaustive grid search / enumeration, closed-form one-item
splits, or direct objective evaluation.  They are deliberately slow and
simple.
"""

from __future__ import annotations

import itertools
import math
from typing import List, Tuple

import numpy as np


def eg_grid_oracle(matrix: np.ndarray, weights: np.ndarray, grid: int = 1000) -> np.ndarray:
    """Two-agent welfare maximum over per-item splits on a 1/grid lattice.

    Exhaustive over all ``(grid+1)^t`` split vectors.  For t <= 2 the
    enumeration is materialized directly; for t = 3 it runs as an exact
    dynamic program over the reachable utility lattice (requires the
    values to be integer multiples of a common quantum), pruned to the
    Pareto frontier — the objective is increasing in both utilities, so
    the frontier maximum equals the full-grid maximum.
    """
    m = np.asarray(matrix, dtype=np.float64)
    t, n = m.shape
    assert n == 2, "grid oracle is two-agent"
    b1, b2 = float(weights[0]), float(weights[1])

    def objective(u1, u2):
        with np.errstate(divide="ignore"):
            return b1 * np.log(u1) + b2 * np.log(u2)

    if t <= 2:
        a = np.arange(grid + 1) / grid
        if t == 1:
            u1 = a * m[0, 0]
            u2 = (1 - a) * m[0, 1]
            vals = objective(u1, u2)
            k = int(np.nanargmax(vals))
            return np.array([u1[k], u2[k]])
        a1 = a[:, None]
        a2 = a[None, :]
        u1 = a1 * m[0, 0] + a2 * m[1, 0]
        u2 = (1 - a1) * m[0, 1] + (1 - a2) * m[1, 1]
        vals = objective(u1, u2)
        k = int(np.nanargmax(vals))
        i, j = divmod(k, grid + 1)
        return np.array([u1[i, j], u2[i, j]])

    # t == 3: integer-lattice dynamic program
    quantum = None
    for q in (1.0, 0.5, 0.25, 0.125, 0.1, 0.05, 0.01):
        scaled = m / q
        if np.allclose(scaled, np.round(scaled), atol=1e-12):
            quantum = q
            break
    assert quantum is not None, "values are not on a supported lattice"
    V = np.round(m / quantum).astype(np.int64)  # (t, 2) integer units
    max_u1 = int(grid * V[:, 0].sum())
    NEG = -1
    u2max = np.full(max_u1 + 1, NEG, dtype=np.int64)
    u2max[0] = 0
    for tau in range(t):
        v1, v2 = int(V[tau, 0]), int(V[tau, 1])
        new = np.full_like(u2max, NEG)
        reachable = np.nonzero(u2max >= 0)[0]
        base_u2 = u2max[reachable]
        for a in range(grid + 1):
            g1 = a * v1
            g2 = (grid - a) * v2
            idx = reachable + g1
            cur = new[idx]
            upd = base_u2 + g2
            new[idx] = np.where(upd > cur, upd, cur)
        u2max = new
    unit = quantum / grid
    reachable = np.nonzero(u2max >= 0)[0]
    u1 = reachable * unit
    u2 = u2max[reachable] * unit
    vals = objective(u1, u2)
    k = int(np.nanargmax(vals))
    return np.array([u1[k], u2[k]])


def eg_split_oracle(matrix: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Exact two-agent welfare maximum by ownership-pattern enumeration.

    For two agents an optimal allocation exists with at most one
    fractionally split item: enumerate every assignment of items to the
    agents and every choice of split item, solving the one-dimensional
    split fraction in closed form.
    """
    m = np.asarray(matrix, dtype=np.float64)
    t, n = m.shape
    assert n == 2
    b1, b2 = float(weights[0]), float(weights[1])
    best = (-math.inf, None)
    for owner in itertools.product((0, 1), repeat=t):
        c1 = sum(m[i, 0] for i in range(t) if owner[i] == 0)
        c2 = sum(m[i, 1] for i in range(t) if owner[i] == 1)
        for split in (None, *range(t)):
            if split is None:
                u1, u2 = c1, c2
            else:
                v1, v2 = m[split, 0], m[split, 1]
                base1 = c1 - (v1 if owner[split] == 0 else 0.0)
                base2 = c2 - (v2 if owner[split] == 1 else 0.0)
                # maximize b1 log(base1 + f v1) + b2 log(base2 + (1-f) v2)
                cands = [0.0, 1.0]
                if v1 > 0 and v2 > 0:
                    f = (b1 * (base2 + v2) * v1 - b2 * base1 * v2) / ((b1 + b2) * v1 * v2)
                    if 0.0 < f < 1.0:
                        cands.append(f)
                u1 = u2 = None
                sub_best = -math.inf
                for f in cands:
                    x1 = base1 + f * v1
                    x2 = base2 + (1 - f) * v2
                    val = (
                        (b1 * math.log(x1) if x1 > 0 else -math.inf)
                        + (b2 * math.log(x2) if x2 > 0 else -math.inf)
                    )
                    if u1 is None or val > sub_best:
                        sub_best, u1, u2 = val, x1, x2
            val = (
                (b1 * math.log(u1) if u1 > 0 else -math.inf)
                + (b2 * math.log(u2) if u2 > 0 else -math.inf)
            )
            if val > best[0]:
                best = (val, (u1, u2))
    return np.array(best[1])


def utility_ratio_enum(matrix: np.ndarray, utilities: np.ndarray, weights: np.ndarray) -> float:
    """Best weighted utility-ratio sum over every integral allocation."""
    m = np.asarray(matrix, dtype=np.float64)
    t, n = m.shape
    b = np.asarray(weights, dtype=np.float64)
    total = b.sum()
    best = -math.inf
    for assign in itertools.product(range(n), repeat=t):
        alt = np.zeros(n)
        for tau, i in enumerate(assign):
            alt[i] += m[tau, i]
        best = max(best, float((b / total * alt / utilities).sum()))
    return best


def greedy_reference_winners(matrix: np.ndarray, weights: np.ndarray) -> List[int]:
    """Winner sequence of the exact one-step log-welfare greedy rule.

    Computed from the objective increment directly (no first-order
    shortcut): the winner maximizes ``B_i * [log(U_i + v_i) - log U_i]``,
    with an infinite increment when ``U_i = 0 < v_i`` and zero when
    ``v_i = 0``; ties go to the smallest index.
    """
    m = np.asarray(matrix, dtype=np.float64)
    t, n = m.shape
    b = np.asarray(weights, dtype=np.float64)
    u = np.zeros(n)
    winners = []
    for tau in range(t):
        best_i, best_val = 0, -math.inf
        for i in range(n):
            v = m[tau, i]
            if v <= 0:
                inc = 0.0
            elif u[i] == 0:
                inc = math.inf
            else:
                inc = b[i] * (math.log(u[i] + v) - math.log(u[i]))
            if inc > best_val:
                best_val, best_i = inc, i
        winners.append(best_i)
        u[best_i] += m[tau, best_i]
    return winners


def pace_reference_trace(matrix: np.ndarray, weights: np.ndarray) -> Tuple[List[int], np.ndarray]:
    """Plain transcription of the unconstrained pacing dynamic.

    Kept separate from the package implementation: winners maximize
    multiplier times value with smallest-index ties, the multiplier is
    weight over time-averaged utility with an explicit infinite state
    for zero averages, and every agent starts in the infinite (unserved)
    state — which is what makes the instance-restriction recursion exact.
    """
    m = np.asarray(matrix, dtype=np.float64)
    t, n = m.shape
    b = np.asarray(weights, dtype=np.float64)
    u = np.zeros(n)
    beta = np.full(n, math.inf)
    winners: List[int] = []
    for tau in range(1, t + 1):
        bids = []
        for i in range(n):
            v = m[tau - 1, i]
            if math.isinf(beta[i]):
                bids.append(math.inf if v > 0 else 0.0)
            else:
                bids.append(beta[i] * v)
        w = 0
        for i in range(1, n):
            if bids[i] > bids[w]:
                w = i
        winners.append(w)
        u[w] += m[tau - 1, w]
        for i in range(n):
            avg = u[i] / tau
            beta[i] = b[i] / avg if avg > 0 else math.inf
    return winners, u
