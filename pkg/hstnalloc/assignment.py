"""
hstnalloc.assignment
====================

Assignment of terrestrial MTs to channels.

Given the table of achievable rates of every user on every channel, the
sum-rate maximizing assignment is a maximum-weight perfect matching of a
complete bipartite graph. It is solved with the Kuhn-Munkres (Hungarian)
algorithm in O(K^3). Exhaustive enumeration of all permutations and random
assignments serve as references.
"""
from dataclasses import dataclass
from itertools import permutations
import math
from typing import List, Optional

import numpy as np

#: Largest problem size accepted by the exhaustive search.
EXHAUSTIVE_MAX_SIZE = 8


@dataclass(frozen=True, eq=False)
class RateTable:
    """
    Rates of all (user, channel) pairs.

    Attributes:
        r: Array of shape (K, K) with the rate of user i on channel j at
            index [i, j] in bit/s/Hz.
        solutions: Optional K x K nested list of the PairSolutions the
            rates were obtained from.
    """

    r: np.ndarray
    solutions: Optional[List[list]] = None

    def __post_init__(self):
        r = np.array(self.r, dtype=np.float64)
        if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] < 1:
            raise ValueError("Rate table must be a non-empty square matrix.")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("Rates must be non-negative and finite.")
        if self.solutions is not None:
            k = r.shape[0]
            if len(self.solutions) != k or any(len(row) != k for row in self.solutions):
                raise ValueError("'solutions' must be a K x K nested list.")
            for i in range(k):
                for j in range(k):
                    if self.solutions[i][j].rate != r[i, j]:
                        raise ValueError(
                            f"Rate of pair ({i}, {j}) does not match its solution."
                        )
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def size(self):
        return self.r.shape[0]

    @classmethod
    def from_solutions(cls, solutions):
        """Build a rate table from a K x K nested list of PairSolutions."""
        r = [[sol.rate for sol in row] for row in solutions]
        return cls(r=r, solutions=solutions)


@dataclass(frozen=True, eq=False)
class Assignment:
    """
    Assignment of users to channels.

    Attributes:
        perm: Length-K integer array holding the channel of each user.
    """

    perm: np.ndarray

    def __post_init__(self):
        perm = np.array(self.perm, dtype=np.int64).ravel()
        if perm.size < 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError(f"{perm.tolist()} is not a permutation.")
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)

    def __eq__(self, other):
        if isinstance(other, Assignment):
            return np.array_equal(self.perm, other.perm)
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self.perm))

    @property
    def size(self):
        return self.perm.size


def _weights(table):
    if isinstance(table, RateTable):
        return table.r
    weights = np.asarray(table, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1] or weights.size == 0:
        raise ValueError("Weights must be a non-empty square matrix.")
    if not np.all(np.isfinite(weights)):
        raise ValueError("Weights must be finite.")
    return weights


def assignment_matrix(assignment):
    """
    The 0/1 indicator matrix z of an assignment with ``z[i, j] = 1`` if
    user i is served on channel j.
    """
    k = assignment.size
    z = np.zeros((k, k), dtype=np.int64)
    z[np.arange(k), assignment.perm] = 1
    return z


def assignment_total(table, assignment):
    """
    Total weight of an assignment.

    The weights are summed with ``math.fsum`` so that the result does not
    depend on the summation order.
    """
    weights = _weights(table)
    return math.fsum(weights[np.arange(assignment.size), assignment.perm])


def kuhn_munkres(table):
    """
    Maximum-weight perfect matching with the Kuhn-Munkres algorithm.

    Implements the O(K^3) shortest-augmenting-path variant with vertex
    potentials. Rows are added one at a time; each addition grows an
    alternating tree using the slacks of the unvisited columns until a free
    column is reached.

    Args:
        table: A RateTable or square array of real weights.

    Return:
        A tuple ``(assignment, total)`` of the optimal Assignment and its
        total weight.
    """
    weights = _weights(table)
    k = weights.shape[0]
    # Minimize the negated weights. Index 0 is a virtual row/column.
    cost = np.zeros((k + 1, k + 1))
    cost[1:, 1:] = -weights

    row_pot = np.zeros(k + 1)
    col_pot = np.zeros(k + 1)
    match = np.zeros(k + 1, dtype=np.int64)
    previous = np.zeros(k + 1, dtype=np.int64)

    for row in range(1, k + 1):
        match[0] = row
        col = 0
        slack = np.full(k + 1, np.inf)
        used = np.zeros(k + 1, dtype=bool)
        while True:
            used[col] = True
            current = match[col]
            reduced = cost[current, 1:] - row_pot[current] - col_pot[1:]
            free = ~used[1:]
            improve = free & (reduced < slack[1:])
            slack[1:][improve] = reduced[improve]
            previous[1:][improve] = col

            candidates = np.where(free, slack[1:], np.inf)
            next_col = int(np.argmin(candidates)) + 1
            delta = candidates[next_col - 1]

            row_pot[match[used]] += delta
            col_pot[used] -= delta
            slack[~used] -= delta

            col = next_col
            if match[col] == 0:
                break

        # Augment along the alternating path.
        while col:
            prev_col = previous[col]
            match[col] = match[prev_col]
            col = prev_col

    perm = np.zeros(k, dtype=np.int64)
    for col in range(1, k + 1):
        perm[match[col] - 1] = col - 1
    assignment = Assignment(perm)
    return assignment, assignment_total(weights, assignment)


def exhaustive_oracle(table):
    """
    Optimal assignment by enumeration of all K! permutations.

    Ties are resolved in favor of the lexicographically smallest
    permutation.

    Args:
        table: A RateTable or square array of real weights.

    Return:
        A tuple ``(assignment, total)``.

    Raises:
        ValueError if K exceeds ``EXHAUSTIVE_MAX_SIZE``.
    """
    weights = _weights(table)
    k = weights.shape[0]
    if k > EXHAUSTIVE_MAX_SIZE:
        raise ValueError(
            f"Exhaustive search is limited to K <= {EXHAUSTIVE_MAX_SIZE}, "
            f"got K = {k}."
        )
    rows = range(k)
    best_perm, best_total = None, -np.inf
    for perm in permutations(rows):
        total = math.fsum(weights[row, col] for row, col in zip(rows, perm))
        if total > best_total:
            best_perm, best_total = perm, total
    return Assignment(best_perm), best_total


def random_assignment(k, rng):
    """
    Uniformly random assignment.

    Args:
        k: The number of users and channels.
        rng: A numpy Generator.

    Return:
        An Assignment.
    """
    if k < 1:
        raise ValueError("'k' must be at least 1.")
    return Assignment(rng.permutation(k))
