"""Deadline-constrained client scheduling: elapsed-time recursion, greedy, oracle.

Selected clients upload sequentially while later clients may perform their
local updates during earlier clients' upload slots.  The elapsed time after
the i-th client is therefore

    theta_i = max(theta_{i-1}, t_update_i) + t_upload_i,    theta_0 = 0,

equivalently the sum of all upload times plus every update overhang
max(0, t_update_j - theta_{j-1}).  A schedule is feasible when

    t_cs + dist_time(S) + theta_|S| + t_agg <= t_round,

with dist_time(S) the multicast distribution time, model_size / min
throughput over the selected set.  The greedy scheduler maximizes the number
of selected clients against that budget; the brute-force oracle verifies it
on small instances.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import ClientId, Megabits, MegabitsPerSecond, ParameterError, Seconds
from .resources import TimeBudget

__all__ = [
    "Candidate",
    "CandidateSet",
    "Schedule",
    "extend_theta",
    "elapsed_theta",
    "dist_time",
    "feasible",
    "greedy_select",
    "oracle_select",
    "ORACLE_MAX_CANDIDATES",
    "ORACLE_EXHAUSTIVE_LIMIT",
]


@dataclass(frozen=True)
class Candidate:
    """Resource information one client reports for scheduling."""

    id: ClientId
    t_update: Seconds
    t_upload: Seconds
    throughput: MegabitsPerSecond

    def __post_init__(self) -> None:
        if self.throughput <= 0:
            raise ParameterError(f"candidate {int(self.id)} must have positive throughput")


@dataclass(frozen=True)
class CandidateSet:
    """The cohort that answered a resource request; ids must be unique."""

    clients: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        ids = [c.id for c in self.clients]
        if len(set(ids)) != len(ids):
            raise ParameterError("candidate ids must be unique")

    def __len__(self) -> int:
        return len(self.clients)

    def __iter__(self):
        return iter(self.clients)


@dataclass(frozen=True)
class Schedule:
    """Ordered selection with its elapsed-time trajectory and totals.

    theta[0] is always 0 and theta[i] is the elapsed time after the i-th
    selected client; total_time = t_cs + dist_time + theta[-1] + t_agg.
    """

    order: tuple[ClientId, ...]
    theta: tuple[float, ...]
    dist_time: Seconds
    total_time: Seconds

    def __post_init__(self) -> None:
        if len(self.theta) != len(self.order) + 1:
            raise ParameterError("theta must have one entry per selected client plus theta_0")
        if self.theta[0] != 0.0:
            raise ParameterError("theta_0 must be 0")
        if any(b < a for a, b in zip(self.theta, self.theta[1:])):
            raise ParameterError("theta must be non-decreasing")
        if len(set(self.order)) != len(self.order):
            raise ParameterError("schedule order must not repeat clients")

    def __len__(self) -> int:
        return len(self.order)

    def as_dict(self) -> dict:
        return {
            "order": [int(k) for k in self.order],
            "theta": [float(t) for t in self.theta],
            "dist_time": float(self.dist_time),
            "total_time": float(self.total_time),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict())

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        raw = json.loads(text)
        return cls(
            order=tuple(ClientId(k) for k in raw["order"]),
            theta=tuple(float(t) for t in raw["theta"]),
            dist_time=Seconds(raw["dist_time"]),
            total_time=Seconds(raw["total_time"]),
        )


def extend_theta(theta: float, t_update: float, t_upload: float) -> float:
    """Elapsed time after appending one client: uploads accumulate, updates
    only cost their overhang past the current elapsed time."""
    return theta + t_upload + max(0.0, t_update - theta)


def elapsed_theta(order: Sequence[Candidate]) -> list[Seconds]:
    """Full elapsed-time trajectory theta_0..theta_n for an upload order."""
    ids = [c.id for c in order]
    if len(set(ids)) != len(ids):
        raise ParameterError("order must not repeat clients")
    trajectory = [Seconds(0.0)]
    theta = 0.0
    for c in order:
        theta = extend_theta(theta, c.t_update, c.t_upload)
        trajectory.append(Seconds(theta))
    return trajectory


def dist_time(selected: Iterable[Candidate], model_size: Megabits) -> Seconds:
    """Multicast distribution time: model_size over the slowest selected link.

    The empty selection costs nothing.
    """
    slowest = min((c.throughput for c in selected), default=None)
    if slowest is None:
        return Seconds(0.0)
    return Seconds(model_size / slowest)


def feasible(schedule_total: Seconds, budget: TimeBudget) -> bool:
    """Whether a round total fits the deadline (boundary included)."""
    return schedule_total <= budget.t_round


def greedy_select(candidates: CandidateSet, budget: TimeBudget) -> Schedule:
    """Greedy knapsack-style selection maximizing the number of clients.

    Repeatedly picks the candidate with the smallest marginal cost

        (dist_time(S + k) - dist_time(S)) + t_upload_k
            + max(0, t_update_k - theta)

    (ties broken by lower client id), removes it from the pool, and accepts
    it only if the tentative total stays strictly below the deadline.  A
    rejected candidate is never reconsidered.  Cost per pick is linear in
    the pool size, so the whole run is O(|pool|^2).
    """
    model_size = float(budget.model_size)
    base = float(budget.t_cs) + float(budget.t_agg)
    deadline = float(budget.t_round)

    remaining = list(candidates.clients)
    order: list[ClientId] = []
    trajectory = [0.0]
    theta = 0.0
    dist = 0.0
    min_thr = float("inf")

    while remaining:
        best_idx = 0
        best_key: tuple[float, int] | None = None
        for i, c in enumerate(remaining):
            new_dist = model_size / min(min_thr, c.throughput)
            cost = (new_dist - dist) + float(c.t_upload) + max(0.0, float(c.t_update) - theta)
            key = (cost, int(c.id))
            if best_key is None or key < best_key:
                best_key = key
                best_idx = i
        chosen = remaining.pop(best_idx)

        theta_new = extend_theta(theta, float(chosen.t_update), float(chosen.t_upload))
        dist_new = model_size / min(min_thr, chosen.throughput)
        tentative = base + dist_new + theta_new
        if tentative < deadline:
            theta = theta_new
            dist = dist_new
            min_thr = min(min_thr, chosen.throughput)
            order.append(chosen.id)
            trajectory.append(theta)

    total = base + dist + theta
    return Schedule(
        order=tuple(order),
        theta=tuple(trajectory),
        dist_time=Seconds(dist),
        total_time=Seconds(total),
    )


ORACLE_MAX_CANDIDATES = 10
ORACLE_EXHAUSTIVE_LIMIT = 8
_ORACLE_RANDOM_ORDERS = 128


def _lex_smallest_feasible_order(
    subset: Sequence[Candidate], slack: float
) -> tuple[int, ...] | None:
    """Lexicographically smallest order of `subset` whose final elapsed time
    fits within `slack`, or None.

    Depth-first search over positions in ascending-id order; a branch is cut
    when the current elapsed time plus all remaining upload times already
    exceeds the slack (elapsed time can only grow, so the bound is exact).
    The first complete leaf found is therefore the lexicographic minimum.
    """
    cands = sorted(subset, key=lambda c: int(c.id))
    n = len(cands)
    uploads = [float(c.t_upload) for c in cands]
    updates = [float(c.t_update) for c in cands]
    used = [False] * n
    prefix: list[int] = []

    def dfs(theta: float, remaining_upload: float) -> bool:
        if len(prefix) == n:
            return True
        for i in range(n):
            if used[i]:
                continue
            theta_next = extend_theta(theta, updates[i], uploads[i])
            if theta_next + (remaining_upload - uploads[i]) > slack:
                continue
            used[i] = True
            prefix.append(i)
            if dfs(theta_next, remaining_upload - uploads[i]):
                return True
            prefix.pop()
            used[i] = False
        return False

    if dfs(0.0, sum(uploads)):
        return tuple(int(cands[i].id) for i in prefix)
    return None


def _sampled_feasible_order(
    subset: Sequence[Candidate], slack: float
) -> tuple[int, ...] | None:
    """Order search for oversized subsets: shortest-update-first plus a fixed
    random sample.  Optimality is only guaranteed up to the exhaustive limit."""
    cands = sorted(subset, key=lambda c: (float(c.t_update), int(c.id)))
    trials: list[list[Candidate]] = [list(cands)]
    rng = np.random.default_rng(0xFEDC5)
    for _ in range(_ORACLE_RANDOM_ORDERS):
        perm = rng.permutation(len(cands))
        trials.append([cands[i] for i in perm])
    best: tuple[int, ...] | None = None
    for trial in trials:
        theta = 0.0
        for c in trial:
            theta = extend_theta(theta, float(c.t_update), float(c.t_upload))
        if theta <= slack:
            ids = tuple(int(c.id) for c in trial)
            if best is None or ids < best:
                best = ids
    return best


def oracle_select(candidates: CandidateSet, budget: TimeBudget) -> Schedule:
    """Maximum-cardinality feasible schedule by exhaustive subset search.

    Subsets are tried in decreasing size; for each, orderings are searched
    (all permutations up to ORACLE_EXHAUSTIVE_LIMIT elements, a heuristic
    sample above that).  Among maximum-cardinality feasible schedules the
    lexicographically smallest order is returned, making the result
    deterministic.  Guarded to ORACLE_MAX_CANDIDATES candidates because the
    search is combinatorial.
    """
    n = len(candidates)
    if n > ORACLE_MAX_CANDIDATES:
        raise ParameterError(
            f"oracle_select accepts at most {ORACLE_MAX_CANDIDATES} candidates, got {n}"
        )
    model_size = float(budget.model_size)
    base = float(budget.t_cs) + float(budget.t_agg)
    deadline = float(budget.t_round)
    by_id = {int(c.id): c for c in candidates}
    pool = sorted(candidates, key=lambda c: int(c.id))

    for size in range(n, 0, -1):
        best_order: tuple[int, ...] | None = None
        for subset in itertools.combinations(pool, size):
            dist = model_size / min(c.throughput for c in subset)
            slack = deadline - base - dist
            if slack < 0:
                continue
            # Final elapsed time is at least the sum of uploads, whatever the order.
            if sum(float(c.t_upload) for c in subset) > slack:
                continue
            if size <= ORACLE_EXHAUSTIVE_LIMIT:
                found = _lex_smallest_feasible_order(subset, slack)
            else:
                found = _sampled_feasible_order(subset, slack)
            if found is not None and (best_order is None or found < best_order):
                best_order = found
        if best_order is not None:
            chosen = [by_id[k] for k in best_order]
            trajectory = elapsed_theta(chosen)
            dist = dist_time(chosen, budget.model_size)
            total = base + float(dist) + float(trajectory[-1])
            return Schedule(
                order=tuple(ClientId(k) for k in best_order),
                theta=tuple(float(t) for t in trajectory),
                dist_time=dist,
                total_time=Seconds(total),
            )

    return Schedule(
        order=(),
        theta=(0.0,),
        dist_time=Seconds(0.0),
        total_time=Seconds(base),
    )
