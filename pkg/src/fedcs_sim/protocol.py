"""Round-loop engines for the three protocols.

fedcs:   resource request -> greedy client selection -> multicast
         distribution -> scheduled sequential update/upload -> aggregation,
         all planned to fit the round deadline.
fedlim:  deadline-limited baseline: a random cohort downloads the model,
         updates in parallel, and uploads sequentially; whatever misses the
         deadline is discarded.  The wall clock advances by exactly one
         deadline per round.
vanilla: the same random cohort with no deadline; the round lasts as long as
         the slowest path takes.

Every engine advances a simulated wall clock and emits one RoundRecord per
round; run_experiment iterates rounds until the final deadline or a target
accuracy is reached.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ClientId, ParameterError, RngStream, Seconds
from .learning import GlobalModel, Trainer, aggregate
from .resources import (
    ClientProfile,
    FluctuationConfig,
    TimeBudget,
    estimated_update_time,
    estimated_upload_time,
    realized_times,
)
from .selection import Candidate, CandidateSet, extend_theta, greedy_select

__all__ = [
    "MODES",
    "LATE_POLICIES",
    "FEDLIM_DISTRIBUTIONS",
    "FEDLIM_UPLOAD_ORDERS",
    "FedLimOptions",
    "ProtocolConfig",
    "StopCondition",
    "RoundRecord",
    "ExperimentState",
    "run_round_fedcs",
    "run_round_fedlim",
    "run_round_vanilla",
    "run_experiment",
]

MODES = ("fedcs", "fedlim", "vanilla")
LATE_POLICIES = ("extend", "discard")
FEDLIM_DISTRIBUTIONS = ("unicast", "multicast", "none")
FEDLIM_UPLOAD_ORDERS = ("channel", "ready", "random")


@dataclass(frozen=True)
class FedLimOptions:
    """How the deadline-limited baseline accounts for distribution and orders uploads.

    distribution:
      unicast   - each client's own download time delays its update start
                  (default; a multicast pinned to the worst of ~100 random
                  links would exceed any practical deadline every round).
      multicast - one shared distribution phase at the slowest selected link,
                  charged against the deadline.
      none      - the deadline window covers updating and uploading only.
    upload_order:
      channel - shortest upload first (the operator knows link rates).
      ready   - first finished updating, first served.
      random  - uniformly random fixed order.
    """

    distribution: str = "unicast"
    upload_order: str = "channel"

    def __post_init__(self) -> None:
        if self.distribution not in FEDLIM_DISTRIBUTIONS:
            raise ParameterError(f"fedlim.distribution must be one of {FEDLIM_DISTRIBUTIONS}")
        if self.upload_order not in FEDLIM_UPLOAD_ORDERS:
            raise ParameterError(f"fedlim.upload_order must be one of {FEDLIM_UPLOAD_ORDERS}")


@dataclass(frozen=True)
class ProtocolConfig:
    mode: str = "fedcs"
    k_total: int = 1000
    fraction: float = 0.1
    budget: TimeBudget = TimeBudget()
    fluct: FluctuationConfig = FluctuationConfig()
    late_policy: str = "extend"
    fedlim: FedLimOptions = FedLimOptions()
    aggregate_weighted: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.fraction <= 1:
            raise ParameterError(f"fraction must be in (0, 1], got {self.fraction!r}")
        if self.k_total < 1:
            raise ParameterError("k_total must be >= 1")
        if self.late_policy not in LATE_POLICIES:
            raise ParameterError(f"late_policy must be one of {LATE_POLICIES}")

    @property
    def cohort_size(self) -> int:
        return math.ceil(self.k_total * self.fraction)


@dataclass(frozen=True)
class StopCondition:
    """Run until the clock reaches t_final or accuracy reaches the target."""

    t_final: Seconds
    target_accuracy: float | None = None

    def __post_init__(self) -> None:
        if self.target_accuracy is not None and not 0 < self.target_accuracy <= 1:
            raise ParameterError("target_accuracy must be in (0, 1]")


@dataclass(frozen=True)
class RoundRecord:
    """Realized outcome of one round.

    realized_round_duration is the wall-clock advance of the round;
    busy_time is the realized span of the round's work, which can be shorter
    (a schedule finishing early) or longer (an overrun under the extend
    policy is still cut to the advance only for the clock, not for the work).
    """

    round: int
    requested: tuple[int, ...]
    selected_or_completed: tuple[int, ...]
    realized_round_duration: Seconds
    busy_time: Seconds
    clock_after: Seconds
    accuracy_after: float
    aggregated_count: int

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "requested": list(self.requested),
            "selected_or_completed": list(self.selected_or_completed),
            "realized_round_duration": float(self.realized_round_duration),
            "busy_time": float(self.busy_time),
            "clock_after": float(self.clock_after),
            "accuracy_after": self.accuracy_after,
            "aggregated_count": self.aggregated_count,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.as_dict())

    @classmethod
    def from_json_line(cls, line: str) -> "RoundRecord":
        return cls.from_dict(json.loads(line))

    @classmethod
    def from_dict(cls, raw: dict) -> "RoundRecord":
        return cls(
            round=raw["round"],
            requested=tuple(raw["requested"]),
            selected_or_completed=tuple(raw["selected_or_completed"]),
            realized_round_duration=Seconds(raw["realized_round_duration"]),
            busy_time=Seconds(raw["busy_time"]),
            clock_after=Seconds(raw["clock_after"]),
            accuracy_after=raw["accuracy_after"],
            aggregated_count=raw["aggregated_count"],
        )


@dataclass
class ExperimentState:
    """Mutable per-experiment state threaded through the round engines."""

    clock: float
    model: GlobalModel
    accuracy: float
    rng_selection: np.random.Generator
    rng_fluctuation: np.random.Generator
    rng_training: np.random.Generator

    @classmethod
    def fresh(cls, trainer: Trainer, rng: RngStream) -> "ExperimentState":
        model = trainer.init_model()
        return cls(
            clock=0.0,
            model=model,
            accuracy=trainer.evaluate(model),
            rng_selection=rng.child("selection").generator(),
            rng_fluctuation=rng.child("fluctuation").generator(),
            rng_training=rng.child("training").generator(),
        )


def _request_cohort(
    state: ExperimentState, profiles: list[ClientProfile], config: ProtocolConfig
) -> list[ClientProfile]:
    """Resource request: a uniform without-replacement draw, returned by id."""
    size = config.cohort_size
    if size > len(profiles):
        raise ParameterError("cohort size exceeds the client population")
    picks = state.rng_selection.choice(len(profiles), size=size, replace=False)
    return [profiles[i] for i in sorted(picks)]


def _aggregate_and_evaluate(
    state: ExperimentState,
    profiles_by_id: dict[int, ClientProfile],
    aggregated_ids: list[ClientId],
    config: ProtocolConfig,
    trainer: Trainer,
    round_index: int,
) -> None:
    if not aggregated_ids:
        return
    updates = []
    for cid in aggregated_ids:
        updated = trainer.client_update(state.model, cid, state.rng_training)
        updates.append((updated, int(profiles_by_id[int(cid)].data_count)))
    state.model = aggregate(updates, weighted=config.aggregate_weighted)
    trainer.notify_aggregated(tuple(aggregated_ids), round_index)
    state.accuracy = trainer.evaluate(state.model)


def run_round_fedcs(
    state: ExperimentState,
    profiles: list[ClientProfile],
    config: ProtocolConfig,
    trainer: Trainer,
    round_index: int,
) -> RoundRecord:
    """One fedcs round: request, greedy selection, realization, aggregation.

    Realized times are sampled per selected client in schedule order.  The
    realized distribution phase runs at the slowest sampled link, which makes
    it equal to the largest sampled upload time.  Under the `extend` policy
    every selected client aggregates and the clock advances by
    max(t_round, realized total); under `discard` only clients finishing
    within the deadline aggregate and the clock advances by exactly t_round.
    """
    budget = config.budget
    cohort = _request_cohort(state, profiles, config)
    by_id = {int(p.id): p for p in cohort}
    candidates = CandidateSet(
        tuple(
            Candidate(
                id=p.id,
                t_update=estimated_update_time(p, budget),
                t_upload=estimated_upload_time(p, budget),
                throughput=p.mean_throughput,
            )
            for p in cohort
        )
    )
    schedule = greedy_select(candidates, budget)

    base = float(budget.t_cs) + float(budget.t_agg)
    if schedule.order:
        realized = [
            realized_times(by_id[int(cid)], budget, config.fluct, state.rng_fluctuation)
            for cid in schedule.order
        ]
        realized_dist = max(float(upload) for _, upload in realized)
        theta = 0.0
        finishes = []
        for update, upload in realized:
            theta = extend_theta(theta, float(update), float(upload))
            finishes.append(theta)
        busy = base + realized_dist + theta
        if config.late_policy == "extend":
            aggregated = list(schedule.order)
            advance = max(float(budget.t_round), busy)
        else:
            cutoff = float(budget.t_round) - float(budget.t_agg)
            aggregated = [
                cid
                for cid, finish in zip(schedule.order, finishes)
                if float(budget.t_cs) + realized_dist + finish <= cutoff
            ]
            advance = float(budget.t_round)
    else:
        aggregated = []
        busy = base
        advance = float(budget.t_round)

    _aggregate_and_evaluate(state, by_id, aggregated, config, trainer, round_index)
    state.clock += advance
    return RoundRecord(
        round=round_index,
        requested=tuple(int(p.id) for p in cohort),
        selected_or_completed=tuple(int(cid) for cid in schedule.order),
        realized_round_duration=Seconds(advance),
        busy_time=Seconds(busy),
        clock_after=Seconds(state.clock),
        accuracy_after=state.accuracy,
        aggregated_count=len(aggregated),
    )


def _fedlim_release_times(
    times: list[tuple[float, float]], options: FedLimOptions, t_cs: float
) -> list[float]:
    """When each client becomes ready to upload, per the distribution model."""
    if options.distribution == "unicast":
        # Download runs at the same sampled link rate as the upload.
        return [t_cs + upload + update for update, upload in times]
    if options.distribution == "multicast":
        shared = max(upload for _, upload in times)
        return [t_cs + shared + update for update, _ in times]
    return [t_cs + update for update, _ in times]


def run_round_fedlim(
    state: ExperimentState,
    profiles: list[ClientProfile],
    config: ProtocolConfig,
    trainer: Trainer,
    round_index: int,
) -> RoundRecord:
    """One deadline-limited baseline round.

    The whole cohort participates: clients receive the model, update in
    parallel, then upload one at a time in the configured order.  A client
    counts as completed only if its upload finishes within the deadline,
    measured from the round start; later uploads are discarded.  The clock
    always advances by exactly t_round.
    """
    budget = config.budget
    cohort = _request_cohort(state, profiles, config)
    by_id = {int(p.id): p for p in cohort}
    times = [
        tuple(map(float, realized_times(p, budget, config.fluct, state.rng_fluctuation)))
        for p in cohort
    ]
    releases = _fedlim_release_times(times, config.fedlim, float(budget.t_cs))

    order = config.fedlim.upload_order
    if order == "random":
        sequence = list(state.rng_selection.permutation(len(cohort)))
    elif order == "ready":
        sequence = sorted(range(len(cohort)), key=lambda i: (releases[i], int(cohort[i].id)))
    else:  # channel: shortest upload first
        sequence = sorted(range(len(cohort)), key=lambda i: (times[i][1], int(cohort[i].id)))

    deadline = float(budget.t_round) - float(budget.t_agg)
    clock = 0.0
    completed: list[ClientId] = []
    for i in sequence:
        clock = extend_theta(clock, releases[i], times[i][1])
        if clock <= deadline:
            completed.append(cohort[i].id)
        else:
            break

    _aggregate_and_evaluate(state, by_id, completed, config, trainer, round_index)
    advance = float(budget.t_round)
    state.clock += advance
    return RoundRecord(
        round=round_index,
        requested=tuple(int(p.id) for p in cohort),
        selected_or_completed=tuple(int(cid) for cid in completed),
        realized_round_duration=Seconds(advance),
        busy_time=Seconds(min(clock, advance)),
        clock_after=Seconds(state.clock),
        accuracy_after=state.accuracy,
        aggregated_count=len(completed),
    )


def run_round_vanilla(
    state: ExperimentState,
    profiles: list[ClientProfile],
    config: ProtocolConfig,
    trainer: Trainer,
    round_index: int,
) -> RoundRecord:
    """One deadline-free round: everyone in the cohort completes.

    The model is multicast at the slowest sampled link, updates overlap
    earlier uploads, and uploads run sequentially in a random order; the
    clock advances by however long that realized total takes.
    """
    budget = config.budget
    cohort = _request_cohort(state, profiles, config)
    by_id = {int(p.id): p for p in cohort}
    times = [
        tuple(map(float, realized_times(p, budget, config.fluct, state.rng_fluctuation)))
        for p in cohort
    ]
    dist = max(upload for _, upload in times)
    sequence = list(state.rng_selection.permutation(len(cohort)))
    theta = 0.0
    for i in sequence:
        theta = extend_theta(theta, times[i][0], times[i][1])
    total = float(budget.t_cs) + dist + theta + float(budget.t_agg)

    ordered_ids = [cohort[i].id for i in sequence]
    _aggregate_and_evaluate(state, by_id, ordered_ids, config, trainer, round_index)
    state.clock += total
    return RoundRecord(
        round=round_index,
        requested=tuple(int(p.id) for p in cohort),
        selected_or_completed=tuple(int(cid) for cid in ordered_ids),
        realized_round_duration=Seconds(total),
        busy_time=Seconds(total),
        clock_after=Seconds(state.clock),
        accuracy_after=state.accuracy,
        aggregated_count=len(ordered_ids),
    )


_ROUND_ENGINES = {
    "fedcs": run_round_fedcs,
    "fedlim": run_round_fedlim,
    "vanilla": run_round_vanilla,
}


def run_experiment(
    config: ProtocolConfig,
    stop: StopCondition,
    trainer: Trainer,
    profiles: list[ClientProfile],
    rng: RngStream,
) -> list[RoundRecord]:
    """Iterate rounds until the final deadline or the target accuracy.

    A round starts only while the clock is strictly below t_final, so the
    clock never exceeds t_final by more than one round's advance.  The
    returned records carry strictly increasing clocks.
    """
    if config.k_total != len(profiles):
        raise ParameterError(
            f"config.k_total={config.k_total} but {len(profiles)} profiles were supplied"
        )
    engine = _ROUND_ENGINES[config.mode]
    state = ExperimentState.fresh(trainer, rng)
    records: list[RoundRecord] = []
    round_index = 0
    while state.clock < float(stop.t_final):
        record = engine(state, profiles, config, trainer, round_index)
        records.append(record)
        if stop.target_accuracy is not None and record.accuracy_after >= stop.target_accuracy:
            break
        round_index += 1
    return records
