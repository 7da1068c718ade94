"""Simulator and scheduling library for deadline-constrained federated learning.

A single cell hosts a large population of clients with heterogeneous data
sizes, compute capabilities, and wireless throughputs.  The library models
that environment, schedules clients against a per-round deadline with a
greedy maximizer (plus a brute-force oracle for verification), runs the
resource-aware protocol next to deadline-limited and deadline-free
baselines, and post-processes record streams into the usual metrics.
"""

from .channel import CellConfig, ClientPosition, mean_throughput, path_loss_db, place_clients
from .core import (
    ClientId,
    Megabits,
    MegabitsPerSecond,
    ModelError,
    ParameterError,
    RngStream,
    Samples,
    SamplesPerSecond,
    Seconds,
    SimulationError,
    UnitError,
    gaussian_truncated,
)
from .learning import (
    GlobalModel,
    LabeledDataset,
    MlpNet,
    NativeTrainer,
    Partition,
    SgdHyper,
    SurrogateTrainer,
    Trainer,
    aggregate,
    local_update,
    make_blob_dataset,
    partition_dataset,
    surrogate_accuracy,
)
from .metrics import ExperimentSummary, RunStats, summarize, time_of_arrival
from .protocol import (
    FedLimOptions,
    ProtocolConfig,
    RoundRecord,
    StopCondition,
    run_experiment,
    run_round_fedcs,
    run_round_fedlim,
    run_round_vanilla,
)
from .resources import (
    ClientProfile,
    FluctuationConfig,
    ResourceRanges,
    TimeBudget,
    estimated_update_time,
    estimated_upload_time,
    generate_profiles,
    realized_times,
)
from .selection import (
    Candidate,
    CandidateSet,
    Schedule,
    dist_time,
    elapsed_theta,
    feasible,
    greedy_select,
    oracle_select,
)

__version__ = "0.1.0"
