"""Data partitioning, local SGD training, aggregation, and trainer plug-ins.

Two trainers implement the same protocol-facing interface: a native one that
runs minibatch SGD on a small feed-forward softmax classifier over a bundled
synthetic dataset (or any dataset loaded from disk), and a surrogate that
skips training entirely and tracks accuracy with a deterministic saturating
curve, so scheduler-level experiments run in seconds.
"""

from __future__ import annotations

import abc
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ClientId, ModelError, ParameterError

__all__ = [
    "GlobalModel",
    "Partition",
    "SgdHyper",
    "MlpNet",
    "LabeledDataset",
    "make_blob_dataset",
    "save_dataset",
    "load_dataset",
    "partition_dataset",
    "local_update",
    "aggregate",
    "surrogate_accuracy",
    "Trainer",
    "SurrogateTrainer",
    "NativeTrainer",
]

PARTITION_MODES = ("iid", "non_iid")


@dataclass(frozen=True)
class GlobalModel:
    """Immutable snapshot of the shared parameter vector."""

    params: np.ndarray
    round: int = 0

    def __post_init__(self) -> None:
        arr = np.array(self.params, dtype=np.float64, copy=True)
        if arr.ndim != 1:
            raise ModelError("params must be a flat vector")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ModelError("params must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "params", arr)
        if self.round < 0:
            raise ParameterError("round must be >= 0")

    @property
    def param_count(self) -> int:
        return int(self.params.size)


@dataclass(frozen=True)
class Partition:
    """Sample-index assignment per client."""

    assignment: dict[ClientId, np.ndarray]
    mode: str
    classes_per_client: int = 2

    def __post_init__(self) -> None:
        if self.mode not in PARTITION_MODES:
            raise ParameterError(f"partition mode must be one of {PARTITION_MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class SgdHyper:
    """Minibatch SGD hyperparameters for local updates."""

    batch_size: int = 50
    epochs: int = 5
    lr0: float = 0.25
    lr_decay: float = 0.99

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch_size and epochs must be >= 1")
        if self.lr0 < 0 or not 0 < self.lr_decay <= 1:
            raise ParameterError("lr0 must be >= 0 and lr_decay in (0, 1]")


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    n_classes: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ParameterError("features must be (n, d) and labels (n,)")
        if len(self.features) != len(self.labels):
            raise ParameterError("features and labels must have equal length")
        if self.n_classes < 2:
            raise ParameterError("n_classes must be >= 2")
        if len(self.labels) and not (0 <= self.labels.min() and self.labels.max() < self.n_classes):
            raise ParameterError("labels must lie in [0, n_classes)")

    def __len__(self) -> int:
        return len(self.labels)


def make_blob_dataset(
    n_samples: int,
    n_features: int,
    n_classes: int,
    rng: np.random.Generator,
    spread: float = 1.0,
) -> LabeledDataset:
    """Synthetic classification set: one unit-sphere Gaussian blob per class."""
    if n_samples < n_classes:
        raise ParameterError("need at least one sample per class")
    centers = rng.normal(0.0, 1.0, size=(n_classes, n_features))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= 3.0
    labels = rng.integers(0, n_classes, size=n_samples)
    features = centers[labels] + spread * rng.normal(0.0, 1.0, size=(n_samples, n_features))
    return LabeledDataset(features=features, labels=labels.astype(np.int64), n_classes=n_classes)


def save_dataset(dataset: LabeledDataset, path: str | Path) -> None:
    """Write a dataset as .csv (label,f1,...) or .bin plus a .json sidecar.

    The binary layout is little-endian float32, one record per sample, label
    first then features; the sidecar records shapes and dtype.
    """
    path = Path(path)
    records = np.hstack(
        [dataset.labels[:, None].astype("<f4"), dataset.features.astype("<f4")]
    )
    if path.suffix == ".csv":
        np.savetxt(path, records, delimiter=",", fmt="%.9g")
    elif path.suffix == ".bin":
        records.astype("<f4").tofile(path)
    else:
        raise ParameterError(f"unsupported dataset extension {path.suffix!r}")
    sidecar = {
        "n_samples": len(dataset),
        "n_features": dataset.features.shape[1],
        "n_classes": dataset.n_classes,
        "dtype": "float32",
        "byte_order": "little",
        "layout": "label,features",
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load_dataset(path: str | Path) -> LabeledDataset:
    """Load a dataset written by save_dataset (or matching its format).

    The .json sidecar is required for .bin files; for .csv it is optional,
    in which case the class count is inferred as max(label) + 1.
    """
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else None
    if path.suffix == ".csv":
        records = np.loadtxt(path, delimiter=",", ndmin=2)
    elif path.suffix == ".bin":
        if sidecar is None:
            raise ParameterError(f"binary dataset {path} requires sidecar {sidecar_path}")
        raw = np.fromfile(path, dtype="<f4")
        records = raw.reshape(sidecar["n_samples"], sidecar["n_features"] + 1).astype(np.float64)
    else:
        raise ParameterError(f"unsupported dataset extension {path.suffix!r}")
    labels = records[:, 0].astype(np.int64)
    features = records[:, 1:].astype(np.float64)
    n_classes = sidecar["n_classes"] if sidecar else int(labels.max()) + 1
    return LabeledDataset(features=features, labels=labels, n_classes=n_classes)


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


def partition_dataset(
    dataset: LabeledDataset,
    profiles,
    mode: str,
    rng: np.random.Generator,
    classes_per_client: int = 2,
) -> Partition:
    """Assign each client `data_count` sample indices.

    iid: indices drawn uniformly with replacement from the whole set.
    non_iid: each client first draws `classes_per_client` distinct classes,
    then samples with replacement from those classes' pool only.  Sampling
    with replacement is required because per-client counts may sum past the
    dataset size.
    """
    if mode not in PARTITION_MODES:
        raise ParameterError(f"partition mode must be one of {PARTITION_MODES}, got {mode!r}")
    if mode == "non_iid":
        if classes_per_client < 1:
            raise ParameterError("classes_per_client must be >= 1")
        if dataset.n_classes < classes_per_client:
            raise ParameterError(
                f"dataset has {dataset.n_classes} classes, fewer than "
                f"classes_per_client={classes_per_client}"
            )
    by_class = [np.flatnonzero(dataset.labels == c) for c in range(dataset.n_classes)]
    if mode == "non_iid" and any(len(pool) == 0 for pool in by_class):
        raise ParameterError("non_iid partitioning requires every class to be represented")

    assignment: dict[ClientId, np.ndarray] = {}
    n = len(dataset)
    for p in profiles:
        count = int(p.data_count)
        if mode == "iid":
            idx = rng.integers(0, n, size=count)
        else:
            classes = rng.choice(dataset.n_classes, size=classes_per_client, replace=False)
            pool = np.concatenate([by_class[c] for c in sorted(classes)])
            idx = pool[rng.integers(0, len(pool), size=count)]
        assignment[p.id] = idx.astype(np.int64)
    return Partition(assignment=assignment, mode=mode, classes_per_client=classes_per_client)


# ---------------------------------------------------------------------------
# Native model: small feed-forward softmax classifier
# ---------------------------------------------------------------------------


class MlpNet:
    """Feed-forward softmax classifier over flat feature vectors.

    Hidden layers (ReLU) are optional; with none this is plain multinomial
    logistic regression.  Parameters travel as one flat float64 vector so
    they can be averaged without knowing the layout.
    """

    def __init__(self, n_features: int, n_classes: int, hidden: tuple[int, ...] = ()):
        if n_features < 1 or n_classes < 2:
            raise ParameterError("need n_features >= 1 and n_classes >= 2")
        if any(h < 1 for h in hidden):
            raise ParameterError("hidden layer sizes must be >= 1")
        self.dims = (n_features, *hidden, n_classes)

    @property
    def param_count(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.dims, self.dims[1:]))

    def init_params(self, rng: np.random.Generator, scale: float = 0.01) -> np.ndarray:
        return scale * rng.normal(0.0, 1.0, size=self.param_count)

    def _unpack(self, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        if flat.size != self.param_count:
            raise ModelError(f"expected {self.param_count} parameters, got {flat.size}")
        layers = []
        pos = 0
        for a, b in zip(self.dims, self.dims[1:]):
            w = flat[pos : pos + a * b].reshape(a, b)
            pos += a * b
            bias = flat[pos : pos + b]
            pos += b
            layers.append((w, bias))
        return layers

    def _forward(self, flat: np.ndarray, x: np.ndarray):
        layers = self._unpack(flat)
        activations = [x]
        for i, (w, b) in enumerate(layers):
            z = activations[-1] @ w + b
            if i < len(layers) - 1:
                z = np.maximum(z, 0.0)
            activations.append(z)
        return layers, activations

    @staticmethod
    def _softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def loss(self, flat: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        """Mean softmax cross-entropy."""
        _, activations = self._forward(flat, x)
        probs = self._softmax(activations[-1])
        return float(-np.mean(np.log(probs[np.arange(len(y)), y] + 1e-300)))

    def loss_and_grad(self, flat: np.ndarray, x: np.ndarray, y: np.ndarray):
        """Loss plus its gradient w.r.t. the flat parameter vector."""
        layers, activations = self._forward(flat, x)
        probs = self._softmax(activations[-1])
        n = len(y)
        loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))

        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grads: list[np.ndarray] = []
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            a_prev = activations[i]
            gw = a_prev.T @ delta
            gb = delta.sum(axis=0)
            grads.append(gb)
            grads.append(gw.ravel())
            if i > 0:
                delta = (delta @ w.T) * (activations[i] > 0.0)
        grads.reverse()
        return loss, np.concatenate([g.ravel() for g in grads])

    def predict(self, flat: np.ndarray, x: np.ndarray) -> np.ndarray:
        _, activations = self._forward(flat, x)
        return np.argmax(activations[-1], axis=1)

    def accuracy(self, flat: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(flat, x) == y))


def local_update(
    model: GlobalModel,
    features: np.ndarray,
    labels: np.ndarray,
    net: MlpNet,
    hyper: SgdHyper,
    rng: np.random.Generator,
) -> GlobalModel:
    """One client's local pass: epochs x ceil(n/batch) minibatch SGD steps.

    The learning rate is lr0 * lr_decay ** model.round, i.e. decay is applied
    per aggregation round, not per epoch.  The input model and the shard are
    left untouched; a new snapshot is returned with the same round counter.
    """
    n = len(labels)
    if n == 0:
        raise ParameterError("shard must be non-empty")
    if net.param_count != model.param_count:
        raise ModelError(
            f"model has {model.param_count} parameters, network expects {net.param_count}"
        )
    lr = hyper.lr0 * hyper.lr_decay**model.round
    params = model.params.copy()
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            _, grad = net.loss_and_grad(params, features[batch], labels[batch])
            params -= lr * grad
    return GlobalModel(params=params, round=model.round)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def aggregate(updates: list[tuple[GlobalModel, int]], weighted: bool = False) -> GlobalModel:
    """Average client parameter vectors into the next global model.

    Unweighted by default; `weighted` switches to a data-count-weighted mean.
    Contributions are summed in a canonical order (sorted by parameter bytes,
    then weight) relative to a reference vector, which makes the result
    exactly permutation-invariant and makes averaging N identical models
    return those parameters bit for bit.
    """
    if not updates:
        raise ParameterError("aggregate requires at least one update")
    count = updates[0][0].param_count
    for m, w in updates:
        if m.param_count != count:
            raise ModelError("all updates must have the same parameter count")
        if w < 0:
            raise ParameterError("weights must be non-negative")
    if weighted:
        total = float(sum(w for _, w in updates))
        if total <= 0:
            raise ParameterError("weighted aggregation requires a positive total weight")
        coeffs = [w / total for _, w in updates]
    else:
        coeffs = [1.0 / len(updates)] * len(updates)

    canon = sorted(
        zip(updates, coeffs), key=lambda item: (item[0][0].params.tobytes(), item[0][1])
    )
    ref = canon[0][0][0].params
    acc = np.zeros(count)
    for (m, _), coeff in canon:
        acc += coeff * (m.params - ref)
    next_round = max(m.round for m, _ in updates) + 1
    return GlobalModel(params=ref + acc, round=next_round)


# ---------------------------------------------------------------------------
# Trainers
# ---------------------------------------------------------------------------


def surrogate_accuracy(update_count: int, a_max: float, tau: float) -> float:
    """Saturating accuracy curve: a_max * (1 - exp(-updates / tau))."""
    if update_count < 0:
        raise ParameterError("update_count must be >= 0")
    if not 0 <= a_max <= 1:
        raise ParameterError("a_max must be in [0, 1]")
    if tau <= 0:
        raise ParameterError("tau must be positive")
    return a_max * (1.0 - math.exp(-update_count / tau))


class Trainer(abc.ABC):
    """Protocol-facing training interface.

    The round loop calls init_model once, client_update per aggregated
    client, notify_aggregated after every successful aggregation, and
    evaluate to obtain the accuracy recorded for the round.
    """

    @abc.abstractmethod
    def init_model(self) -> GlobalModel: ...

    @abc.abstractmethod
    def client_update(
        self, model: GlobalModel, client_id: ClientId, rng: np.random.Generator
    ) -> GlobalModel: ...

    @abc.abstractmethod
    def evaluate(self, model: GlobalModel) -> float: ...

    def notify_aggregated(self, client_ids: tuple[ClientId, ...], round_index: int) -> None:
        """Hook invoked once per aggregation with the contributing clients."""


@dataclass
class SurrogateTrainer(Trainer):
    """Accuracy stand-in driven purely by the cumulative update count.

    Each (client, round) pair that reaches aggregation bumps the counter;
    accuracy is the deterministic saturating curve over that counter, so
    protocol-level experiments never touch real training.
    """

    a_max: float = 0.9
    tau: float = 100.0
    update_count: int = field(default=0, init=False)

    def init_model(self) -> GlobalModel:
        return GlobalModel(params=np.zeros(0), round=0)

    def client_update(self, model, client_id, rng):
        return model

    def notify_aggregated(self, client_ids, round_index) -> None:
        self.update_count += len(client_ids)

    def evaluate(self, model) -> float:
        return surrogate_accuracy(self.update_count, self.a_max, self.tau)


class NativeTrainer(Trainer):
    """Real minibatch SGD on per-client shards of a labelled dataset."""

    def __init__(
        self,
        train_set: LabeledDataset,
        test_set: LabeledDataset,
        partition: Partition,
        net: MlpNet,
        hyper: SgdHyper,
        init_rng: np.random.Generator,
    ):
        if train_set.n_classes != test_set.n_classes:
            raise ParameterError("train and test sets must agree on the class count")
        self.train_set = train_set
        self.test_set = test_set
        self.partition = partition
        self.net = net
        self.hyper = hyper
        self._init_params = net.init_params(init_rng)

    def init_model(self) -> GlobalModel:
        return GlobalModel(params=self._init_params, round=0)

    def client_update(self, model, client_id, rng):
        idx = self.partition.assignment.get(client_id)
        if idx is None:
            raise ParameterError(f"client {int(client_id)} has no shard in the partition")
        return local_update(
            model,
            self.train_set.features[idx],
            self.train_set.labels[idx],
            self.net,
            self.hyper,
            rng,
        )

    def evaluate(self, model) -> float:
        return self.net.accuracy(model.params, self.test_set.features, self.test_set.labels)
