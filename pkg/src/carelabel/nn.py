"""Small dense feedforward classifier with analytic gradients.

The training subject for the robustness probes: plain numpy forward and
backward passes (softmax cross-entropy), seeded SGD on synthetic blob
data, and static property extraction (parameter and FLOP counts, a
training-energy model).

FLOP convention: one multiply and one add are counted separately, so an
affine layer costs ``2 * in_dim * out_dim + out_dim`` per forward pass
(the trailing term is the bias add); activations are not counted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import SplitRng

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True, eq=False)
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    biases: np.ndarray  # (out_dim,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[1],):
            raise ValueError("layer weights/biases shapes inconsistent")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Chain of dense layers; the last layer emits raw class scores.

    An empty layer list is permitted (vacuous model, zero parameters)
    but cannot run a forward pass.
    """

    layers: tuple[DenseLayer, ...]

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        if not self.layers:
            raise ValueError("empty model has no input dimension")
        return self.layers[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    def to_json(self) -> str:
        return json.dumps(
            {
                "layers": [
                    {
                        "in_dim": lyr.in_dim,
                        "out_dim": lyr.out_dim,
                        "activation": lyr.activation,
                        "weights": lyr.weights.ravel().tolist(),
                        "biases": lyr.biases.tolist(),
                    }
                    for lyr in self.layers
                ]
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        doc = json.loads(text)
        layers = []
        for entry in doc["layers"]:
            w = np.array(entry["weights"], dtype=float).reshape(
                entry["in_dim"], entry["out_dim"]
            )
            layers.append(
                DenseLayer(w, np.array(entry["biases"], dtype=float),
                           entry["activation"])
            )
        return cls(tuple(layers))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    inputs: np.ndarray  # (n_samples, in_dim)
    labels: np.ndarray  # (n_samples,) integer class ids
    value_range: tuple[np.ndarray, np.ndarray]  # per-feature (lo, hi)

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("inputs/labels shapes inconsistent")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs must be finite")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @classmethod
    def from_inputs(cls, inputs: np.ndarray, labels: np.ndarray) -> "LabeledDataset":
        inputs = np.asarray(inputs, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        return cls(inputs, labels, (inputs.min(axis=0), inputs.max(axis=0)))


@dataclass(frozen=True)
class StaticModelStats:
    """Published static properties of a trained model."""

    name: str
    top1_acc: float
    flops: float
    params: float
    train_energy_kwh: float
    top5_acc: float | None = None  # stored but never graded

    def __post_init__(self):
        if not 0.0 <= self.top1_acc <= 1.0:
            raise ValueError("top1_acc must lie in [0, 1]")
        if min(self.flops, self.params, self.train_energy_kwh) < 0:
            raise ValueError("counts and energy must be non-negative")


def load_stats_pool(path: str | Path) -> list[StaticModelStats]:
    """Read a JSON array of static model records."""
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        StaticModelStats(
            name=e["name"],
            top1_acc=e["top1_acc"],
            flops=e["flops"],
            params=e["params"],
            train_energy_kwh=e["train_energy_kwh"],
            top5_acc=e.get("top5_acc"),
        )
        for e in entries
    ]


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Raw class scores for one input vector or a batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.shape[1] != model.in_dim:
        raise ValueError(
            f"input dim {h.shape[1]} does not match model ({model.in_dim})"
        )
    for lyr in model.layers:
        h = h @ lyr.weights + lyr.biases
        if lyr.activation == "relu":
            h = np.maximum(h, 0.0)
    return h[0] if single else h


def _forward_trace(model: MlpModel, x: np.ndarray):
    """Forward pass keeping post-activation values per layer."""
    hs = [x]
    h = x
    for lyr in model.layers:
        h = h @ lyr.weights + lyr.biases
        if lyr.activation == "relu":
            h = np.maximum(h, 0.0)
        hs.append(h)
    return hs


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def input_gradient(model: MlpModel, x: np.ndarray, label) -> np.ndarray:
    """Gradient of the softmax cross-entropy loss w.r.t. the input.

    Batched inputs give per-sample gradients of per-sample losses.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x.reshape(1, -1) if single else x
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    hs = _forward_trace(model, xb)
    delta = _softmax(hs[-1])
    delta[np.arange(len(labels)), labels] -= 1.0
    if model.layers[-1].activation == "relu":
        delta = delta * (hs[-1] > 0)
    for i in range(len(model.layers) - 1, -1, -1):
        delta = delta @ model.layers[i].weights.T
        if i > 0 and model.layers[i - 1].activation == "relu":
            delta = delta * (hs[i] > 0)
    return delta[0] if single else delta


def parameter_gradients(model: MlpModel, x: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy gradients for every layer's (W, b)."""
    xb = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    n = xb.shape[0]
    hs = _forward_trace(model, xb)
    delta = _softmax(hs[-1])
    delta[np.arange(n), labels] -= 1.0
    if model.layers[-1].activation == "relu":
        delta = delta * (hs[-1] > 0)
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        grads[i] = (hs[i].T @ delta / n, delta.mean(axis=0))
        if i > 0:
            delta = delta @ model.layers[i].weights.T
            if model.layers[i - 1].activation == "relu":
                delta = delta * (hs[i] > 0)
    return grads


def cross_entropy(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy loss over a batch."""
    xb = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    scores = forward(model, xb)
    z = scores - scores.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_p[np.arange(len(labels)), labels].mean())


def accuracy(model: MlpModel, dataset: LabeledDataset) -> float:
    preds = forward(model, dataset.inputs).argmax(axis=1)
    return float((preds == dataset.labels).mean())


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class SgdResult:
    model: MlpModel
    holdout_accuracy: float
    train_accuracy: float


def _init_model(dims: list[int], seed: int, activation: str) -> MlpModel:
    rng = SplitRng(seed).split("mlp-init", *dims)
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        scale = (2.0 / a) ** 0.5
        w = np.array(rng.normals(a * b)).reshape(a, b) * scale
        last = i == len(dims) - 2
        layers.append(
            DenseLayer(w, np.zeros(b), "identity" if last else activation)
        )
    return MlpModel(tuple(layers))


def train_sgd(
    dims: list[int],
    dataset: LabeledDataset,
    epochs: int = 50,
    step: float = 0.1,
    seed: int = 0,
    batch_size: int = 32,
) -> SgdResult:
    """Seeded minibatch SGD with an 80/20 holdout split.

    Fully deterministic: initialization, the split, and every epoch's
    shuffle come from streams derived from ``seed``.
    """
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    if dims[0] != dataset.inputs.shape[1]:
        raise ValueError("first layer dim must match dataset features")
    rng = SplitRng(seed)
    order = list(range(dataset.n_samples))
    rng.split("holdout").shuffle(order)
    cut = max(1, int(0.8 * len(order)))
    train_idx, hold_idx = order[:cut], order[cut:]
    x_train = dataset.inputs[train_idx]
    y_train = dataset.labels[train_idx]

    model = _init_model(dims, seed, "relu")
    shuffle_rng = rng.split("epochs")
    for _ in range(epochs):
        perm = list(range(len(train_idx)))
        shuffle_rng.shuffle(perm)
        for start in range(0, len(perm), batch_size):
            batch = perm[start : start + batch_size]
            grads = parameter_gradients(model, x_train[batch], y_train[batch])
            layers = []
            for lyr, (gw, gb) in zip(model.layers, grads):
                layers.append(
                    DenseLayer(
                        lyr.weights - step * gw,
                        lyr.biases - step * gb,
                        lyr.activation,
                    )
                )
            model = MlpModel(tuple(layers))
    holdout = LabeledDataset.from_inputs(
        dataset.inputs[hold_idx], dataset.labels[hold_idx]
    )
    train = LabeledDataset.from_inputs(x_train, y_train)
    return SgdResult(
        model=model,
        holdout_accuracy=accuracy(model, holdout) if hold_idx else float("nan"),
        train_accuracy=accuracy(model, train),
    )


def make_blobs(
    n_samples: int,
    dims: int = 2,
    classes: int = 2,
    seed: int = 0,
    spread: float = 0.6,
    center_scale: float = 2.0,
) -> LabeledDataset:
    """Seeded Gaussian blobs, one cluster per class."""
    rng = SplitRng(seed).split("blobs", n_samples, dims, classes)
    centers = [
        [center_scale * rng.normal() for _ in range(dims)] for _ in range(classes)
    ]
    inputs = np.empty((n_samples, dims))
    labels = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        c = i % classes
        labels[i] = c
        inputs[i] = [centers[c][d] + spread * rng.normal() for d in range(dims)]
    return LabeledDataset.from_inputs(inputs, labels)


# ---------------------------------------------------------------------------
# static properties
# ---------------------------------------------------------------------------


def count_params(model: MlpModel) -> int:
    """Total learnable parameters: sum of in*out + out per layer."""
    return sum(l.in_dim * l.out_dim + l.out_dim for l in model.layers)


def count_flops(model: MlpModel) -> int:
    """FLOPs per forward pass: 2*in*out multiply-adds plus bias adds."""
    return sum(2 * l.in_dim * l.out_dim + l.out_dim for l in model.layers)


def estimate_train_energy(
    avg_watts: float, epoch_seconds: float, epochs: int
) -> float:
    """Training energy in kWh: watts * seconds per epoch * epochs / 3.6e6."""
    if avg_watts <= 0 or epoch_seconds <= 0:
        raise ValueError("wattage and epoch time must be positive")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    return avg_watts * epoch_seconds * epochs / 3.6e6
