"""
Multilayer perceptron trained by plain gradient descent on the mean squared error.

The localization model is [n_in, h1, h2, 2]: two hidden layers sharing one
activation and a linear output. Any layer list of length >= 2 works, which keeps
the single-layer linear case available for checks.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from . import config
from .errors import ConfigError, DivergenceError, ShapeError
from .features import NormParams, denormalize_labels
from .seeding import substream

FORMAT_VERSION = 1


class Activation(Enum):
    TANSIG = "tansig"
    LOGSIG = "logsig"
    PURELIN = "purelin"
    POSLIN = "poslin"
    RADBAS = "radbas"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self is Activation.TANSIG:
            return np.tanh(x)
        if self is Activation.LOGSIG:
            return expit(x)
        if self is Activation.PURELIN:
            return np.array(x, dtype=float, copy=True)
        if self is Activation.POSLIN:
            return np.maximum(x, 0.0)
        return np.exp(-np.square(x))

    def derivative(self, x: np.ndarray) -> np.ndarray:
        if self is Activation.TANSIG:
            t = np.tanh(x)
            return 1.0 - t * t
        if self is Activation.LOGSIG:
            s = expit(x)
            return s * (1.0 - s)
        if self is Activation.PURELIN:
            return np.ones_like(x, dtype=float)
        if self is Activation.POSLIN:
            # poslin'(0) is taken as 0
            return (x > 0).astype(float)
        return -2.0 * x * np.exp(-np.square(x))

    @classmethod
    def parse(cls, value: str) -> "Activation":
        key = value.strip().lower()
        aliases = {"tanh": "tansig", "sigmoid": "logsig", "linear": "purelin", "relu": "poslin"}
        key = aliases.get(key, key)
        for act in cls:
            if act.value == key:
                return act
        raise ConfigError(f"unknown activation {value!r} (choose from {', '.join(a.value for a in cls)})")


@dataclass
class MlpModel:
    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]   # each (fan_out, fan_in)
    biases: List[np.ndarray]    # each (fan_out,)
    hidden_activation: Activation
    rng_seed: int = 0

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ConfigError(f"invalid layer sizes {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("one weight matrix and bias vector per layer expected")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise ShapeError(f"layer {i}: weights {w.shape} / bias {b.shape}, expected {expected}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_sizes, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.hidden_activation, self.rng_seed)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and \
            all(np.all(np.isfinite(b)) for b in self.biases)

    def describe(self) -> str:
        hidden = "x".join(str(s) for s in self.layer_sizes[1:-1]) or "none"
        return f"hidden={hidden} activation={self.hidden_activation.value}"


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    max_epochs: int = config.MAX_EPOCHS
    batch_size: Optional[int] = None    # None -> full batch
    patience: int = config.PATIENCE
    min_delta: float = config.MIN_DELTA
    seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ConfigError(f"learning rate must be a finite non-negative number, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("minibatch size must be >= 1")


# ==============================================================================
# MODEL CONSTRUCTION
# ==============================================================================

def init_model(layer_sizes: Sequence[int], activation: Activation, seed: int) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases from the seed's init stream."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigError(f"invalid layer sizes {sizes}")
    rng = substream(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(sizes, weights, biases, activation, int(seed))


def localization_model(n_inputs: int, h1: int, h2: int, activation: Activation, seed: int) -> MlpModel:
    return init_model((n_inputs, h1, h2, 2), activation, seed)


# ==============================================================================
# FORWARD / LOSS / BACKWARD
# ==============================================================================

def _check_inputs(model: MlpModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise ShapeError(f"model expects {model.n_inputs} inputs, got matrix of shape {x.shape}")
    return x


def _forward_pass(model: MlpModel, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Pre-activations per layer and activations per layer (input first)."""
    pre, acts = [], [x]
    last = len(model.weights) - 1
    a = x
    with np.errstate(over="ignore", invalid="ignore"):
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            z = a @ w.T + b
            a = z if i == last else model.hidden_activation(z)
            pre.append(z)
            acts.append(a)
    return pre, acts


def forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    x = _check_inputs(model, features)
    _, acts = _forward_pass(model, x)
    return acts[-1]


def mse_loss(pred: np.ndarray, labels: np.ndarray) -> float:
    p = np.asarray(pred, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape:
        raise ShapeError(f"prediction shape {p.shape} does not match labels {y.shape}")
    if p.size == 0:
        raise ShapeError("mse of an empty matrix")
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(np.square(p - y)))


def backward(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> Gradients:
    """Exact gradients of mse_loss with respect to every weight and bias."""
    x = _check_inputs(model, features)
    y = np.asarray(labels, dtype=float)
    pre, acts = _forward_pass(model, x)
    if y.shape != acts[-1].shape:
        raise ShapeError(f"labels shape {y.shape} does not match output {acts[-1].shape}")

    grad_w: List[np.ndarray] = [np.empty(0)] * len(model.weights)
    grad_b: List[np.ndarray] = [np.empty(0)] * len(model.weights)
    with np.errstate(over="ignore", invalid="ignore"):
        delta = 2.0 * (acts[-1] - y) / y.size
        for i in range(len(model.weights) - 1, -1, -1):
            grad_w[i] = delta.T @ acts[i]
            grad_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ model.weights[i]) * model.hidden_activation.derivative(pre[i - 1])
    return Gradients(grad_w, grad_b)


# ==============================================================================
# TRAINING
# ==============================================================================

def _step(model: MlpModel, grads: Gradients, lr: float) -> None:
    for i in range(len(model.weights)):
        model.weights[i] -= lr * grads.weights[i]
        model.biases[i] -= lr * grads.biases[i]


def train(model: MlpModel, features: np.ndarray, labels: np.ndarray,
          train_config: TrainConfig) -> Tuple[MlpModel, List[float]]:
    """Gradient descent from `model` (left untouched); returns the best model seen and the loss history.

    history[0] is the loss before the first update and history[e] the loss after
    epoch e. Training stops early once the best loss has not improved by more
    than min_delta for `patience` epochs.
    """
    x = _check_inputs(model, features)
    y = np.asarray(labels, dtype=float)
    if y.ndim != 2 or y.shape != (x.shape[0], model.n_outputs):
        raise ShapeError(f"labels shape {y.shape} does not match {x.shape[0]} users x {model.n_outputs} outputs")

    current = model.copy()
    best_model = current.copy()
    loss = mse_loss(forward(current, x), y)
    if not np.isfinite(loss):
        raise DivergenceError(0, "non-finite loss before training")
    history = [loss]
    best, stale = loss, 0
    best_seen = loss
    lr = train_config.learning_rate
    n = x.shape[0]
    batch = train_config.batch_size
    rng = substream(train_config.seed, "batches") if batch is not None else None

    for epoch in range(1, train_config.max_epochs + 1):
        if batch is None or batch >= n:
            _step(current, backward(current, x, y), lr)
        else:
            order = rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                _step(current, backward(current, x[idx], y[idx]), lr)

        loss = mse_loss(forward(current, x), y)
        if not np.isfinite(loss) or not current.is_finite():
            raise DivergenceError(epoch, f"{current.describe()} lr={lr:g}")
        history.append(loss)

        if loss < best_seen:
            best_seen = loss
            best_model = current.copy()
        if best - loss > train_config.min_delta:
            best, stale = loss, 0
        else:
            stale += 1
            if stale >= train_config.patience:
                break
    return best_model, history


def predict_positions(model: MlpModel, features: np.ndarray, label_norm: NormParams) -> np.ndarray:
    """Denormalized (x, y) predictions."""
    return denormalize_labels(forward(model, features), label_norm)


# ==============================================================================
# SERIALIZATION
# ==============================================================================

def model_to_dict(model: MlpModel) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "activation": model.hidden_activation.value,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "seed": model.rng_seed,
    }


def model_from_dict(data: Dict[str, Any]) -> MlpModel:
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported model format version {version!r}")
    try:
        return MlpModel(
            layer_sizes=tuple(data["layer_sizes"]),
            weights=[np.asarray(w, dtype=float).reshape(len(w), -1) for w in data["weights"]],
            biases=[np.asarray(b, dtype=float) for b in data["biases"]],
            hidden_activation=Activation.parse(data["activation"]),
            rng_seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed model document: {e}")
