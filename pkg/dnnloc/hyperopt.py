"""
Bayesian optimization of the network hyperparameters.

The search space is two hidden-layer widths, a log-scaled learning rate and the
hidden activation. After n_init uniform draws, every proposal maximizes expected
improvement under one Gaussian-process surrogate per activation kind (squared
exponential kernel, per-dimension length scales picked by marginal likelihood
over a fixed grid). Costs are minimized.
"""

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import norm

from . import config, console
from .errors import ConfigError
from .neuralnet import Activation, TrainConfig, forward, localization_model, mse_loss, train
from .seeding import derive_seed, substream

LENGTH_SCALE_GRID = (0.1, 0.2, 0.4, 0.8, 1.6)
JITTER = 1e-8
PENALTY_FACTOR = 10.0
# used for diverged trials while no finite cost exists yet
FALLBACK_PENALTY = 1.0


@dataclass(frozen=True)
class HyperPoint:
    h1: int
    h2: int
    learning_rate: float
    activation: Activation

    def describe(self) -> str:
        return f"h1={self.h1} h2={self.h2} lr={self.learning_rate:.6g} activation={self.activation.value}"


@dataclass(frozen=True)
class HyperSpace:
    nodes_min: int = 4
    nodes_max: int = 50
    lr_min: float = 1e-3
    lr_max: float = 1.0
    activations: Tuple[Activation, ...] = tuple(Activation)

    def __post_init__(self):
        if not 1 <= self.nodes_min <= self.nodes_max:
            raise ConfigError(f"invalid node range [{self.nodes_min}, {self.nodes_max}]")
        if not 0 < self.lr_min <= self.lr_max:
            raise ConfigError(f"invalid learning-rate range [{self.lr_min}, {self.lr_max}]")
        if not self.activations:
            raise ConfigError("at least one activation is required")

    def contains(self, point: HyperPoint) -> bool:
        return (self.nodes_min <= point.h1 <= self.nodes_max
                and self.nodes_min <= point.h2 <= self.nodes_max
                and self.lr_min <= point.learning_rate <= self.lr_max
                and point.activation in self.activations)

    def _node(self, u: float) -> int:
        span = self.nodes_max - self.nodes_min
        return int(min(self.nodes_max, max(self.nodes_min, round(self.nodes_min + u * span))))

    def decode(self, u: Sequence[float], activation: Activation) -> HyperPoint:
        """Unit-cube coordinates [log-lr, h1, h2] -> a point; node counts are rounded here."""
        lo, hi = math.log(self.lr_min), math.log(self.lr_max)
        lr = math.exp(lo + float(np.clip(u[0], 0.0, 1.0)) * (hi - lo))
        lr = min(self.lr_max, max(self.lr_min, lr))
        return HyperPoint(self._node(float(u[1])), self._node(float(u[2])), lr, activation)

    def encode(self, point: HyperPoint) -> np.ndarray:
        lo, hi = math.log(self.lr_min), math.log(self.lr_max)
        span = max(self.nodes_max - self.nodes_min, 1)
        lr_u = 0.0 if hi == lo else (math.log(point.learning_rate) - lo) / (hi - lo)
        return np.array([lr_u, (point.h1 - self.nodes_min) / span, (point.h2 - self.nodes_min) / span])

    def sample(self, rng: np.random.Generator) -> HyperPoint:
        u = rng.uniform(size=3)
        activation = self.activations[int(rng.integers(len(self.activations)))]
        return self.decode(u, activation)


@dataclass
class Trial:
    index: int
    config: HyperPoint
    cost: Optional[float]   # None when the objective diverged or raised
    seed: int
    error: str = ""

    @property
    def diverged(self) -> bool:
        return self.cost is None


Objective = Callable[[HyperPoint, int], float]


# ==============================================================================
# ACQUISITION
# ==============================================================================

def expected_improvement(mean, stddev, best_so_far):
    """EI for minimization: (best - mu) Phi(z) + sigma phi(z), z = (best - mu) / sigma.

    Falls back to max(best - mu, 0) where sigma is zero. Accepts scalars or arrays.
    """
    mu = np.asarray(mean, dtype=float)
    sigma = np.asarray(stddev, dtype=float)
    if np.any(sigma < 0):
        raise ConfigError("stddev must be non-negative")
    gain = best_so_far - mu
    safe = np.where(sigma > 0, sigma, 1.0)
    z = gain / safe
    ei = np.where(sigma > 0, gain * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


# ==============================================================================
# SURROGATE
# ==============================================================================

def se_kernel(a: np.ndarray, b: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    diff = (a[:, None, :] - b[None, :, :]) / length_scales
    return np.exp(-0.5 * np.sum(diff * diff, axis=-1))


class GaussianProcess:
    """Zero-mean, unit-variance GP on standardized costs."""

    def __init__(self, length_scales: Sequence[float], jitter: float = JITTER):
        self.length_scales = np.asarray(length_scales, dtype=float)
        self.jitter = jitter
        self.x: Optional[np.ndarray] = None
        self._chol = None
        self._alpha: Optional[np.ndarray] = None
        self.log_likelihood = -np.inf

    def fit(self, x: np.ndarray, y: np.ndarray) -> "GaussianProcess":
        self.x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k = se_kernel(self.x, self.x, self.length_scales) + self.jitter * np.eye(len(self.x))
        self._chol = cho_factor(k, lower=True)
        self._alpha = cho_solve(self._chol, y)
        log_det = 2.0 * np.sum(np.log(np.diag(self._chol[0])))
        self.log_likelihood = float(-0.5 * y @ self._alpha - 0.5 * log_det
                                    - 0.5 * len(y) * math.log(2.0 * math.pi))
        return self

    def predict(self, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        xs = np.asarray(xs, dtype=float)
        if self.x is None:
            return np.zeros(len(xs)), np.ones(len(xs))
        ks = se_kernel(xs, self.x, self.length_scales)
        mean = ks @ self._alpha
        v = cho_solve(self._chol, ks.T)
        var = 1.0 - np.sum(ks * v.T, axis=1)
        return mean, np.sqrt(np.maximum(var, 0.0))


def fit_surrogate(x: np.ndarray, y: np.ndarray) -> GaussianProcess:
    """GP with the grid length scales of highest marginal likelihood."""
    if len(x) == 0:
        return GaussianProcess(np.full(3, LENGTH_SCALE_GRID[2]))
    best: Optional[GaussianProcess] = None
    for jitter in (JITTER, 1e-6, 1e-4):
        for scales in product(LENGTH_SCALE_GRID, repeat=x.shape[1]):
            try:
                gp = GaussianProcess(scales, jitter).fit(x, y)
            except (LinAlgError, ValueError):
                continue
            if best is None or gp.log_likelihood > best.log_likelihood:
                best = gp
        if best is not None:
            return best
    raise ConfigError("could not fit a surrogate to the trial history")


# ==============================================================================
# OPTIMIZATION
# ==============================================================================

def effective_costs(trials: Sequence[Trial]) -> np.ndarray:
    """Finite costs as observed; diverged trials get 10x the worst finite cost."""
    finite = [t.cost for t in trials if t.cost is not None]
    worst = max(finite) if finite else 0.0
    penalty = PENALTY_FACTOR * worst if worst > 0 else FALLBACK_PENALTY
    return np.array([penalty if t.cost is None else t.cost for t in trials], dtype=float)


def best_so_far(trials: Sequence[Trial]) -> List[float]:
    costs = effective_costs(trials)
    return [float(v) for v in np.minimum.accumulate(costs)] if len(costs) else []


def best_trial(trials: Sequence[Trial]) -> Trial:
    costs = effective_costs(trials)
    return trials[int(np.argmin(costs))]


def _run_trial(objective: Objective, point: HyperPoint, index: int, seed: int) -> Trial:
    trial_seed = derive_seed(seed, f"trial-{index}")
    try:
        cost = float(objective(point, trial_seed))
    except Exception as e:
        console.warn(f"trial {index}: {point.describe()} failed: {e}")
        return Trial(index, point, None, trial_seed, str(e))
    if not math.isfinite(cost) or cost < 0:
        console.warn(f"trial {index}: {point.describe()} returned cost {cost}")
        return Trial(index, point, None, trial_seed, f"cost {cost}")
    console.info(f"trial {index}: {point.describe()} cost={cost:.6g}")
    return Trial(index, point, cost, trial_seed)


def _propose(space: HyperSpace, trials: Sequence[Trial], rng: np.random.Generator,
             num_candidates: int) -> HyperPoint:
    costs = effective_costs(trials)
    mu, sd = costs.mean(), costs.std()
    scaled = (costs - mu) / (sd if sd > 0 else 1.0)
    best = float(scaled.min())

    raw = rng.uniform(size=(num_candidates, 3))
    best_score, best_point = -1.0, None
    for activation in space.activations:
        points = [space.decode(u, activation) for u in raw]
        xs = np.array([space.encode(p) for p in points])
        mask = [i for i, t in enumerate(trials) if t.config.activation is activation]
        if mask:
            xo = np.array([space.encode(trials[i].config) for i in mask])
            gp = fit_surrogate(xo, scaled[mask])
        else:
            gp = GaussianProcess(np.full(3, LENGTH_SCALE_GRID[2]))
        mean, std = gp.predict(xs)
        ei = expected_improvement(mean, std, best)
        i = int(np.argmax(ei))
        if ei[i] > best_score:
            best_score, best_point = float(ei[i]), points[i]
    return best_point


def optimize(space: HyperSpace, objective: Objective, budget: int = config.BUDGET,
             n_init: int = config.N_INIT, seed: int = config.DEFAULT_SEED,
             num_candidates: int = config.CANDIDATES) -> Tuple[Trial, List[Trial]]:
    """Run `budget` trials; returns (best trial, full trial log)."""
    if n_init < 1 or budget < n_init:
        raise ConfigError(f"need budget >= n_init >= 1 (budget={budget}, n_init={n_init})")
    if num_candidates < 1:
        raise ConfigError("need at least one acquisition candidate")
    sampler = substream(seed, "hyperopt")
    candidates = substream(seed, "candidates")

    trials: List[Trial] = []
    for index in range(budget):
        if index < n_init:
            point = space.sample(sampler)
        else:
            point = _propose(space, trials, candidates, num_candidates)
        assert space.contains(point), f"proposal outside the search space: {point}"
        trials.append(_run_trial(objective, point, index, seed))
    return best_trial(trials), trials


def random_search(space: HyperSpace, objective: Objective, budget: int = config.BUDGET,
                  seed: int = config.DEFAULT_SEED) -> Tuple[Trial, List[Trial]]:
    """Equal-budget baseline drawing every trial like optimize's initial phase."""
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    sampler = substream(seed, "hyperopt")
    trials = [_run_trial(objective, space.sample(sampler), i, seed) for i in range(budget)]
    return best_trial(trials), trials


def training_objective(features: np.ndarray, labels: np.ndarray,
                       max_epochs: int = config.MAX_EPOCHS,
                       batch_size: Optional[int] = None,
                       eval_features: Optional[np.ndarray] = None,
                       eval_labels: Optional[np.ndarray] = None) -> Objective:
    """Cost = final training MSE, or MSE on the evaluation rows when given."""
    def objective(point: HyperPoint, seed: int) -> float:
        model = localization_model(features.shape[1], point.h1, point.h2, point.activation, seed)
        trained, history = train(model, features, labels,
                                 TrainConfig(point.learning_rate, max_epochs, batch_size, seed=seed))
        if eval_features is None:
            return min(history)
        return mse_loss(forward(trained, eval_features), eval_labels)
    return objective
