"""
One-dimensional Gaussian and Gaussian-mixture intensity models.

These give the Pr(I_p | f_p) factor of the graph-cut data term: models are fit to
pixel intensities and evaluated as per-pixel negative log-likelihood fields.
"""
import json
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from src.utility.errors import DegenerateInputError
from src.utility.logger import get_logger
from src.volumecore.volume import MaskLike, Slice, as_bool

logger = get_logger(__name__)

VARIANCE_FLOOR = 1e-4
PROBABILITY_FLOOR = 1e-12
MAX_NLL = float(-np.log(PROBABILITY_FLOOR))
EM_TOLERANCE = 1e-6
EM_MAX_ITERATIONS = 200

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianMixture:
    """
    K-component 1D Gaussian mixture.

    Attributes:
        weights (Tuple[float, ...]): Mixing weights, non-negative, summing to 1.
        means (Tuple[float, ...]): Component means in intensity units.
        variances (Tuple[float, ...]): Component variances, each >= VARIANCE_FLOOR.
    """
    weights: Tuple[float, ...]
    means: Tuple[float, ...]
    variances: Tuple[float, ...]

    def __post_init__(self) -> None:
        weights = tuple(float(w) for w in self.weights)
        means = tuple(float(m) for m in self.means)
        variances = tuple(float(v) for v in self.variances)
        if not (len(weights) == len(means) == len(variances) >= 1):
            raise ValueError("mixture needs K >= 1 components with matching parameter lengths")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must be non-negative and sum to 1, got {weights}")
        if any(v < VARIANCE_FLOOR * (1 - 1e-12) for v in variances):
            raise ValueError(f"mixture variances must be >= {VARIANCE_FLOOR}, got {variances}")
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'variances', variances)

    @property
    def K(self) -> int:
        return len(self.weights)

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """log(w_k) + log N(x; mu_k, var_k), shaped x.shape + (K,)."""
        x = np.asarray(x, dtype=np.float64)[..., np.newaxis]
        means = np.asarray(self.means)
        variances = np.asarray(self.variances)
        with np.errstate(divide='ignore'):
            log_w = np.log(np.asarray(self.weights))
        return log_w - 0.5 * (_LOG_2PI + np.log(variances) + (x - means) ** 2 / variances)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_densities(x), axis=-1)

    def log_likelihood(self, samples: Sequence[float]) -> float:
        return float(np.sum(self.log_density(np.asarray(samples, dtype=np.float64))))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'K': self.K,
            'weights': list(self.weights),
            'means': list(self.means),
            'variances': list(self.variances),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GaussianMixture':
        model = cls(tuple(data['weights']), tuple(data['means']), tuple(data['variances']))
        if 'K' in data and int(data['K']) != model.K:
            raise ValueError(f"K={data['K']} does not match {model.K} components")
        return model

    @classmethod
    def from_json(cls, text: str) -> 'GaussianMixture':
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class LikelihoodField:
    """Per-pixel negative log-likelihood, finite and within [0, MAX_NLL]."""
    values: np.ndarray

    @property
    def dims(self):
        return tuple(reversed(self.values.shape))


def _samples(samples: Union[Sequence[float], np.ndarray]) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain NaN or Inf")
    return x


def fit_gaussian(samples: Union[Sequence[float], np.ndarray]) -> GaussianMixture:
    """
    Maximum-likelihood single Gaussian: sample mean and biased sample variance, floored.

    Raises:
        DegenerateInputError: With fewer than two samples.
    """
    x = _samples(samples)
    if x.size < 2:
        raise DegenerateInputError(f"need at least 2 samples to fit a Gaussian, got {x.size}")
    mean = float(np.mean(x))
    variance = max(float(np.mean((x - mean) ** 2)), VARIANCE_FLOOR)
    return GaussianMixture((1.0,), (mean,), (variance,))


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding on 1D samples; falls back to uniform picks when all distances vanish."""
    centers = [float(x[rng.integers(x.size)])]
    for _ in range(1, k):
        d2 = np.min((x[:, np.newaxis] - np.asarray(centers)) ** 2, axis=1)
        total = float(d2.sum())
        if total > 0:
            index = int(rng.choice(x.size, p=d2 / total))
        else:
            index = int(rng.integers(x.size))
        centers.append(float(x[index]))
    return np.sort(np.asarray(centers))


def em_fit(
    samples: Union[Sequence[float], np.ndarray],
    K: int,
    seed: int = 0,
    tol: float = EM_TOLERANCE,
    max_iterations: int = EM_MAX_ITERATIONS,
) -> Tuple[GaussianMixture, List[float]]:
    """
    Fits a K-component mixture by EM from a seeded k-means++ start.

    Args:
        samples: 1D intensities.
        K (int): Number of components (>= 1).
        seed (int): Seed of the k-means++ initialization.
        tol (float): Stop once the log-likelihood gain drops below this value.
        max_iterations (int): Iteration cap.

    Returns:
        Tuple[GaussianMixture, List[float]]: The model (components sorted by mean) and
        the log-likelihood evaluated at every E-step, ending with the final model's.

    Raises:
        DegenerateInputError: With fewer samples than components.
    """
    x = _samples(samples)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if x.size < K or x.size < 2:
        raise DegenerateInputError(f"need at least max(K, 2) samples for K={K}, got {x.size}")

    rng = np.random.default_rng(seed)
    means = kmeans_plus_plus(x, K, rng)
    variances = np.full(K, max(float(np.var(x)), VARIANCE_FLOOR))
    weights = np.full(K, 1.0 / K)

    trace: List[float] = []
    for iteration in range(max_iterations):
        model = GaussianMixture(tuple(weights / weights.sum()), tuple(means), tuple(variances))
        log_p = model.component_log_densities(x)
        log_norm = logsumexp(log_p, axis=1)
        trace.append(float(np.sum(log_norm)))
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            break

        resp = np.exp(log_p - log_norm[:, np.newaxis])
        nk = resp.sum(axis=0)
        alive = nk > 0
        new_means = means.copy()
        new_means[alive] = (resp[:, alive] * x[:, np.newaxis]).sum(axis=0) / nk[alive]
        new_variances = variances.copy()
        new_variances[alive] = (resp[:, alive] * (x[:, np.newaxis] - new_means[alive]) ** 2).sum(axis=0) / nk[alive]
        means = new_means
        variances = np.maximum(new_variances, VARIANCE_FLOOR)
        weights = nk / x.size
    else:
        model = GaussianMixture(tuple(weights / weights.sum()), tuple(means), tuple(variances))
        trace.append(model.log_likelihood(x))
        logger.debug(f"EM hit the {max_iterations}-iteration cap (K={K}, n={x.size})")

    order = np.argsort(np.asarray(model.means), kind='stable')
    model = GaussianMixture(
        tuple(np.asarray(model.weights)[order]),
        tuple(np.asarray(model.means)[order]),
        tuple(np.asarray(model.variances)[order]),
    )
    return model, trace


def fit_gmm(samples: Union[Sequence[float], np.ndarray], K: int, seed: int = 0) -> GaussianMixture:
    """
    Fits a K-component Gaussian mixture; K=1 reduces exactly to `fit_gaussian`.
    """
    if K == 1:
        return fit_gaussian(samples)
    model, _ = em_fit(samples, K, seed)
    return model


def neg_log_likelihood_field(
    s: Union[Slice, np.ndarray],
    model: GaussianMixture,
    roi: Optional[MaskLike] = None,
) -> LikelihoodField:
    """
    Per-pixel -ln Pr(I_p) under the model, with the probability floored at 1e-12
    and capped at 1, so values lie in [0, MAX_NLL].

    Pixels outside the ROI receive the floor's value, the maximal cost.
    """
    pixels = s.pixels if isinstance(s, Slice) else np.asarray(s, dtype=np.float64)
    values = np.clip(-model.log_density(pixels), 0.0, MAX_NLL)
    if roi is not None:
        values = np.where(as_bool(roi), values, MAX_NLL)
    return LikelihoodField(values)


def neg_log_probability(p: np.ndarray) -> np.ndarray:
    """-ln p with p floored at 1e-12, so values lie in [0, MAX_NLL]."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROBABILITY_FLOOR, 1.0)
    return np.minimum(-np.log(p), MAX_NLL)
