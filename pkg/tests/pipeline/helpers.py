import numpy as np
from scipy import ndimage

from src.atlas.atlas import ProbabilityMap


def smoothed_prior(labels: np.ndarray, sigma: float = 1.0) -> ProbabilityMap:
    """In-plane blurred copy of a label volume, peak-normalized per slice."""
    values = ndimage.gaussian_filter(np.asarray(labels, dtype=np.float64), (0, sigma, sigma))
    peaks = values.max(axis=(1, 2), keepdims=True)
    return ProbabilityMap.clamped(np.divide(values, peaks, out=np.zeros_like(values), where=peaks > 0))


def dice(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    return 2.0 * np.sum(a & b) / max(int(a.sum() + b.sum()), 1)
