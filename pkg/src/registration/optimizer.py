"""Nelder-Mead downhill simplex with fixed coefficients and an f-spread stopping rule."""
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from src.utility.errors import OptimizerAbortError
from src.utility.logger import get_logger

logger = get_logger(__name__)

F_TOLERANCE = 1e-8
MAX_ITERATIONS = 2000


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    scale: Sequence[float],
    f_tol: float = F_TOLERANCE,
    max_iterations: int = MAX_ITERATIONS,
) -> SimplexResult:
    """
    Minimizes `objective` from an axis-aligned initial simplex around x0.

    Reflection, expansion, contraction and shrink coefficients are 1, 2, 0.5 and 0.5.
    The run stops once the objective spread across the simplex falls below `f_tol`
    or after `max_iterations`; the best vertex is returned, so the result is never
    worse than the best initial vertex.

    Args:
        objective: Maps a parameter vector to a scalar.
        x0: Initial parameters.
        scale: Per-parameter simplex step.
        f_tol (float): Objective-spread tolerance.
        max_iterations (int): Iteration cap.

    Returns:
        SimplexResult: Best vertex, its value, iteration count and convergence flag.

    Raises:
        OptimizerAbortError: If the objective returns a non-finite value.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), x0.shape)
    simplex = np.vstack([x0, x0 + np.diag(scale)])

    def guarded(x: np.ndarray) -> float:
        value = float(objective(x))
        if not np.isfinite(value):
            raise OptimizerAbortError(f"non-finite objective value {value} at parameters {np.array2string(x, precision=6)}")
        return value

    result = minimize(
        guarded,
        x0,
        method='Nelder-Mead',
        options={
            'initial_simplex': simplex,
            'xatol': np.inf,
            'fatol': f_tol,
            'maxiter': max_iterations,
            'maxfev': max(10 * max_iterations * (x0.size + 1), 1000),
            'adaptive': False,
        },
    )
    converged = bool(result.status == 0)
    if not converged:
        logger.debug(f"simplex stopped without converging: {result.message}")
    return SimplexResult(np.asarray(result.x, dtype=np.float64), float(result.fun), int(result.nit), converged)
