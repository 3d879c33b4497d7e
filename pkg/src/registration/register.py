"""Intensity-based affine registration: mean-SSD metric over a two-level pyramid."""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from skimage.transform import downscale_local_mean

from src.registration.optimizer import F_TOLERANCE, MAX_ITERATIONS, nelder_mead
from src.registration.transform import (
    AffineTransform,
    Image,
    as_array,
    from_params,
    grid_center,
    param_steps,
    parameter_count,
    resample_array,
)
from src.utility.errors import RegistrationError
from src.utility.logger import get_logger

logger = get_logger(__name__)

SINGULAR_PENALTY = 1e12


@dataclass(frozen=True)
class RegistrationSettings:
    """Optimizer settings; defaults mirror `pipeline/config.yaml`."""
    translation_step: float = 2.0
    linear_step: float = 0.05
    parameterization: str = 'affine'
    pyramid: Tuple[int, ...] = (2, 1)
    f_tol: float = F_TOLERANCE
    max_iterations: int = MAX_ITERATIONS


@dataclass(frozen=True)
class RegistrationResult:
    transform: AffineTransform
    final_metric: float
    iterations: int
    converged: bool
    level_metrics: Tuple[float, ...] = field(default=())


def ssd(fixed: Image, moving: Image, t: AffineTransform) -> float:
    """
    Mean squared intensity difference between `fixed` and `moving` resampled onto the
    fixed grid through `t`.
    """
    fixed_array = as_array(fixed)
    warped = resample_array(as_array(moving), t, fixed_array.shape, order=1)
    return float(np.mean((fixed_array - warped) ** 2))


def _level_factors(ndim: int, shrink: int) -> Tuple[Tuple[int, ...], np.ndarray]:
    """Block sizes (index order) and the matching (x, y[, z]) scale factors; 3D keeps z."""
    blocks = [shrink] * ndim
    if ndim == 3:
        blocks[0] = 1
    factors = 1.0 / np.asarray(blocks[::-1], dtype=np.float64)
    return tuple(blocks), factors


def _downsample(image: np.ndarray, blocks: Tuple[int, ...]) -> np.ndarray:
    if all(b == 1 for b in blocks):
        return image
    return downscale_local_mean(image, blocks)


def default_init(fixed_shape: Sequence[int], moving_shape: Sequence[int]) -> AffineTransform:
    """Identity about the moving grid center, shifted so the two grid centers coincide."""
    moving_center = grid_center(moving_shape)
    shift = grid_center(fixed_shape) - moving_center
    return AffineTransform.from_translation(shift, moving_center)


def register_affine(
    fixed: Image,
    moving: Image,
    init: Optional[AffineTransform] = None,
    settings: Optional[RegistrationSettings] = None,
    mode: Optional[str] = None,
) -> RegistrationResult:
    """
    Finds the affine transform t minimizing ssd(fixed, moving, t).

    Parameters are perturbations of `init` optimized by Nelder-Mead, first on a
    half-resolution level, then at full resolution.

    Args:
        fixed: Target image.
        moving: Image mapped onto the fixed grid.
        init (AffineTransform, optional): Starting transform; defaults to grid-center alignment.
        settings (RegistrationSettings, optional): Optimizer settings.
        mode (str, optional): 'volume3d' or 'slice2d'; inferred from the image rank if omitted.

    Returns:
        RegistrationResult: Best transform, its full-resolution SSD, total iterations
        and whether every level converged.

    Raises:
        RegistrationError: On dimension mismatch or optimizer abort.
    """
    settings = settings or RegistrationSettings()
    fixed_array = as_array(fixed)
    moving_array = as_array(moving)
    if fixed_array.ndim != moving_array.ndim or fixed_array.ndim not in (2, 3):
        raise RegistrationError(f"cannot register {moving_array.ndim}D onto {fixed_array.ndim}D")
    expected = {'volume3d': 3, 'slice2d': 2}
    if mode is not None and expected.get(mode) != fixed_array.ndim:
        raise RegistrationError(f"mode '{mode}' does not fit {fixed_array.ndim}D images")

    dim = fixed_array.ndim
    current = init or default_init(fixed_array.shape, moving_array.shape)
    if current.dim != dim:
        raise RegistrationError(f"{current.dim}D init transform for {dim}D images")

    n_params = parameter_count(dim, settings.parameterization)
    total_iterations = 0
    converged = True
    level_metrics: List[float] = []
    metric = float('nan')

    for shrink in settings.pyramid:
        blocks, factors = _level_factors(dim, shrink)
        fixed_level = _downsample(fixed_array, blocks)
        moving_level = _downsample(moving_array, blocks)
        if min(fixed_level.shape) < 2 or min(moving_level.shape) < 2:
            continue
        level_init = current.rescaled(factors)
        steps = param_steps(dim, settings.translation_step, settings.linear_step, settings.parameterization)

        def objective(params: np.ndarray) -> float:
            try:
                t = from_params(level_init, params, settings.parameterization)
            except RegistrationError:
                return SINGULAR_PENALTY
            warped = resample_array(moving_level, t, fixed_level.shape, order=1)
            return float(np.mean((fixed_level - warped) ** 2))

        result = nelder_mead(objective, np.zeros(n_params), steps, settings.f_tol, settings.max_iterations)
        best_level = from_params(level_init, result.x, settings.parameterization)
        current = best_level.rescaled(1.0 / factors)
        total_iterations += result.iterations
        converged = converged and result.converged
        metric = result.fun
        level_metrics.append(result.fun)
        logger.debug(f"registration level 1/{shrink}: ssd={result.fun:.6g} after {result.iterations} iterations")

    if not level_metrics or settings.pyramid[-1] != 1:
        metric = ssd(fixed_array, moving_array, current)
    return RegistrationResult(current, float(metric), total_iterations, converged, tuple(level_metrics))


def landmark_error(
    recovered: AffineTransform,
    applied: AffineTransform,
    points: np.ndarray,
) -> float:
    """
    Mean distance between landmarks and their round trip through `applied` then
    `recovered`; zero when `recovered` is the exact inverse of `applied`.
    """
    points = np.asarray(points, dtype=np.float64)
    round_trip = recovered.apply(applied.apply(points))
    return float(np.mean(np.linalg.norm(round_trip - points, axis=1)))
