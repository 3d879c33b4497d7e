"""Euclidean distance maps used for prior refinement and the endocardial distance term."""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from src.utility.errors import DegenerateInputError
from src.volumecore.volume import MaskLike, as_bool

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class DistanceMap:
    """Signed Euclidean distance in pixels to a mask boundary (negative inside)."""
    values: np.ndarray

    @property
    def dims(self):
        return tuple(reversed(self.values.shape))


@dataclass(frozen=True)
class TruncatedDistance:
    """
    Distance to a region, capped at `cap`, for pixels outside the region.

    Pixels inside the region hold the sentinel `cap` and are flagged in `interior`;
    consumers turn them into the maximal penalty.
    """
    values: np.ndarray
    interior: np.ndarray
    cap: float


def boundary_pixels(m: MaskLike) -> np.ndarray:
    """Foreground pixels with at least one 4-neighbour in the background; the frame edge counts as foreground."""
    mask = as_bool(m)
    return mask & ~ndimage.binary_erosion(mask, structure=FOUR_CONNECTED, border_value=1)


def signed_distance(m: MaskLike) -> DistanceMap:
    """
    Exact signed Euclidean distance to the mask boundary.

    Boundary pixels (foreground pixels touching background) carry 0, interior pixels
    the negated distance to the nearest boundary pixel, background pixels the
    distance to the nearest foreground pixel, which is always a boundary pixel.

    Raises:
        DegenerateInputError: If the mask is all foreground or all background.
    """
    mask = as_bool(m)
    if mask.all() or not mask.any():
        raise DegenerateInputError("signed distance needs both foreground and background pixels")
    boundary = boundary_pixels(mask)
    outside = ndimage.distance_transform_edt(~mask)
    inside = ndimage.distance_transform_edt(~boundary)
    return DistanceMap(np.where(mask, -inside, outside))


def truncated_outside_distance(bp: MaskLike, cap: float) -> TruncatedDistance:
    """
    Distance from each pixel outside `bp` to the region, truncated at `cap`.

    Raises:
        DegenerateInputError: If `bp` is empty.
    """
    mask = as_bool(bp)
    if not mask.any():
        raise DegenerateInputError("truncated distance of an empty region")
    if cap <= 0:
        raise ValueError(f"distance cap must be positive, got {cap}")
    distance = ndimage.distance_transform_edt(~mask)
    values = np.where(mask, float(cap), np.minimum(distance, float(cap)))
    return TruncatedDistance(values, mask.copy(), float(cap))
