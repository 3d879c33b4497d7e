"""Per-slice intensity normalization and xy-ROI cropping."""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.utility.errors import DegenerateInputError, InvalidVolumeError
from src.utility.logger import get_logger
from src.volumecore.volume import LabelMask, MaskLike, Slice, Volume, as_bool, extract_slice

logger = get_logger(__name__)

NORMALIZED_MAX = 255.0


def normalize_slice(s: Slice) -> Slice:
    """
    Affinely rescales a slice so that its minimum maps to 0 and its maximum to 255.

    The output stays real-valued; it is not quantized to integers.

    Args:
        s (Slice): Input slice with at least two distinct intensities.

    Returns:
        Slice: The rescaled slice, same z_index.

    Raises:
        DegenerateInputError: If the slice is constant.
    """
    low = float(s.pixels.min())
    high = float(s.pixels.max())
    if high <= low:
        raise DegenerateInputError(f"slice {s.z_index} is constant ({low}); cannot normalize")
    pixels = (s.pixels - low) * (NORMALIZED_MAX / (high - low))
    np.clip(pixels, 0.0, NORMALIZED_MAX, out=pixels)
    return Slice(pixels, z_index=s.z_index)


def normalize_volume(v: Volume) -> Tuple[Volume, List[int]]:
    """
    Normalizes every slice of a volume to 0-255.

    Constant slices are left untouched and reported.

    Returns:
        Tuple[Volume, List[int]]: The normalized volume and the skipped slice indices.
    """
    voxels = np.array(v.voxels, dtype=np.float32, copy=True)
    skipped: List[int] = []
    for z in range(v.shape[0]):
        try:
            voxels[z] = normalize_slice(extract_slice(v, z)).pixels
        except DegenerateInputError as e:
            logger.warning(f"skipping normalization: {e}")
            skipped.append(z)
    return v.with_voxels(voxels), skipped


@dataclass(frozen=True)
class RoiBox:
    """Half-open rectangle [x0, x1) x [y0, y1) in pixel coordinates."""
    x0: int
    x1: int
    y0: int
    y1: int

    def __post_init__(self) -> None:
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise InvalidVolumeError(f"empty ROI {self}")

    @classmethod
    def full(cls, nx: int, ny: int) -> 'RoiBox':
        return cls(0, nx, 0, ny)

    @property
    def index(self) -> Tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def as_list(self) -> List[int]:
        return [self.x0, self.x1, self.y0, self.y1]


def crop_volume(v: Volume, roi: RoiBox) -> Volume:
    """Restricts every slice of a volume to the xy ROI."""
    nx, ny, _ = v.dims
    if roi.x0 < 0 or roi.y0 < 0 or roi.x1 > nx or roi.y1 > ny:
        raise InvalidVolumeError(f"ROI {roi} exceeds volume plane {nx}x{ny}")
    rows, cols = roi.index
    return v.with_voxels(v.voxels[:, rows, cols])


def uncrop_mask(mask: MaskLike, roi: RoiBox, full_dims: Tuple[int, int, int]) -> LabelMask:
    """Pastes a cropped 3D mask back into an all-background frame of `full_dims`."""
    nx, ny, nz = full_dims
    cropped = as_bool(mask)
    full = np.zeros((nz, ny, nx), dtype=np.uint8)
    rows, cols = roi.index
    full[:, rows, cols] = cropped
    return LabelMask(full)
