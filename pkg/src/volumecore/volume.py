"""
Scalar-grid data model: volumes, slices and binary label masks.

Arrays are stored in numpy index order, i.e. (nz, ny, nx) for volumes and (ny, nx)
for slices, which is x-fastest in C order. `dims` always reports (nx, ny[, nz]).
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from src.utility.errors import InvalidVolumeError


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Volume:
    """
    A 3D scalar grid with millimetre spacing and an optional cardiac phase tag.

    Attributes:
        voxels (np.ndarray): float32 intensities shaped (nz, ny, nx).
        spacing (Tuple[float, float, float]): (sx, sy, sz) in millimetres.
        frame_index (int, optional): Cardiac phase index of this volume.
    """
    voxels: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    frame_index: Optional[int] = None

    def __post_init__(self) -> None:
        voxels = np.array(self.voxels, dtype=np.float32, copy=True)
        if voxels.ndim != 3:
            raise InvalidVolumeError(f"volume voxels must be 3D, got shape {voxels.shape}")
        if min(voxels.shape) <= 0:
            raise InvalidVolumeError(f"volume dims must be positive, got {voxels.shape[::-1]}")
        if not np.all(np.isfinite(voxels)):
            raise InvalidVolumeError("volume contains NaN or Inf intensities")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 or not np.isfinite(s) for s in spacing):
            raise InvalidVolumeError(f"spacing must be three positive reals, got {self.spacing}")
        if self.frame_index is not None and int(self.frame_index) < 0:
            raise InvalidVolumeError(f"frame_index must be >= 0, got {self.frame_index}")
        object.__setattr__(self, 'voxels', _frozen(voxels))
        object.__setattr__(self, 'spacing', spacing)

    @classmethod
    def from_flat(
        cls,
        dims: Tuple[int, int, int],
        values: np.ndarray,
        spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0),
        frame_index: Optional[int] = None,
    ) -> 'Volume':
        """Builds a volume from an x-fastest flat list of nx*ny*nz values."""
        nx, ny, nz = (int(d) for d in dims)
        values = np.asarray(values, dtype=np.float32)
        if values.size != nx * ny * nz:
            raise InvalidVolumeError(f"expected {nx * ny * nz} voxels for dims {dims}, got {values.size}")
        return cls(values.reshape(nz, ny, nx), spacing, frame_index)

    @property
    def dims(self) -> Tuple[int, int, int]:
        nz, ny, nx = self.voxels.shape
        return nx, ny, nz

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.voxels.shape

    def flat(self) -> np.ndarray:
        return self.voxels.reshape(-1)

    def with_voxels(self, voxels: np.ndarray) -> 'Volume':
        return Volume(voxels, self.spacing, self.frame_index)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.frame_index == other.frame_index
            and self.voxels.shape == other.voxels.shape
            and self.voxels.tobytes() == other.voxels.tobytes()
        )


@dataclass(frozen=True)
class Slice:
    """One z-plane of a volume; pixels shaped (ny, nx)."""
    pixels: np.ndarray
    z_index: int = 0

    def __post_init__(self) -> None:
        pixels = np.array(self.pixels, dtype=np.float64, copy=True)
        if pixels.ndim != 2 or min(pixels.shape) <= 0:
            raise InvalidVolumeError(f"slice pixels must be a non-empty 2D grid, got shape {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise InvalidVolumeError("slice contains NaN or Inf intensities")
        object.__setattr__(self, 'pixels', _frozen(pixels))

    @property
    def dims(self) -> Tuple[int, int]:
        ny, nx = self.pixels.shape
        return nx, ny


@dataclass(frozen=True)
class LabelMask:
    """
    Binary labeling f of a slice or volume (1 = foreground class).

    `labels` is stored as uint8 in index order; `array` gives the boolean view.
    """
    labels: np.ndarray
    spacing: Tuple[float, float, float] = field(default=(1.0, 1.0, 1.0))

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim not in (2, 3) or min(labels.shape) <= 0:
            raise InvalidVolumeError(f"label mask must be a non-empty 2D or 3D grid, got shape {labels.shape}")
        if labels.dtype != bool:
            if not np.all(np.isin(labels, (0, 1))):
                raise InvalidVolumeError("label mask values must be 0 or 1")
        object.__setattr__(self, 'labels', _frozen(labels.astype(np.uint8)))
        object.__setattr__(self, 'spacing', tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(reversed(self.labels.shape))

    @property
    def array(self) -> np.ndarray:
        return self.labels.astype(bool)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.labels.shape == other.labels.shape and bool(np.array_equal(self.labels, other.labels))


MaskLike = Union[LabelMask, np.ndarray]


def as_bool(mask: MaskLike) -> np.ndarray:
    """Boolean array view of a LabelMask or array-like mask."""
    if isinstance(mask, LabelMask):
        return mask.array
    return np.asarray(mask).astype(bool)


def extract_slice(v: Volume, z: int) -> Slice:
    """
    Returns the z-plane of a volume.

    Raises:
        IndexError: If z is outside [0, nz).
    """
    nz = v.shape[0]
    if not 0 <= z < nz:
        raise IndexError(f"slice index {z} out of range for volume with {nz} slices")
    return Slice(v.voxels[z], z_index=z)


def replace_slice(v: Volume, z: int, s: Slice) -> Volume:
    """
    Returns a copy of `v` whose z-plane is replaced by `s`.

    Raises:
        IndexError: If z is outside [0, nz).
        InvalidVolumeError: If the slice grid does not match the volume plane.
    """
    nz = v.shape[0]
    if not 0 <= z < nz:
        raise IndexError(f"slice index {z} out of range for volume with {nz} slices")
    if s.pixels.shape != v.shape[1:]:
        raise InvalidVolumeError(f"slice shape {s.pixels.shape} does not match volume plane {v.shape[1:]}")
    voxels = np.array(v.voxels, copy=True)
    voxels[z] = s.pixels
    return v.with_voxels(voxels)
