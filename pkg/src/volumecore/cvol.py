"""
CVOL volume format: `<name>.json` sidecar plus `<name>.raw` little-endian payload.

Cine sequences are directories of `frame_000`, `frame_001`, ... volumes.
"""
import os
import re
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from src.utility.errors import InvalidVolumeError, VolumeFormatError, VolumeIntegrityError
from src.utility.logger import get_logger
from src.volumecore.volume import LabelMask, Volume

logger = get_logger(__name__)

DTYPES = {'f32': np.dtype('<f4'), 'u8': np.dtype('u1')}
FRAME_PATTERN = re.compile(r'^frame_(\d{3,})\.json$')


class CvolHeader(BaseModel):
    dims: Tuple[int, int, int]
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    dtype: Literal['f32', 'u8']
    order: Literal['x-fastest'] = 'x-fastest'
    endian: Literal['little'] = 'little'
    frame_index: Optional[int] = Field(default=None, ge=0)

    @field_validator('dims')
    @classmethod
    def _positive_dims(cls, dims: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(d <= 0 for d in dims):
            raise ValueError(f'dims must be positive, got {dims}')
        return dims

    @field_validator('spacing')
    @classmethod
    def _positive_spacing(cls, spacing: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(s <= 0 for s in spacing):
            raise ValueError(f'spacing must be positive, got {spacing}')
        return spacing


def _paths(path: str) -> Tuple[str, str]:
    """Accepts `name`, `name.json` or `name.raw` and returns both file paths."""
    base, ext = os.path.splitext(path)
    if ext not in ('.json', '.raw'):
        base = path
    return base + '.json', base + '.raw'


def _read(path: str) -> Tuple[CvolHeader, np.ndarray]:
    json_path, raw_path = _paths(path)
    try:
        with open(json_path, 'r', encoding='utf-8') as file:
            header = CvolHeader.model_validate_json(file.read())
    except FileNotFoundError:
        raise VolumeFormatError(f"CVOL sidecar not found: {json_path}")
    except ValidationError as e:
        raise VolumeFormatError(f"corrupt CVOL sidecar {json_path}: {e}")

    try:
        with open(raw_path, 'rb') as file:
            payload = file.read()
    except FileNotFoundError:
        raise VolumeIntegrityError(f"CVOL payload not found: {raw_path}")

    dtype = DTYPES[header.dtype]
    nx, ny, nz = header.dims
    expected = nx * ny * nz * dtype.itemsize
    if len(payload) != expected:
        raise VolumeIntegrityError(
            f"{raw_path}: payload holds {len(payload)} bytes, sidecar dims {header.dims} need {expected}"
        )
    values = np.frombuffer(payload, dtype=dtype).reshape(nz, ny, nx)
    return header, values


def _write(path: str, values: np.ndarray, dtype_name: str, spacing, frame_index: Optional[int]) -> None:
    json_path, raw_path = _paths(path)
    nz, ny, nx = values.shape
    header = CvolHeader(
        dims=(nx, ny, nz), spacing=tuple(spacing), dtype=dtype_name, frame_index=frame_index
    )
    parent = os.path.dirname(os.path.abspath(json_path))
    try:
        os.makedirs(parent, exist_ok=True)
        with open(raw_path, 'wb') as file:
            file.write(np.ascontiguousarray(values, dtype=DTYPES[dtype_name]).tobytes())
        with open(json_path, 'w', encoding='utf-8') as file:
            file.write(header.model_dump_json(exclude_none=True))
    except OSError as e:
        raise OSError(f"failed to write CVOL {json_path}: {e}") from e


def load_volume(path: str) -> Volume:
    """
    Reads a float32 CVOL volume.

    Args:
        path (str): Volume path with or without the .json/.raw extension.

    Returns:
        Volume: The decoded volume.

    Raises:
        VolumeFormatError: Missing or corrupt sidecar, or a non-f32 payload.
        VolumeIntegrityError: Payload length does not match the sidecar dims.
    """
    header, values = _read(path)
    if header.dtype != 'f32':
        raise VolumeFormatError(f"{path}: expected dtype f32, found {header.dtype}")
    return Volume(values, header.spacing, header.frame_index)


def save_volume(v: Volume, path: str) -> None:
    """
    Writes a volume as float32 CVOL so that `load_volume` returns it bit-exactly.

    Raises:
        InvalidVolumeError: If the volume holds non-finite values or empty dims.
        OSError: On write failure.
    """
    voxels = np.asarray(v.voxels)
    if voxels.size == 0 or min(voxels.shape) == 0:
        raise InvalidVolumeError("cannot save a volume with an empty axis")
    if not np.all(np.isfinite(voxels)):
        raise InvalidVolumeError("cannot save a volume with NaN or Inf voxels")
    _write(path, voxels, 'f32', v.spacing, v.frame_index)


def load_mask(path: str) -> LabelMask:
    """Reads a u8 CVOL label volume."""
    header, values = _read(path)
    if header.dtype != 'u8':
        raise VolumeFormatError(f"{path}: expected dtype u8, found {header.dtype}")
    try:
        return LabelMask(np.array(values), header.spacing)
    except InvalidVolumeError as e:
        raise VolumeFormatError(f"{path}: {e}")


def save_mask(mask: Union[LabelMask, np.ndarray], path: str, spacing=None) -> None:
    """Writes a 3D (or 2D, stored as nz=1) label mask as u8 CVOL."""
    if not isinstance(mask, LabelMask):
        mask = LabelMask(np.asarray(mask).astype(np.uint8), spacing or (1.0, 1.0, 1.0))
    labels = mask.labels if mask.labels.ndim == 3 else mask.labels[np.newaxis]
    _write(path, labels, 'u8', spacing or mask.spacing, None)


def frame_name(index: int) -> str:
    return f'frame_{index:03d}'


def load_cine(directory: str) -> List[Volume]:
    """
    Loads every `frame_NNN` volume of a cine directory in frame order.

    Raises:
        VolumeFormatError: If the directory holds no frames.
    """
    if not os.path.isdir(directory):
        raise VolumeFormatError(f"cine directory not found: {directory}")
    indices = sorted(
        int(match.group(1)) for match in map(FRAME_PATTERN.match, os.listdir(directory)) if match
    )
    if not indices:
        raise VolumeFormatError(f"no frame_NNN volumes in {directory}")
    frames = []
    for index in indices:
        volume = load_volume(os.path.join(directory, frame_name(index)))
        if volume.frame_index is None:
            volume = Volume(volume.voxels, volume.spacing, index)
        frames.append(volume)
    logger.debug(f"loaded {len(frames)} frames from {directory}")
    return frames


def save_cine(frames: List[Volume], directory: str) -> None:
    """Writes frames as `frame_000`, `frame_001`, ... into `directory`."""
    os.makedirs(directory, exist_ok=True)
    for index, frame in enumerate(frames):
        tagged = frame if frame.frame_index == index else Volume(frame.voxels, frame.spacing, index)
        save_volume(tagged, os.path.join(directory, frame_name(index)))
