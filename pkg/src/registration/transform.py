"""
Affine transforms in (x, y[, z]) pixel coordinates and image resampling.

A transform maps moving-image coordinates to output (fixed) coordinates:

    t(p) = matrix @ (p - center) + center + translation

and `resample(moving, t)` evaluates output(p) = moving(t^-1(p)).
"""
import json
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from src.utility.errors import RegistrationError
from src.volumecore.volume import LabelMask, Slice, Volume

DET_EPSILON = 1e-9

Image = Union[np.ndarray, Volume, Slice, LabelMask]


@dataclass(frozen=True)
class AffineTransform:
    matrix: np.ndarray
    translation: np.ndarray
    center: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64).ravel()
        center = np.array(self.center, dtype=np.float64).ravel()
        d = translation.size
        if d not in (2, 3) or matrix.shape != (d, d) or center.size != d:
            raise ValueError(
                f"inconsistent affine shapes: matrix {matrix.shape}, translation {translation.shape}, center {center.shape}"
            )
        if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(translation)) and np.all(np.isfinite(center))):
            raise RegistrationError("affine parameters must be finite")
        if abs(np.linalg.det(matrix)) <= DET_EPSILON:
            raise RegistrationError(f"singular affine matrix (det={np.linalg.det(matrix):.3g})")
        for name, value in (('matrix', matrix), ('translation', translation), ('center', center)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def identity(cls, dim: int, center: Optional[Sequence[float]] = None) -> 'AffineTransform':
        center = np.zeros(dim) if center is None else np.asarray(center, dtype=np.float64)
        return cls(np.eye(dim), np.zeros(dim), center)

    @classmethod
    def from_translation(cls, shift: Sequence[float], center: Optional[Sequence[float]] = None) -> 'AffineTransform':
        shift = np.asarray(shift, dtype=np.float64)
        base = cls.identity(shift.size, center)
        return cls(base.matrix, shift, base.center)

    @property
    def dim(self) -> int:
        return self.translation.size

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Maps (N, d) points (or a single d-vector) through the transform."""
        p = np.asarray(points, dtype=np.float64)
        return (p - self.center) @ self.matrix.T + self.center + self.translation

    def inverse(self) -> 'AffineTransform':
        inv = np.linalg.inv(self.matrix)
        return AffineTransform(inv, -inv @ self.translation, self.center)

    def compose(self, other: 'AffineTransform') -> 'AffineTransform':
        """
        Transform equal to applying `other` first, then `self`.

        The two centers may differ; the result is expressed about `self.center`.
        """
        matrix = self.matrix @ other.matrix
        translation = self.apply(other.apply(self.center)) - self.center
        return AffineTransform(matrix, translation, self.center)

    def homogeneous(self) -> np.ndarray:
        d = self.dim
        h = np.eye(d + 1)
        h[:d, :d] = self.matrix
        h[:d, d] = self.center + self.translation - self.matrix @ self.center
        return h

    def rescaled(self, factors: Sequence[float]) -> 'AffineTransform':
        """
        Expresses the transform on a grid resampled by `factors` per axis, where a
        coarse pixel index x' relates to the fine one by x' = f * (x + 0.5) - 0.5.
        """
        f = np.asarray(factors, dtype=np.float64)
        s = np.diag(f)
        s_inv = np.diag(1.0 / f)
        return AffineTransform(s @ self.matrix @ s_inv, f * self.translation, f * (self.center + 0.5) - 0.5)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dim': self.dim,
            'matrix': self.matrix.tolist(),
            'translation': self.translation.tolist(),
            'center': self.center.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AffineTransform':
        transform = cls(np.asarray(data['matrix']), np.asarray(data['translation']), np.asarray(data['center']))
        if int(data.get('dim', transform.dim)) != transform.dim:
            raise ValueError(f"dim {data['dim']} does not match matrix of size {transform.dim}")
        return transform

    @classmethod
    def from_json(cls, text: str) -> 'AffineTransform':
        return cls.from_dict(json.loads(text))


PARAMETERIZATIONS = ('affine', 'similarity')


def parameter_count(dim: int, parameterization: str = 'affine') -> int:
    if parameterization == 'affine':
        return dim + dim * dim
    if parameterization == 'similarity':
        return dim + (1 if dim == 2 else 3) + 1
    raise ValueError(f"unknown parameterization '{parameterization}', expected one of {PARAMETERIZATIONS}")


def from_params(init: AffineTransform, params: Sequence[float], parameterization: str = 'affine') -> AffineTransform:
    """
    Builds a transform as a perturbation of `init`.

    affine:     [dt (d), dA (d*d, row-major)]   -> matrix = A0 + dA, translation = t0 + dt
    similarity: [dt (d), rotation (1 or 3), log-scale] -> matrix = s * R @ A0
    """
    p = np.asarray(params, dtype=np.float64)
    d = init.dim
    if p.size != parameter_count(d, parameterization):
        raise ValueError(f"expected {parameter_count(d, parameterization)} parameters, got {p.size}")
    translation = init.translation + p[:d]
    if parameterization == 'affine':
        matrix = init.matrix + p[d:].reshape(d, d)
    else:
        if d == 2:
            angle = p[d]
            rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        else:
            rotation = Rotation.from_rotvec(p[d:d + 3]).as_matrix()
        matrix = np.exp(p[-1]) * rotation @ init.matrix
    return AffineTransform(matrix, translation, init.center)


def param_steps(dim: int, translation_step: float, linear_step: float, parameterization: str = 'affine') -> np.ndarray:
    """Initial simplex step per parameter, in `from_params` ordering."""
    n_linear = parameter_count(dim, parameterization) - dim
    return np.concatenate([np.full(dim, translation_step), np.full(n_linear, linear_step)])


def as_array(image: Image) -> np.ndarray:
    if isinstance(image, Volume):
        return np.asarray(image.voxels, dtype=np.float64)
    if isinstance(image, Slice):
        return np.asarray(image.pixels, dtype=np.float64)
    if isinstance(image, LabelMask):
        return np.asarray(image.labels, dtype=np.float64)
    return np.asarray(image, dtype=np.float64)


def resample_array(
    moving: np.ndarray,
    t: AffineTransform,
    target_shape: Optional[Tuple[int, ...]] = None,
    order: int = 1,
) -> np.ndarray:
    """
    Resamples an index-ordered array so that output(p) = moving(t^-1(p)).

    Out-of-bounds samples are 0. `order` 1 is (bi/tri)linear, 0 nearest-neighbour.
    """
    moving = np.asarray(moving, dtype=np.float64)
    if moving.ndim != t.dim:
        raise ValueError(f"{t.dim}D transform cannot resample a {moving.ndim}D image")
    target_shape = tuple(target_shape) if target_shape is not None else moving.shape
    inv = np.linalg.inv(t.matrix)
    # index order is the reverse of (x, y, z)
    perm = np.eye(t.dim)[::-1]
    matrix = perm @ inv @ perm
    offset = perm @ (t.center - inv @ (t.center + t.translation))
    return ndimage.affine_transform(
        moving, matrix, offset=offset, output_shape=target_shape, order=order, mode='constant', cval=0.0
    )


def resample(
    moving: Image,
    t: AffineTransform,
    target_dims: Optional[Sequence[int]] = None,
    order: Optional[int] = None,
) -> Image:
    """
    Resamples a volume, slice, label mask or array through an affine transform.

    Intensity images use linear interpolation and label masks nearest-neighbour unless
    `order` says otherwise. The output has the input's type.

    Args:
        moving: Image to resample.
        t (AffineTransform): Moving-to-output transform; must be invertible.
        target_dims: Output dims in (nx, ny[, nz]) order; defaults to the input's.
        order (int, optional): Spline order override.

    Raises:
        RegistrationError: If the transform is singular.
    """
    if abs(np.linalg.det(t.matrix)) <= DET_EPSILON:
        raise RegistrationError("cannot resample through a singular transform")
    array = as_array(moving)
    shape = tuple(reversed(tuple(target_dims))) if target_dims is not None else array.shape
    if order is None:
        order = 0 if isinstance(moving, LabelMask) else 1
    out = resample_array(array, t, shape, order)

    if isinstance(moving, Volume):
        return Volume(out.astype(np.float32), moving.spacing, moving.frame_index)
    if isinstance(moving, Slice):
        return Slice(out, z_index=moving.z_index)
    if isinstance(moving, LabelMask):
        return LabelMask((out >= 0.5).astype(np.uint8), moving.spacing)
    return out


def grid_center(shape: Sequence[int]) -> np.ndarray:
    """Geometric center of an index-ordered grid, in (x, y[, z]) order."""
    return (np.asarray(shape[::-1], dtype=np.float64) - 1.0) / 2.0


def parameter_distance(
    a: AffineTransform,
    b: AffineTransform,
    extent: Optional[Sequence[int]] = None,
) -> float:
    """
    L2 norm of the difference of the affine parameter vectors [translation, matrix].

    With `extent` (grid dims in (x, y[, z]) order) translations are measured in
    half-extents of the grid, i.e. in normalized coordinates spanning [-1, 1], so
    that they are on the scale of the matrix entries.
    """
    if a.dim != b.dim:
        raise ValueError(f"cannot compare {a.dim}D and {b.dim}D transforms")
    shift = a.translation - b.translation
    if extent is not None:
        half = np.maximum(np.asarray(extent, dtype=np.float64) - 1.0, 1.0) / 2.0
        if half.size != a.dim:
            raise ValueError(f"extent {tuple(extent)} does not fit {a.dim}D transforms")
        shift = shift / half
    delta = np.concatenate([shift, (a.matrix - b.matrix).ravel()])
    return float(np.linalg.norm(delta))
