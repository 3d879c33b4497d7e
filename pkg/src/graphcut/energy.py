"""
Binary labeling energy on a 4-connected pixel grid.

    E(f) = sum_p D_p(f_p) + sum_{p,q} V_pq(f_p, f_q)

`source_cost` is paid by pixels labeled foreground (source side, BP or myocardium),
`sink_cost` by pixels labeled background. Pairwise weights are charged when the
edge is cut, i.e. when its two pixels take different labels.
"""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from src.volumecore.volume import MaskLike, as_bool

FIXED_POINT_SCALE = float(2 ** 20)

ArrayLike = Union[np.ndarray, float]


def data_term(tau: int, nll_intensity: ArrayLike, nll_prior: ArrayLike) -> np.ndarray:
    """
    exp(-tau) * nll_intensity + (1 - exp(-tau)) * nll_prior, pointwise.

    The intensity term dominates early iterations and fades as tau grows.
    """
    if tau < 1:
        raise ValueError(f"iteration number tau must be >= 1, got {tau}")
    weight = np.exp(-float(tau))
    return weight * np.asarray(nll_intensity, dtype=np.float64) + (1.0 - weight) * np.asarray(nll_prior, dtype=np.float64)


def smoothness_term(tau: int, Ip: ArrayLike, Iq: ArrayLike) -> np.ndarray:
    """Contrast-sensitive edge weight tau * exp(-|Ip - Iq| / tau)."""
    if tau < 1:
        raise ValueError(f"iteration number tau must be >= 1, got {tau}")
    diff = np.abs(np.asarray(Ip, dtype=np.float64) - np.asarray(Iq, dtype=np.float64))
    return float(tau) * np.exp(-diff / float(tau))


def grid_pairwise(image: np.ndarray, tau: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Edge weights for east and south neighbours.

    Returns:
        Tuple[np.ndarray, np.ndarray]: `right` shaped (ny, nx-1) for (p, p+x) edges and
        `down` shaped (ny-1, nx) for (p, p+y) edges.
    """
    image = np.asarray(image, dtype=np.float64)
    right = smoothness_term(tau, image[:, :-1], image[:, 1:])
    down = smoothness_term(tau, image[:-1, :], image[1:, :])
    return right, down


@dataclass(frozen=True)
class EnergyField:
    source_cost: np.ndarray
    sink_cost: np.ndarray
    right: np.ndarray
    down: np.ndarray

    def __post_init__(self) -> None:
        source = np.asarray(self.source_cost, dtype=np.float64)
        sink = np.asarray(self.sink_cost, dtype=np.float64)
        if source.ndim != 2 or source.shape != sink.shape:
            raise ValueError(f"cost grids must be matching 2D arrays, got {source.shape} and {sink.shape}")
        ny, nx = source.shape
        right = np.asarray(self.right, dtype=np.float64).reshape(ny, max(nx - 1, 0))
        down = np.asarray(self.down, dtype=np.float64).reshape(max(ny - 1, 0), nx)
        for name, value in (('source_cost', source), ('sink_cost', sink), ('right', right), ('down', down)):
            if not np.all(np.isfinite(value)) or np.any(value < 0):
                raise ValueError(f"{name} must be finite and non-negative")
            value.setflags(write=False)
        object.__setattr__(self, 'source_cost', source)
        object.__setattr__(self, 'sink_cost', sink)
        object.__setattr__(self, 'right', right)
        object.__setattr__(self, 'down', down)

    @classmethod
    def from_image(cls, source_cost: np.ndarray, sink_cost: np.ndarray, image: np.ndarray, tau: int) -> 'EnergyField':
        right, down = grid_pairwise(image, tau)
        return cls(source_cost, sink_cost, right, down)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.source_cost.shape

    @property
    def dims(self) -> Tuple[int, int]:
        ny, nx = self.shape
        return nx, ny

    def quantized(self, scale: float = FIXED_POINT_SCALE) -> 'EnergyField':
        """The field rounded to multiples of 1/scale: the energy the solver minimizes exactly."""
        return EnergyField(
            np.round(self.source_cost * scale) / scale,
            np.round(self.sink_cost * scale) / scale,
            np.round(self.right * scale) / scale,
            np.round(self.down * scale) / scale,
        )


def energy_of(e: EnergyField, labeling: MaskLike) -> float:
    """Evaluates E(f) for a foreground labeling of the field's grid."""
    f = as_bool(labeling)
    if f.shape != e.shape:
        raise ValueError(f"labeling shape {f.shape} does not match energy grid {e.shape}")
    data = float(np.sum(e.source_cost[f]) + np.sum(e.sink_cost[~f]))
    cut_right = f[:, :-1] != f[:, 1:]
    cut_down = f[:-1, :] != f[1:, :]
    pairwise = float(np.sum(e.right[cut_right]) + np.sum(e.down[cut_down]))
    return data + pairwise
