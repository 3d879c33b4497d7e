"""
Exact binary min-cut on the 4-connected grid (Boykov-Kolmogorov max-flow).

Capacities are converted to fixed point (x 2**20, rounded) and carried as
integer-valued doubles, so the flow computation is exact.
"""
from dataclasses import dataclass
from typing import Optional

import maxflow
import numpy as np

from src.graphcut.energy import FIXED_POINT_SCALE, EnergyField
from src.volumecore.volume import MaskLike, as_bool

RIGHT = np.array([[0, 0, 0], [0, 0, 1], [0, 0, 0]])
DOWN = np.array([[0, 0, 0], [0, 0, 0], [0, 1, 0]])


@dataclass(frozen=True)
class CutResult:
    labeling: np.ndarray
    flow: float


def _fixed(values: np.ndarray, scale: float) -> np.ndarray:
    return np.round(np.asarray(values, dtype=np.float64) * scale)


def max_flow(e: EnergyField, locked: Optional[MaskLike] = None, scale: float = FIXED_POINT_SCALE) -> CutResult:
    """
    Solves the min-cut of `e` with `locked` pixels forced to the foreground.

    Returns:
        CutResult: Foreground labeling and the max-flow value in energy units, which
        equals the quantized energy of the labeling.
    """
    ny, nx = e.shape
    if ny == 0 or nx == 0:
        return CutResult(np.zeros(e.shape, dtype=bool), 0.0)

    source_cost = _fixed(e.source_cost, scale)
    sink_cost = _fixed(e.sink_cost, scale)
    right = np.zeros((ny, nx))
    right[:, :-1] = _fixed(e.right, scale)
    down = np.zeros((ny, nx))
    down[:-1, :] = _fixed(e.down, scale)

    if locked is not None:
        lock = as_bool(locked)
        if lock.shape != e.shape:
            raise ValueError(f"locked mask shape {lock.shape} does not match energy grid {e.shape}")
        if lock.any():
            # exceeds any cut through the other edges of a pixel, so the source link is never cut
            hard = float(source_cost.sum() + sink_cost.sum() + 2.0 * (right.sum() + down.sum()) + 1.0)
            sink_cost = np.where(lock, hard, sink_cost)

    graph = maxflow.Graph[float]()
    nodes = graph.add_grid_nodes((ny, nx))
    # source link is cut when the pixel ends on the sink (background) side
    graph.add_grid_tedges(nodes, sink_cost, source_cost)
    graph.add_grid_edges(nodes, weights=right, structure=RIGHT, symmetric=True)
    graph.add_grid_edges(nodes, weights=down, structure=DOWN, symmetric=True)
    flow = graph.maxflow()
    background = graph.get_grid_segments(nodes)
    return CutResult(~background, float(flow) / scale)


def min_cut(e: EnergyField, locked: Optional[MaskLike] = None, scale: float = FIXED_POINT_SCALE) -> np.ndarray:
    """
    Foreground labeling attaining the global minimum of the (fixed-point) energy.

    Args:
        e (EnergyField): Data and pairwise costs.
        locked (MaskLike, optional): Pixels that must stay foreground.
        scale (float): Fixed-point scale of the capacities.

    Returns:
        np.ndarray: Boolean foreground mask; locked pixels are always foreground.
    """
    return max_flow(e, locked, scale).labeling
