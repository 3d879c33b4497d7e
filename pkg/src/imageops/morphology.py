"""
Binary-mask morphology on 2D slices: 4-connected components, hole filling,
disk erosion/dilation, convex hull and the minimum enclosing circle.
"""
import warnings
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from skimage.draw import line
from skimage.morphology import convex_hull_image

from src.utility.errors import DegenerateInputError
from src.utility.logger import get_logger
from src.volumecore.volume import MaskLike, as_bool

logger = get_logger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def _mask2d(m: MaskLike) -> np.ndarray:
    mask = as_bool(m)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2D mask, got shape {mask.shape}")
    return mask


def connected_components(m: MaskLike) -> Tuple[np.ndarray, int]:
    """
    Labels 4-connected foreground components.

    Returns:
        Tuple[np.ndarray, int]: int32 label image (0 = background, 1..n components) and n.
    """
    labels, n = ndimage.label(_mask2d(m), structure=FOUR_CONNECTED)
    return labels.astype(np.int32), int(n)


def _touches_border(component: np.ndarray) -> bool:
    return bool(component[0].any() or component[-1].any() or component[:, 0].any() or component[:, -1].any())


def inner_component(m: MaskLike, exclude_border: bool = False) -> np.ndarray:
    """
    Returns the component whose centroid lies nearest the centroid of all foreground pixels.

    Args:
        m (MaskLike): Binary mask.
        exclude_border (bool): Skip components touching the image border when at least
            one interior component exists.

    Returns:
        np.ndarray: Boolean mask of the selected component; empty for an empty input.
    """
    mask = _mask2d(m)
    labels, n = connected_components(mask)
    if n == 0:
        return np.zeros_like(mask)

    candidates = list(range(1, n + 1))
    if exclude_border:
        interior = [k for k in candidates if not _touches_border(labels == k)]
        if interior:
            candidates = interior

    center = np.argwhere(mask).mean(axis=0)
    centroids = ndimage.center_of_mass(mask, labels, candidates)
    distances = [float(np.hypot(*(np.asarray(c) - center))) for c in centroids]
    best = candidates[int(np.argmin(distances))]
    return labels == best


def fill_holes(m: MaskLike) -> np.ndarray:
    """Marks background regions not 4-connected to the image border as foreground."""
    return ndimage.binary_fill_holes(_mask2d(m), structure=FOUR_CONNECTED)


def disk(radius: int) -> np.ndarray:
    """Disk structuring element: offsets with Euclidean norm <= radius."""
    radius = int(radius)
    offsets = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(offsets, offsets, indexing='ij')
    return (xx * xx + yy * yy) <= radius * radius


def dilate_disk(m: MaskLike, radius: int) -> np.ndarray:
    """
    Dilates with a disk of the given radius; radius 0 is the identity.

    Raises:
        ValueError: If radius is negative.
    """
    if radius < 0:
        raise ValueError(f"dilation radius must be >= 0, got {radius}")
    mask = _mask2d(m)
    if radius == 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=disk(radius))


def erode_disk(m: MaskLike, radius: int) -> np.ndarray:
    """Erodes with a disk of the given radius (pixels outside the image count as background)."""
    if radius < 0:
        raise ValueError(f"erosion radius must be >= 0, got {radius}")
    mask = _mask2d(m)
    if radius == 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=disk(radius), border_value=0)


def _circle_two(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, float]:
    center = (a + b) / 2.0
    return center, float(np.hypot(*(a - center)))


def _circle_three(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> Optional[Tuple[np.ndarray, float]]:
    bx, by = b - a
    cx, cy = c - a
    d = 2.0 * (bx * cy - by * cx)
    if abs(d) < 1e-12:
        return None
    ux = (cy * (bx * bx + by * by) - by * (cx * cx + cy * cy)) / d
    uy = (bx * (cx * cx + cy * cy) - cx * (bx * bx + by * by)) / d
    center = a + np.array([ux, uy])
    return center, float(np.hypot(ux, uy))


def _inside(circle: Tuple[np.ndarray, float], p: np.ndarray, eps: float = 1e-9) -> bool:
    center, radius = circle
    return float(np.hypot(*(p - center))) <= radius + eps


def minimum_enclosing_circle(points: Sequence[Sequence[float]]) -> Tuple[np.ndarray, float]:
    """
    Exact smallest circle enclosing a set of 2D points (incremental Welzl scheme).

    The point order is shuffled with a fixed seed; the resulting circle is unique
    regardless of order.

    Returns:
        Tuple[np.ndarray, float]: Center and radius.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise DegenerateInputError("minimum enclosing circle of an empty point set")
    pts = np.unique(pts, axis=0)
    pts = pts[np.random.default_rng(0).permutation(len(pts))]

    circle = (pts[0].copy(), 0.0)
    for i in range(1, len(pts)):
        if _inside(circle, pts[i]):
            continue
        circle = (pts[i].copy(), 0.0)
        for j in range(i):
            if _inside(circle, pts[j]):
                continue
            circle = _circle_two(pts[i], pts[j])
            for k in range(j):
                if _inside(circle, pts[k]):
                    continue
                three = _circle_three(pts[i], pts[j], pts[k])
                if three is None:
                    # collinear: the farthest pair spans the circle
                    pair = max(
                        ((pts[i], pts[j]), (pts[i], pts[k]), (pts[j], pts[k])),
                        key=lambda ab: float(np.hypot(*(ab[0] - ab[1]))),
                    )
                    three = _circle_two(*pair)
                circle = three
    return circle


def mask_enclosing_radius(m: MaskLike) -> float:
    """Radius of the minimum enclosing circle of the foreground pixel centers."""
    mask = _mask2d(m)
    if not mask.any():
        raise DegenerateInputError("enclosing circle of an empty mask")
    # only hull candidates matter: keep the pixels on the mask's outline
    outline = mask & ~ndimage.binary_erosion(mask, structure=FOUR_CONNECTED, border_value=0)
    _, radius = minimum_enclosing_circle(np.argwhere(outline))
    return radius


def erode_by_circumscribed_fraction(m: MaskLike, fraction: float) -> np.ndarray:
    """
    Erodes by a disk of radius ceil(fraction * R), R being the radius of the
    minimum enclosing circle of the foreground pixel centers.

    Returns an empty mask (with a warning) when that radius reaches R.

    Raises:
        ValueError: If fraction is outside (0, 1).
        DegenerateInputError: If the mask is empty.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"erosion fraction must lie in (0, 1), got {fraction}")
    mask = _mask2d(m)
    radius_outer = mask_enclosing_radius(mask)
    radius = int(np.ceil(fraction * radius_outer - 1e-9))
    if radius >= radius_outer:
        logger.warning(
            f"erosion radius {radius} >= enclosing radius {radius_outer:.3f}; returning empty mask"
        )
        return np.zeros_like(mask)
    return erode_disk(mask, radius)


def convex_hull_mask(m: MaskLike) -> np.ndarray:
    """
    Rasterizes the convex hull polygon of the foreground pixel centers.

    Pixels on the hull boundary are included; the result is a superset of the input.
    Collinear inputs yield the rasterized segment between their extreme pixels.
    """
    mask = _mask2d(m)
    points = np.argwhere(mask)
    if len(points) == 0:
        return np.zeros_like(mask)

    spread = points - points[0]
    if len(points) < 3 or np.linalg.matrix_rank(spread.astype(np.float64)) < 2:
        hull = mask.copy()
        order = np.lexsort((points[:, 1], points[:, 0]))
        start, end = points[order[0]], points[order[-1]]
        rr, cc = line(int(start[0]), int(start[1]), int(end[0]), int(end[1]))
        hull[rr, cc] = True
        return hull

    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        hull = convex_hull_image(mask, offset_coordinates=False, include_borders=True)
    return hull | mask


def components_touching(m: MaskLike, seed: MaskLike) -> np.ndarray:
    """Union of the 4-connected components of `m` that intersect `seed`."""
    labels, n = connected_components(m)
    if n == 0:
        return np.zeros(labels.shape, dtype=bool)
    hit: List[int] = sorted(set(np.unique(labels[as_bool(seed)])) - {0})
    return np.isin(labels, hit)
