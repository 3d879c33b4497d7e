"""
In-plane ROI detection from cardiac motion.

Pixels of the beating heart change over the cycle while most of the thorax stays
still, so the temporal standard deviation of a cine sequence highlights the heart.
"""
from typing import Sequence

import numpy as np

from src.imageops.morphology import connected_components, fill_holes
from src.imageops.threshold import otsu_threshold
from src.utility.errors import DegenerateInputError
from src.utility.logger import get_logger
from src.volumecore.preprocess import NORMALIZED_MAX, RoiBox
from src.volumecore.volume import Volume

logger = get_logger(__name__)

ROI_PADDING = 0.1


def motion_map(frames: Sequence[Volume]) -> np.ndarray:
    """Per-pixel temporal standard deviation, averaged over z; shaped (ny, nx)."""
    stack = np.stack([np.asarray(f.voxels, dtype=np.float64) for f in frames])
    return stack.std(axis=0).mean(axis=0)


def detect_roi_xy(frames: Sequence[Volume], padding: float = ROI_PADDING) -> RoiBox:
    """
    Bounding box of the largest moving region, padded by `padding` of its size.

    The motion map is rescaled to 0-255 and Otsu-thresholded; after hole filling, the
    box of the largest 4-connected component is padded and clipped to the frame.

    Args:
        frames (Sequence[Volume]): Cine frames sharing one grid.
        padding (float): Fractional padding added on each side.

    Returns:
        RoiBox: The in-plane ROI.

    Raises:
        DegenerateInputError: With fewer than two frames or a static sequence.
    """
    if len(frames) < 2:
        raise DegenerateInputError(f"ROI detection needs at least 2 frames, got {len(frames)}")
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DegenerateInputError(f"cine frames have differing dims: {sorted(shapes)}")

    motion = motion_map(frames)
    ny, nx = motion.shape
    low, high = float(motion.min()), float(motion.max())
    if high <= 0:
        raise DegenerateInputError("cine shows no motion; supply the ROI manually")
    if high - low <= 1e-12 * high:
        logger.info("motion covers the whole frame; using the full frame as ROI")
        return RoiBox.full(nx, ny)

    scaled = (motion - low) * (NORMALIZED_MAX / (high - low))
    moving = fill_holes(scaled > otsu_threshold(scaled))
    labels, n = connected_components(moving)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    largest = labels == (int(np.argmax(sizes)) + 1)

    rows = np.flatnonzero(largest.any(axis=1))
    cols = np.flatnonzero(largest.any(axis=0))
    y0, y1 = int(rows[0]), int(rows[-1]) + 1
    x0, x1 = int(cols[0]), int(cols[-1]) + 1
    pad_x = int(np.ceil(padding * (x1 - x0)))
    pad_y = int(np.ceil(padding * (y1 - y0)))
    roi = RoiBox(max(0, x0 - pad_x), min(nx, x1 + pad_x), max(0, y0 - pad_y), min(ny, y1 + pad_y))
    logger.info(f"detected ROI {roi.as_list()} in a {nx}x{ny} frame")
    return roi
