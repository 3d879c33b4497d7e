"""
Overlap metrics counted inside an evaluation region.

The region is the ground-truth structure dilated by a quarter of the radius of the
disk with the same area; it only defines which pixels are counted and never clips
the prediction.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.imageops.morphology import dilate_disk
from src.volumecore.volume import MaskLike, as_bool

METRIC_NAMES = ('dice', 'jaccard', 'sensitivity', 'specificity', 'ppv', 'npv')


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: 'ConfusionCounts') -> 'ConfusionCounts':
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def dilation_radius(gt: MaskLike) -> int:
    """round(r_eq / 4) with r_eq = sqrt(area / pi), rounding half to even."""
    area = int(np.count_nonzero(as_bool(gt)))
    return int(round(math.sqrt(area / math.pi) / 4.0))


def evaluation_region(gt: MaskLike) -> np.ndarray:
    """Ground truth dilated by `dilation_radius`; empty for an empty ground truth."""
    mask = as_bool(gt)
    if not mask.any():
        return np.zeros_like(mask)
    return dilate_disk(mask, dilation_radius(mask))


def confusion_counts(pred: MaskLike, gt: MaskLike, region: MaskLike) -> ConfusionCounts:
    p = as_bool(pred)
    g = as_bool(gt)
    r = as_bool(region)
    if not p.shape == g.shape == r.shape:
        raise ValueError(f"mask shapes differ: pred {p.shape}, gt {g.shape}, region {r.shape}")
    p = p[r]
    g = g[r]
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        tn=int(np.count_nonzero(~p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
    )


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator > 0 else None


def metrics_from_counts(c: ConfusionCounts) -> Dict[str, Optional[float]]:
    """The six overlap metrics; a ratio with a zero denominator is None."""
    return {
        'dice': _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        'jaccard': _ratio(c.tp, c.tp + c.fp + c.fn),
        'sensitivity': _ratio(c.tp, c.tp + c.fn),
        'specificity': _ratio(c.tn, c.tn + c.fp),
        'ppv': _ratio(c.tp, c.tp + c.fp),
        'npv': _ratio(c.tn, c.tn + c.fn),
    }


def compute_metrics(pred: MaskLike, gt: MaskLike, region: MaskLike) -> Dict[str, Optional[float]]:
    """
    Dice, Jaccard, sensitivity, specificity, PPV and NPV over the region's pixels.

    Args:
        pred (MaskLike): Predicted labeling.
        gt (MaskLike): Ground truth labeling.
        region (MaskLike): Counting domain.

    Returns:
        Dict[str, Optional[float]]: Metric name to value, None where undefined.
    """
    return metrics_from_counts(confusion_counts(pred, gt, region))


def per_slice_metrics(
    pred: MaskLike,
    gt: MaskLike,
    slice_range: Tuple[int, int],
    structure: str = 'myo',
) -> List[Dict[str, object]]:
    """
    Metrics of every slice of a 3D labeling in the LV range.

    Slices with an empty ground truth have an empty region and are left out.

    Returns:
        List[Dict[str, object]]: One record per evaluated slice with keys `z`,
        `structure`, the confusion counts and the six metrics.
    """
    p = as_bool(pred)
    g = as_bool(gt)
    if p.shape != g.shape:
        raise ValueError(f"prediction dims {p.shape[::-1]} differ from ground truth dims {g.shape[::-1]}")
    start, end = slice_range
    if start < 0 or end >= p.shape[0] or start > end:
        raise IndexError(f"slice range {slice_range} invalid for {p.shape[0]} slices")
    records: List[Dict[str, object]] = []
    for z in range(start, end + 1):
        region = evaluation_region(g[z])
        if not region.any():
            continue
        counts = confusion_counts(p[z], g[z], region)
        record: Dict[str, object] = {'z': z, 'structure': structure}
        record.update(vars(counts))
        record.update(metrics_from_counts(counts))
        records.append(record)
    return records
