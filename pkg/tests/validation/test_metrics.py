import sys
import os

import numpy as np
import pytest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from src.validation.metrics import (
    METRIC_NAMES,
    ConfusionCounts,
    compute_metrics,
    confusion_counts,
    dilation_radius,
    evaluation_region,
    metrics_from_counts,
    per_slice_metrics,
)


def test_dilation_radius_rounds_half_even():
    mask = np.zeros((40, 40), dtype=bool)
    mask.ravel()[:300] = True
    assert dilation_radius(mask) == 2
    mask[:] = False
    mask.ravel()[:4] = True
    assert dilation_radius(mask) == 0


def test_closed_form_counts():
    """|pred| = |gt| = 100 with 50 overlapping, 100 true negatives."""
    counts = ConfusionCounts(tp=50, fp=50, tn=100, fn=50)
    metrics = metrics_from_counts(counts)
    assert metrics['dice'] == pytest.approx(0.5)
    assert metrics['jaccard'] == pytest.approx(1 / 3)
    assert metrics['sensitivity'] == pytest.approx(0.5)
    assert metrics['ppv'] == pytest.approx(0.5)
    assert metrics['specificity'] == pytest.approx(100 / 150)
    assert metrics['npv'] == pytest.approx(100 / 150)


def test_disjoint_masks():
    pred = np.zeros((10, 10), dtype=bool)
    gt = np.zeros((10, 10), dtype=bool)
    pred[0:3, 0:3] = True
    gt[6:9, 6:9] = True
    metrics = compute_metrics(pred, gt, np.ones((10, 10), dtype=bool))
    for name in ('dice', 'jaccard', 'sensitivity', 'ppv'):
        assert metrics[name] == 0.0


def test_undefined_ratios_are_none():
    metrics = metrics_from_counts(ConfusionCounts(tn=10))
    assert metrics['dice'] is None
    assert metrics['sensitivity'] is None
    assert metrics['specificity'] == 1.0


def test_identical_masks_score_one():
    gt = np.zeros((20, 20), dtype=bool)
    gt[5:15, 5:15] = True
    metrics = compute_metrics(gt, gt, evaluation_region(gt))
    assert all(metrics[name] == 1.0 for name in METRIC_NAMES)


@pytest.mark.parametrize('seed', range(100))
def test_metric_identities(seed):
    rng = np.random.default_rng(seed)
    pred = rng.random((16, 16)) > 0.5
    gt = rng.random((16, 16)) > 0.5
    region = np.ones((16, 16), dtype=bool)
    m = compute_metrics(pred, gt, region)
    assert m['jaccard'] == pytest.approx(m['dice'] / (2 - m['dice']), abs=1e-12)
    swapped = compute_metrics(gt, pred, region)
    assert swapped['dice'] == pytest.approx(m['dice'], abs=1e-12)
    assert swapped['sensitivity'] == pytest.approx(m['ppv'], abs=1e-12)
    assert swapped['specificity'] == pytest.approx(m['npv'], abs=1e-12)


def test_region_only_counts():
    """Prediction outside the region is ignored, not clipped into false positives."""
    gt = np.zeros((30, 30), dtype=bool)
    gt[10:20, 10:20] = True
    pred = gt.copy()
    pred[0, 0] = True
    region = evaluation_region(gt)
    assert not region[0, 0]
    assert confusion_counts(pred, gt, region).fp == 0
    with pytest.raises(ValueError):
        confusion_counts(pred, gt[:5], region)


def test_per_slice_metrics_skips_empty_truth():
    gt = np.zeros((4, 12, 12), dtype=bool)
    gt[1:3, 3:9, 3:9] = True
    records = per_slice_metrics(gt, gt, (0, 3), 'bp')
    assert [r['z'] for r in records] == [1, 2]
    assert records[0]['structure'] == 'bp'
    assert records[0]['dice'] == 1.0
    assert records[0]['tp'] == 36
    with pytest.raises(IndexError):
        per_slice_metrics(gt, gt, (0, 4))
    with pytest.raises(ValueError):
        per_slice_metrics(gt, gt[:, :6], (0, 3))
