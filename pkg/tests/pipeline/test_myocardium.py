import sys
import os

import numpy as np
import pytest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from src.atlas.atlas import ProbabilityMap
from src.pipeline.myocardium import (
    distance_costs,
    match_to_mid_slice,
    mid_slices,
    myo_models,
    segment_myocardium,
)
from src.stats.gaussian import MAX_NLL
from src.utility.errors import DegenerateInputError
from tests.pipeline.helpers import dice, smoothed_prior


def test_mid_slices():
    assert mid_slices((0, 9)) == [2, 3, 4, 5, 6, 7]
    assert mid_slices((1, 3)) == [1, 2, 3]


def test_distance_costs():
    bp = np.zeros((1, 30), dtype=bool)
    bp[0, :5] = True
    myo_cost, bg_cost = distance_costs(bp, 10)
    assert myo_cost[0, 0] == MAX_NLL and bg_cost[0, 0] == 0.0
    assert myo_cost[0, 5] == pytest.approx(0.1 * MAX_NLL)
    assert myo_cost[0, 29] == pytest.approx(MAX_NLL)
    assert bg_cost[0, 29] == pytest.approx(0.9 * MAX_NLL)


def test_match_to_mid_slice_keeps_mid(normalized_ed, small_phantom, fast_config):
    matched = match_to_mid_slice(normalized_ed, smoothed_prior(small_phantom.gt_myo.labels), fast_config)
    assert np.array_equal(matched[2], normalized_ed.voxels[2])
    assert matched.shape == normalized_ed.shape


def test_myo_models(normalized_ed, small_phantom, fast_config):
    prior = smoothed_prior(small_phantom.gt_myo.labels)
    models = myo_models(normalized_ed, prior, fast_config, small_phantom.gt_bp.array)
    assert models.myo_model.K == 1
    assert models.bg_model.K == fast_config.myo_bg_components
    with pytest.raises(DegenerateInputError):
        myo_models(normalized_ed, ProbabilityMap(np.zeros(normalized_ed.shape)), fast_config)


def test_segment_myocardium(normalized_ed, small_phantom, fast_config):
    bp = small_phantom.gt_bp.array
    myo = segment_myocardium(normalized_ed, bp, smoothed_prior(small_phantom.gt_myo.labels), fast_config)
    assert not np.any(myo & bp)
    assert dice(myo, small_phantom.gt_myo.array) > 0.75


def test_segment_myocardium_parallel_matches_serial(normalized_ed, small_phantom, fast_config):
    bp = small_phantom.gt_bp.array
    prior = smoothed_prior(small_phantom.gt_myo.labels)
    serial = segment_myocardium(normalized_ed, bp, prior, fast_config)
    parallel = segment_myocardium(normalized_ed, bp, prior, fast_config.model_copy(update={'jobs': 3}))
    assert np.array_equal(serial, parallel)


def test_empty_blood_pool_gives_empty_myocardium(normalized_ed, small_phantom, fast_config):
    bp = small_phantom.gt_bp.array.copy()
    bp[0] = False
    myo = segment_myocardium(normalized_ed, bp, smoothed_prior(small_phantom.gt_myo.labels), fast_config)
    assert not myo[0].any()
