import sys
import os
import time

import numpy as np
import pytest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from src.atlas.atlas import Atlas, ProbabilityMap, build_atlas
from src.imageops.morphology import convex_hull_mask
from src.pipeline.config import load_pipeline_config
from src.pipeline.debug import DebugRecorder
from src.pipeline.runner import SegmentationResult, prepare_volume, run_pipeline
from src.utility.errors import ConfigError, StageError
from src.utility.logger import get_loggers
from src.validation.phantom import PhantomSpec, generate_phantom
from src.validation.report import stratum_of
from src.volumecore.cvol import load_volume
from src.volumecore.preprocess import uncrop_mask
from src.volumecore.volume import LabelMask
from tests.pipeline.helpers import dice, smoothed_prior

monitoring = get_loggers('monitoring')


def test_prepare_volume_crops_to_motion(small_phantom, fast_config):
    prepared = prepare_volume(small_phantom.frames, fast_config)
    nx, ny, nz = prepared.volume.dims
    assert nz == 5
    assert nx < 48 and ny < 48
    assert prepared.full_dims == (48, 48, 5)
    assert prepared.volume.voxels.max() == pytest.approx(255.0)
    rows, cols = prepared.roi.index
    assert small_phantom.gt_bp.array[:, rows, cols].sum() == small_phantom.gt_bp.array.sum()


def test_prepare_volume_options(small_phantom, fast_config):
    full = prepare_volume(small_phantom.frames, fast_config.model_copy(update={'detect_roi': False}))
    assert full.roi.as_list() == [0, 48, 0, 48]
    with pytest.raises(IndexError):
        prepare_volume(small_phantom.frames, fast_config.model_copy(update={'ed_frame': 9}))


def test_result_rejects_overlap():
    mask = LabelMask(np.ones((1, 2, 2), dtype=np.uint8))
    prior = ProbabilityMap(np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        SegmentationResult(mask, mask, {}, {}, prior, prior, [])


def test_run_requires_slice_range(normalized_ed):
    atlas = Atlas(normalized_ed, ProbabilityMap(np.zeros(normalized_ed.shape)), 1)
    with pytest.raises(ConfigError):
        run_pipeline(atlas, normalized_ed, load_pipeline_config())


def test_stage_error_names_the_stage(normalized_ed, fast_config):
    atlas = Atlas(normalized_ed, ProbabilityMap(np.zeros(normalized_ed.shape)), 1)
    with pytest.raises(StageError) as info:
        run_pipeline(atlas, normalized_ed, fast_config)
    assert info.value.stage == 'myocardium_models'


def test_run_pipeline_on_own_atlas(small_phantom, normalized_ed, fast_config, tmp_path):
    atlas = Atlas(normalized_ed, smoothed_prior(small_phantom.gt_myo.labels), 1)
    result = run_pipeline(atlas, normalized_ed, fast_config, DebugRecorder(str(tmp_path)))
    assert dice(result.bp.array, small_phantom.gt_bp.array) > 0.85
    assert dice(result.myo.array, small_phantom.gt_myo.array) > 0.7
    assert result.order == [2, 1, 3, 0, 4]
    assert set(result.timings) == {'propagate_prior', 'blood_pool', 'myocardium_models', 'myocardium'}
    assert load_volume(str(tmp_path / 'prior_initial')).dims == normalized_ed.dims


SLICE_RANGE = (0, 11)


@pytest.fixture(scope='module')
def acceptance_case():
    """Atlas of two phantoms and a third phantom with different geometry and noise."""
    cfg = load_pipeline_config(overrides={'slice_range': SLICE_RANGE})
    phantoms = [generate_phantom(PhantomSpec(seed=k, geometry_seed=k)) for k in (1, 2, 3)]
    prepared = [prepare_volume(p.frames, cfg) for p in phantoms]

    def cropped_myo(k):
        rows, cols = prepared[k].roi.index
        return LabelMask(phantoms[k].gt_myo.labels[:, rows, cols])

    atlas = build_atlas(
        prepared[0].volume,
        [(prepared[k].volume, cropped_myo(k)) for k in (0, 1)],
        settings=cfg.registration.volume.settings(),
    )
    return atlas, prepared[2], phantoms[2], cfg


def _run(atlas, test, cfg):
    started = time.perf_counter()
    result = run_pipeline(atlas, test.volume, cfg)
    seconds = time.perf_counter() - started
    bp = uncrop_mask(result.bp, test.roi, test.full_dims).array
    myo = uncrop_mask(result.myo, test.roi, test.full_dims).array
    return result, bp, myo, seconds


def _stratum_dice(pred, truth, stratum):
    scores = [
        dice(pred[z], truth[z])
        for z in range(SLICE_RANGE[0], SLICE_RANGE[1] + 1)
        if stratum_of(z, SLICE_RANGE) == stratum and truth[z].any()
    ]
    return float(np.mean(scores))


@pytest.fixture(scope='module')
def acceptance_run(acceptance_case):
    atlas, test, _, cfg = acceptance_case
    return _run(atlas, test, cfg)


@pytest.mark.slow
def test_phantom_acceptance(acceptance_case, acceptance_run):
    phantom = acceptance_case[2]
    _, bp, myo, seconds = acceptance_run
    assert dice(bp, phantom.gt_bp.array) >= 0.90
    assert dice(myo, phantom.gt_myo.array) >= 0.80
    assert seconds < 10.0


@pytest.mark.slow
def test_phantom_refinement_converges_quickly(acceptance_run):
    result = acceptance_run[0]
    counts = [result.iterations_per_slice[z] for z in range(SLICE_RANGE[0], SLICE_RANGE[1] + 1)]
    assert np.mean([n <= 3 for n in counts]) >= 0.75


@pytest.mark.slow
def test_phantom_mid_slices_score_higher(acceptance_case, acceptance_run):
    truth = acceptance_case[2].gt_myo.array
    myo = acceptance_run[2]
    assert _stratum_dice(myo, truth, 'mid') >= _stratum_dice(myo, truth, 'apical_basal')


@pytest.mark.slow
def test_phantom_bp_is_convex_per_slice(acceptance_run):
    bp = acceptance_run[0].bp.array
    for z in range(bp.shape[0]):
        if bp[z].any():
            assert np.array_equal(convex_hull_mask(bp[z]), bp[z])


@pytest.mark.slow
def test_phantom_run_is_deterministic(acceptance_case, acceptance_run):
    atlas, test, _, cfg = acceptance_case
    again = _run(atlas, test, cfg)[0]
    assert np.array_equal(again.bp.labels, acceptance_run[0].bp.labels)
    assert np.array_equal(again.myo.labels, acceptance_run[0].myo.labels)
    assert again.iterations_per_slice == acceptance_run[0].iterations_per_slice


@pytest.mark.slow
def test_decreasing_myo_weights_change_the_result(acceptance_case, acceptance_run):
    atlas, test, phantom, _ = acceptance_case
    cfg = load_pipeline_config(overrides={
        'slice_range': SLICE_RANGE, 'weight_ablation': True, 'myo_weights': (0.5, 0.3, 0.2),
    })
    _, _, permuted, _ = _run(atlas, test, cfg)
    truth = phantom.gt_myo.array
    baseline = dice(acceptance_run[2], truth)
    ablated = dice(permuted, truth)
    monitoring.metrics({'myo_dice': baseline, 'myo_dice_decreasing_weights': ablated}, message='weight ablation')
    assert abs(baseline - ablated) > 1e-3


@pytest.mark.slow
def test_inter_slice_lock_helps_apical_slices(acceptance_case):
    atlas, _, _, cfg = acceptance_case
    phantom = generate_phantom(PhantomSpec(seed=3, geometry_seed=3, noise_sigma=20.0))
    test = prepare_volume(phantom.frames, cfg)
    apex = (SLICE_RANGE[1] - 1, SLICE_RANGE[1])

    def apical_dice(lock):
        bp = _run(atlas, test, cfg.model_copy(update={'inter_slice_lock': lock}))[1]
        return float(np.mean([dice(bp[z], phantom.gt_bp.array[z]) for z in apex]))

    locked, unlocked = apical_dice(True), apical_dice(False)
    monitoring.metrics({'apical_bp_dice': locked, 'apical_bp_dice_unlocked': unlocked}, message='lock ablation')
    assert locked >= unlocked
