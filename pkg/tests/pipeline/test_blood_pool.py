import sys
import os

import numpy as np
import pytest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from src.atlas.atlas import ProbabilityMap
from src.graphcut.energy import EnergyField, data_term, energy_of
from src.graphcut.solver import min_cut
from src.pipeline import blood_pool
from src.pipeline.blood_pool import (
    bp_models,
    bp_prior_structures,
    segment_bp_slice,
    segment_bp_volume,
    slice_order,
)
from src.pipeline.debug import DebugRecorder
from src.stats.gaussian import neg_log_likelihood_field, neg_log_probability
from src.utility.errors import SliceUnsegmentableError
from src.validation.phantom import generate_phantom
from src.volumecore.preprocess import normalize_volume
from src.volumecore.volume import extract_slice
from tests.pipeline.helpers import dice, smoothed_prior


@pytest.fixture
def mid_case(small_phantom, normalized_ed):
    prior = smoothed_prior(small_phantom.gt_myo.labels)
    return extract_slice(normalized_ed, 2), prior.slice(2), small_phantom.gt_bp.array[2]


def test_slice_order():
    assert slice_order((0, 5)) == [2, 1, 3, 0, 4, 5]
    assert slice_order((3, 3)) == [3]
    assert sorted(slice_order((2, 11))) == list(range(2, 12))


def test_prior_structures(mid_case):
    s, prior, truth = mid_case
    structures = bp_prior_structures(s, prior)
    assert structures.confident_roi[24, 24]
    assert not structures.confident_roi[0, 0]
    assert np.all(structures.confident_roi[structures.init_bp])
    assert structures.bp_roi[24, 24]
    assert structures.init_bp.any()
    assert np.mean(truth[structures.init_bp]) > 0.9
    assert np.all(structures.bp_probability <= 1.0)
    assert np.all(structures.bp_probability[~structures.bp_roi] == 0.0)


def test_empty_prior_is_unsegmentable(mid_case):
    s, prior, _ = mid_case
    with pytest.raises(SliceUnsegmentableError) as info:
        bp_prior_structures(s, ProbabilityMap(np.zeros(prior.values.shape)))
    assert info.value.z_index == 2


def test_bp_models(mid_case):
    s, prior, _ = mid_case
    structures = bp_prior_structures(s, prior)
    bp_model, bg_model = bp_models(s, structures.init_bp, prior, bg_components=2)
    assert bp_model.K == 1 and bg_model.K == 2
    assert bp_model.means[0] > min(bg_model.means)
    with pytest.raises(SliceUnsegmentableError):
        bp_models(s, np.zeros(s.pixels.shape, dtype=bool), prior)


def test_segment_bp_slice(mid_case, fast_config, tmp_path):
    s, prior, truth = mid_case
    recorder = DebugRecorder(str(tmp_path))
    result = segment_bp_slice(s, prior, None, fast_config, recorder)
    assert dice(result.bp, truth) > 0.85
    assert 1 <= result.iterations <= fast_config.max_iterations
    assert len(result.parameter_changes) <= result.iterations
    assert 'bp_cut_it1' in recorder.names()
    assert result.refined_prior.values.shape == prior.values.shape


def test_locked_pixels_are_kept(mid_case, fast_config):
    s, prior, _ = mid_case
    locked = np.zeros(s.pixels.shape, dtype=bool)
    locked[22:27, 22:27] = True
    locked[0, 0] = True
    result = segment_bp_slice(s, prior, locked, fast_config)
    assert result.bp[22:27, 22:27].all()
    assert not result.bp[0, 0]


def test_segment_bp_volume(small_phantom, normalized_ed, fast_config):
    labels = small_phantom.gt_myo.labels.copy()
    labels[4] = 0
    result = segment_bp_volume(normalized_ed, smoothed_prior(labels), fast_config)
    assert result.order == [2, 1, 3, 0, 4]
    assert 4 in result.unsegmentable
    assert not result.bp[4].any()
    truth = small_phantom.gt_bp.array
    assert dice(result.bp[:4], truth[:4]) > 0.85
    assert set(result.iterations) == {0, 1, 2, 3}


def test_segment_bp_volume_range_checks(small_phantom, normalized_ed, fast_config):
    prior = smoothed_prior(small_phantom.gt_myo.labels)
    with pytest.raises(IndexError):
        segment_bp_volume(normalized_ed, prior, fast_config.model_copy(update={'slice_range': (0, 7)}))
    with pytest.raises(ValueError):
        segment_bp_volume(normalized_ed, ProbabilityMap(np.zeros((5, 4, 4))), fast_config)


def test_noise_free_slice_segments(small_spec, fast_config):
    """Constant-intensity classes drive the fitted variances to the floor."""
    phantom = generate_phantom(small_spec.model_copy(update={'noise_sigma': 0.0, 'slice_offset': 0.0}))
    volume, _ = normalize_volume(phantom.frames[0])
    prior = smoothed_prior(phantom.gt_myo.labels)
    result = segment_bp_slice(extract_slice(volume, 2), prior.slice(2), None, fast_config)
    assert dice(result.bp, phantom.gt_bp.array[2]) > 0.85


def test_cut_energy_beats_random_labelings(small_phantom, normalized_ed):
    prior = smoothed_prior(small_phantom.gt_myo.labels)
    rng = np.random.default_rng(17)
    for z in range(normalized_ed.shape[0]):
        s = extract_slice(normalized_ed, z)
        structures = bp_prior_structures(s, prior.slice(z))
        bp_model, bg_model = bp_models(s, structures.init_bp, prior.slice(z))
        p = structures.bp_probability
        for tau in (1, 2):
            energy = EnergyField.from_image(
                data_term(tau, neg_log_likelihood_field(s, bp_model).values, neg_log_probability(p)),
                data_term(tau, neg_log_likelihood_field(s, bg_model).values, neg_log_probability(1.0 - p)),
                s.pixels,
                tau,
            )
            best = energy_of(energy, min_cut(energy))
            for _ in range(50):
                assert best <= energy_of(energy, rng.random(s.pixels.shape) < rng.random()) + 1e-2


def test_inter_slice_lock_can_be_disabled(small_phantom, normalized_ed, fast_config, monkeypatch):
    calls = {}
    segment = blood_pool.segment_bp_slice

    def recording(s, prior, locked, cfg, recorder=None):
        calls[s.z_index] = locked is not None
        return segment(s, prior, locked, cfg, recorder)

    monkeypatch.setattr(blood_pool, 'segment_bp_slice', recording)
    prior = smoothed_prior(small_phantom.gt_myo.labels)
    segment_bp_volume(normalized_ed, prior, fast_config)
    assert calls == {2: False, 1: True, 3: True, 0: True, 4: True}
    calls.clear()
    segment_bp_volume(normalized_ed, prior, fast_config.model_copy(update={'inter_slice_lock': False}))
    assert not any(calls.values()) and len(calls) == 5
