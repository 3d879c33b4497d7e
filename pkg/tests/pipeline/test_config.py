import sys
import os

import pytest
import yaml
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from src.pipeline.config import SEED_ENV, check_increasing_weights, load_pipeline_config
from src.utility.errors import ConfigError


def test_defaults():
    cfg = load_pipeline_config()
    assert cfg.slice_range is None
    assert cfg.erosion_fraction == 0.15
    assert cfg.distance_cap == 10
    assert cfg.myo_weights == (0.2, 0.3, 0.5)
    assert cfg.registration.volume.parameterization == 'affine'


def test_slice_range_is_required():
    with pytest.raises(ConfigError) as info:
        load_pipeline_config().require_slice_range()
    assert info.value.key == 'slice_range'


def test_file_then_overrides(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text(yaml.safe_dump({'slice_range': [2, 9], 'seed': 4, 'registration': {'refinement': {'parameterization': 'similarity'}}}))
    cfg = load_pipeline_config(str(path), {'seed': 11, 'jobs': None})
    assert cfg.require_slice_range() == (2, 9)
    assert cfg.seed == 11
    assert cfg.registration.refinement.parameterization == 'similarity'
    assert cfg.registration.volume.parameterization == 'affine'


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV, '42')
    assert load_pipeline_config().seed == 42
    monkeypatch.setenv(SEED_ENV, 'forty-two')
    with pytest.raises(ConfigError):
        load_pipeline_config()


@pytest.mark.parametrize('overrides', [
    {'slice_range': (5, 2)},
    {'erosion_fraction': 1.5},
    {'myo_weights': (0.5, 0.5, 0.5)},
    {'myo_weights': (0.5, 0.3, 0.2)},
    {'low_threshold': 0.6},
    {'registration': {'volume': {'parameterization': 'rigid'}}},
])
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_pipeline_config(overrides=overrides)


def test_weight_ablation_allows_any_order():
    cfg = load_pipeline_config(overrides={'myo_weights': (0.5, 0.3, 0.2), 'weight_ablation': True})
    assert not check_increasing_weights(cfg.myo_weights)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_pipeline_config(str(tmp_path / 'missing.yaml'))
