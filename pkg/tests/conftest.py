import sys
import os

import numpy as np
import pytest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.pipeline.config import load_pipeline_config
from src.validation.phantom import PhantomSpec, generate_phantom
from src.volumecore.preprocess import normalize_volume

SMALL_SPEC = dict(
    nx=48, ny=48, n_slices=5, n_frames=3,
    bp_radius_base=9.0, bp_radius_apex=6.0, myo_thickness=4.0,
    rv_radius=0.0, jitter=0.5, noise_sigma=5.0, slice_offset=5.0,
)


@pytest.fixture
def small_spec() -> PhantomSpec:
    return PhantomSpec(**SMALL_SPEC)


@pytest.fixture
def small_phantom(small_spec):
    return generate_phantom(small_spec)


@pytest.fixture
def normalized_ed(small_phantom):
    """End-diastolic frame of the small phantom, normalized per slice."""
    volume, _ = normalize_volume(small_phantom.frames[0])
    return volume


@pytest.fixture
def fast_config():
    return load_pipeline_config(overrides={
        'slice_range': (0, 4),
        'max_iterations': 4,
        'registration': {
            'volume': {'max_iterations': 300},
            'refinement': {'max_iterations': 300},
        },
    })
