"""
Myocardium segmentation around a segmented blood pool.

A single graph cut per slice whose data term mixes three costs with increasing
weight: the intensity model, the refined myocardial prior and the distance from the
endocardial border.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.atlas.atlas import ProbabilityMap
from src.graphcut.energy import EnergyField
from src.graphcut.solver import min_cut
from src.imageops.distance import truncated_outside_distance
from src.imageops.morphology import components_touching, dilate_disk, fill_holes
from src.imageops.threshold import histogram, histogram_match
from src.pipeline.config import PipelineConfig
from src.pipeline.debug import DebugRecorder
from src.stats.gaussian import (
    MAX_NLL,
    GaussianMixture,
    fit_gaussian,
    fit_gmm,
    neg_log_likelihood_field,
    neg_log_probability,
)
from src.utility.errors import DegenerateInputError
from src.utility.logger import get_logger
from src.volumecore.volume import MaskLike, Slice, Volume, as_bool, extract_slice

logger = get_logger(__name__)

SMOOTHNESS_TAU = 1
EDGE_SLICES = 2


@dataclass(frozen=True)
class MyoModels:
    """Volume-wide intensity models and the histogram-matched intensities they were fit on."""
    myo_model: GaussianMixture
    bg_model: GaussianMixture
    matched: np.ndarray


def mid_slices(slice_range: Tuple[int, int]) -> List[int]:
    """Slices of the range without its first and last two; all of them for short ranges."""
    start, end = slice_range
    inner = list(range(start + EDGE_SLICES, end - EDGE_SLICES + 1))
    return inner or list(range(start, end + 1))


def heart_roi(prior: np.ndarray, low_threshold: float) -> np.ndarray:
    return fill_holes(np.asarray(prior) > low_threshold)


def match_to_mid_slice(v: Volume, prior: ProbabilityMap, cfg: PipelineConfig) -> np.ndarray:
    """
    Matches each slice's ROI histogram to the mid-slice's ROI histogram.

    Returns:
        np.ndarray: Matched intensities shaped like the volume; slices outside the LV
        range or with an empty ROI are unchanged.
    """
    start, end = cfg.require_slice_range()
    mid = (start + end) // 2
    matched = np.array(v.voxels, dtype=np.float64, copy=True)
    mid_roi = heart_roi(prior.values[mid], cfg.low_threshold)
    if not mid_roi.any():
        raise DegenerateInputError(f"mid-slice {mid} has no prior above {cfg.low_threshold}")
    reference = histogram(v.voxels[mid], mid_roi)
    for z in range(start, end + 1):
        roi = heart_roi(prior.values[z], cfg.low_threshold)
        if z == mid or not roi.any():
            continue
        matched[z] = histogram_match(extract_slice(v, z), reference, roi).pixels
    return matched


def myo_models(
    v: Volume,
    refined_prior: ProbabilityMap,
    cfg: PipelineConfig,
    bp: Optional[MaskLike] = None,
) -> MyoModels:
    """
    Fits one myocardium Gaussian and one background mixture for the whole volume.

    Samples come from the mid-slices after histogram matching: myocardium pixels
    have refined prior above `cfg.prior_threshold`; background pixels are the rest
    of the heart ROI. Blood pool pixels are excluded from both.

    Raises:
        DegenerateInputError: If either sample set is too small.
    """
    matched = match_to_mid_slice(v, refined_prior, cfg)
    blood_pool = np.zeros(v.shape, dtype=bool) if bp is None else as_bool(bp)
    myo_samples: List[np.ndarray] = []
    bg_samples: List[np.ndarray] = []
    for z in mid_slices(cfg.require_slice_range()):
        prior = refined_prior.values[z]
        roi = heart_roi(prior, cfg.low_threshold) & ~blood_pool[z]
        myo = roi & (prior > cfg.prior_threshold)
        myo_samples.append(matched[z][myo])
        bg_samples.append(matched[z][roi & ~myo])
    myo_values = np.concatenate(myo_samples)
    bg_values = np.concatenate(bg_samples)
    if myo_values.size < 2:
        raise DegenerateInputError(f"only {myo_values.size} myocardium samples in the mid-slices")
    if bg_values.size < max(2, cfg.myo_bg_components):
        raise DegenerateInputError(f"only {bg_values.size} background samples in the mid-slices")
    myo_model = fit_gaussian(myo_values)
    bg_model = fit_gmm(bg_values, cfg.myo_bg_components, cfg.seed)
    logger.info(f"myocardium model mean={myo_model.means[0]:.2f}, variance={myo_model.variances[0]:.2f}")
    return MyoModels(myo_model, bg_model, matched)


def distance_costs(bp: MaskLike, cap: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Distance-term costs (myocardium, background) around a blood pool.

    Myocardium pays (d / cap) * MAX_NLL at distance d outside the blood pool and
    MAX_NLL inside it; background pays MAX_NLL * (cap - 1) / cap outside and 0 inside.
    """
    truncated = truncated_outside_distance(bp, cap)
    myo_cost = np.where(truncated.interior, MAX_NLL, truncated.values / cap * MAX_NLL)
    bg_cost = np.where(truncated.interior, 0.0, MAX_NLL * (cap - 1.0) / cap)
    return myo_cost, np.maximum(bg_cost, 0.0)


def segment_myocardium_slice(
    s: Slice,
    bp: MaskLike,
    prior: ProbabilityMap,
    models: MyoModels,
    cfg: PipelineConfig,
    recorder: Optional[DebugRecorder] = None,
) -> np.ndarray:
    """
    Labels the myocardium of one slice with a single cut.

    The cut is restricted to components adjacent to the blood pool border and never
    overlaps the blood pool.
    """
    blood_pool = as_bool(bp)
    if not blood_pool.any():
        return np.zeros(blood_pool.shape, dtype=bool)
    recorder = recorder or DebugRecorder(None)
    w1, w2, w3 = cfg.myo_weights
    p = np.asarray(prior.values)

    intensity_myo = neg_log_likelihood_field(s, models.myo_model).values
    intensity_bg = neg_log_likelihood_field(s, models.bg_model).values
    distance_myo, distance_bg = distance_costs(blood_pool, cfg.distance_cap)
    source_cost = w1 * intensity_myo + w2 * neg_log_probability(p) + w3 * distance_myo
    sink_cost = w1 * intensity_bg + w2 * neg_log_probability(1.0 - p) + w3 * distance_bg

    energy = EnergyField.from_image(source_cost, sink_cost, s.pixels, SMOOTHNESS_TAU)
    cut = min_cut(energy) & ~blood_pool
    ring = dilate_disk(blood_pool, 1) & ~blood_pool
    myo = components_touching(cut, ring) & ~blood_pool

    z = s.z_index
    recorder.record('myo_nll_intensity', z, intensity_myo)
    recorder.record('myo_nll_prior', z, neg_log_probability(p))
    recorder.record('myo_distance_cost', z, distance_myo)
    recorder.record('myo_cost', z, source_cost)
    recorder.record('myo_cut', z, myo)
    return myo


def segment_myocardium(
    v: Volume,
    bp: MaskLike,
    refined_prior: ProbabilityMap,
    cfg: PipelineConfig,
    models: Optional[MyoModels] = None,
    recorder: Optional[DebugRecorder] = None,
) -> np.ndarray:
    """
    Segments the myocardium of every slice in the LV range, in parallel over slices.

    Args:
        v (Volume): Normalized volume.
        bp (MaskLike): Blood pool segmentation of the volume.
        refined_prior (ProbabilityMap): Prior refined by the blood pool stage.
        cfg (PipelineConfig): Pipeline settings; `jobs` bounds the worker count.
        models (MyoModels, optional): Precomputed models; fit with `myo_models` if omitted.
        recorder (DebugRecorder, optional): Receives intermediate fields.

    Returns:
        np.ndarray: Boolean myocardium mask shaped like the volume, disjoint from `bp`.
    """
    blood_pool = as_bool(bp)
    if blood_pool.shape != v.shape:
        raise ValueError(f"blood pool shape {blood_pool.shape} does not match volume shape {v.shape}")
    models = models or myo_models(v, refined_prior, cfg, blood_pool)
    start, end = cfg.require_slice_range()

    def run(z: int) -> Tuple[int, np.ndarray]:
        s = Slice(models.matched[z], z_index=z)
        return z, segment_myocardium_slice(s, blood_pool[z], refined_prior.slice(z), models, cfg, recorder)

    myo = np.zeros(v.shape, dtype=bool)
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results: Dict[int, np.ndarray] = dict(pool.map(run, range(start, end + 1)))
    for z, mask in results.items():
        myo[z] = mask
    return myo & ~blood_pool
