"""
Blood pool segmentation: iterative graph cuts with an atlas-derived shape prior.

Each iteration cuts the slice with the current intensity models and prior, then
registers the prior's blood pool shape onto the cut (via signed distance maps) so
that the prior follows the segmented blood pool. Pixels already labeled blood pool
stay locked for the following iterations.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.atlas.atlas import ProbabilityMap
from src.graphcut.energy import EnergyField, data_term
from src.graphcut.solver import min_cut
from src.imageops.distance import signed_distance
from src.imageops.morphology import (
    convex_hull_mask,
    erode_by_circumscribed_fraction,
    erode_disk,
    fill_holes,
    inner_component,
)
from src.imageops.threshold import otsu_threshold
from src.pipeline.config import PipelineConfig
from src.pipeline.debug import DebugRecorder
from src.registration.register import default_init, register_affine
from src.registration.transform import parameter_distance, resample_array
from src.stats.gaussian import GaussianMixture, fit_gaussian, fit_gmm, neg_log_likelihood_field, neg_log_probability
from src.utility.errors import AtlasCutError, DegenerateInputError, SliceUnsegmentableError
from src.utility.logger import get_logger, get_loggers
from src.volumecore.volume import MaskLike, Slice, Volume, as_bool, extract_slice

logger = get_logger(__name__)
monitoring = get_loggers('monitoring')


@dataclass(frozen=True)
class PriorStructures:
    """
    Blood pool structures derived from one slice of the myocardial prior.

    Attributes:
        bp_bg_map: 1 - prior / max(prior); high inside the ring and outside the heart.
        confident_roi: Inner component of bp_bg_map > 0.5, the high-confidence BP ROI.
        init_bp: Pixels of confident_roi brighter than its Otsu threshold.
        bp_roi: Filled myocardial region (prior > threshold), eroded.
    """
    bp_bg_map: np.ndarray
    confident_roi: np.ndarray
    init_bp: np.ndarray
    bp_roi: np.ndarray

    @property
    def bp_probability(self) -> np.ndarray:
        """Pr(f_p = BP): the inverted prior restricted to the eroded BP ROI."""
        return self.bp_bg_map * self.bp_roi


@dataclass(frozen=True)
class BpSliceResult:
    z_index: int
    bp: np.ndarray
    refined_prior: ProbabilityMap
    iterations: int
    converged: bool
    parameter_changes: Tuple[float, ...] = ()


@dataclass(frozen=True)
class BpVolumeResult:
    bp: np.ndarray
    refined_prior: ProbabilityMap
    order: List[int]
    iterations: Dict[int, int] = field(default_factory=dict)
    converged: Dict[int, bool] = field(default_factory=dict)
    unsegmentable: Dict[int, str] = field(default_factory=dict)


def bp_prior_structures(
    s: Slice,
    myo_prior: ProbabilityMap,
    prior_threshold: float = 0.5,
    erosion_fraction: float = 0.15,
) -> PriorStructures:
    """
    Inverts the myocardial prior into blood pool structures for one slice.

    Args:
        s (Slice): Normalized slice, used for the Otsu split of the confident ROI.
        myo_prior (ProbabilityMap): 2D myocardial prior of the slice.
        prior_threshold (float): Threshold on both the inverted map and the prior.
        erosion_fraction (float): Erosion of the BP ROI, relative to its enclosing radius.

    Returns:
        PriorStructures: The inverted map and the derived masks.

    Raises:
        SliceUnsegmentableError: When the prior is empty or a derived region vanishes.
    """
    prior = np.asarray(myo_prior.values, dtype=np.float64)
    if prior.shape != s.pixels.shape:
        raise ValueError(f"prior shape {prior.shape} does not match slice shape {s.pixels.shape}")
    peak = float(prior.max())
    if peak <= 0:
        raise SliceUnsegmentableError(s.z_index, "myocardial prior is empty")

    bp_bg_map = 1.0 - prior / peak
    confident_roi = inner_component(bp_bg_map > prior_threshold, exclude_border=True)
    if not confident_roi.any():
        raise SliceUnsegmentableError(s.z_index, f"inverted prior has no region above {prior_threshold}")

    try:
        threshold = otsu_threshold(s.pixels, confident_roi)
        init_bp = confident_roi & (s.pixels > threshold)
    except DegenerateInputError:
        init_bp = confident_roi.copy()

    myo_region = prior > prior_threshold
    if not myo_region.any():
        raise SliceUnsegmentableError(s.z_index, f"prior has no pixel above {prior_threshold}")
    bp_roi = erode_by_circumscribed_fraction(fill_holes(myo_region), erosion_fraction)
    if not bp_roi.any():
        raise SliceUnsegmentableError(s.z_index, "eroded BP ROI is empty")
    return PriorStructures(bp_bg_map, confident_roi, init_bp, bp_roi)


def bp_models(
    s: Slice,
    init_bp: MaskLike,
    myo_prior: ProbabilityMap,
    low_threshold: float = 0.1,
    bg_components: int = 2,
    seed: int = 0,
) -> Tuple[GaussianMixture, GaussianMixture]:
    """
    Fits the blood pool Gaussian and the background mixture of one slice.

    The background samples are the pixels of fill_holes(prior > low_threshold)
    outside the blood pool.

    Raises:
        SliceUnsegmentableError: If either sample set has fewer than two pixels.
    """
    bp = as_bool(init_bp)
    region = fill_holes(np.asarray(myo_prior.values) > low_threshold) & ~bp
    bp_samples = s.pixels[bp]
    bg_samples = s.pixels[region]
    if bp_samples.size < 2:
        raise SliceUnsegmentableError(s.z_index, f"only {bp_samples.size} blood pool samples")
    if bg_samples.size < max(2, bg_components):
        raise SliceUnsegmentableError(s.z_index, f"only {bg_samples.size} background samples")
    return fit_gaussian(bp_samples), fit_gmm(bg_samples, bg_components, seed)


def _slice_energy(
    s: Slice,
    tau: int,
    bp_model: GaussianMixture,
    bg_model: GaussianMixture,
    bp_probability: np.ndarray,
) -> Tuple[EnergyField, Dict[str, np.ndarray]]:
    nll_bp = neg_log_likelihood_field(s, bp_model).values
    nll_bg = neg_log_likelihood_field(s, bg_model).values
    prior_bp = neg_log_probability(bp_probability)
    prior_bg = neg_log_probability(1.0 - bp_probability)
    source_cost = data_term(tau, nll_bp, prior_bp)
    sink_cost = data_term(tau, nll_bg, prior_bg)
    fields = {'bp_nll_intensity': nll_bp, 'bp_nll_prior': prior_bp, 'bp_cost': source_cost, 'bg_cost': sink_cost}
    return EnergyField.from_image(source_cost, sink_cost, s.pixels, tau), fields


def segment_bp_slice(
    s: Slice,
    myo_prior: ProbabilityMap,
    locked: Optional[MaskLike],
    cfg: PipelineConfig,
    recorder: Optional[DebugRecorder] = None,
) -> BpSliceResult:
    """
    Segments the blood pool of one slice by iterated graph cuts and prior refinement.

    Iteration tau: cut with the current models and prior (locked pixels forced to BP),
    register the prior's BP signed distance map onto the cut's, starting from the
    previous refinement transform, resample the input prior through the result, refit
    the models on the cut and lock it. Stops once the refinement transform moves by
    less than `cfg.convergence_tol` (translations in normalized grid coordinates) or
    after `cfg.max_iterations`. A registration failure ends the loop with a warning
    and keeps the last cut.

    Args:
        s (Slice): Normalized slice.
        myo_prior (ProbabilityMap): 2D myocardial prior of the slice.
        locked (MaskLike, optional): Pixels forced to BP, e.g. from a neighbouring slice.
        cfg (PipelineConfig): Pipeline settings.
        recorder (DebugRecorder, optional): Receives intermediate fields.

    Returns:
        BpSliceResult: The convex hull of the last cut, the refined prior and the
        iteration count.

    Raises:
        SliceUnsegmentableError: If prior structures, models or the first cut are empty.
    """
    recorder = recorder or DebugRecorder(None)
    z = s.z_index
    initial = ProbabilityMap(myo_prior.values)
    structures = bp_prior_structures(s, initial, cfg.prior_threshold, cfg.erosion_fraction)
    bp_model, bg_model = bp_models(
        s, structures.init_bp, initial, cfg.low_threshold, cfg.bp_bg_components, cfg.seed
    )
    recorder.record('bp_bg_map', z, structures.bp_bg_map)
    recorder.record('bp_roi', z, structures.bp_roi)
    recorder.record('init_bp', z, structures.init_bp)

    lock = np.zeros(s.pixels.shape, dtype=bool) if locked is None else as_bool(locked) & structures.bp_roi
    settings = cfg.registration.refinement.settings()
    moving = signed_distance(structures.confident_roi).values
    transform = default_init(s.pixels.shape, s.pixels.shape)
    prior = initial

    cut: Optional[np.ndarray] = None
    changes: List[float] = []
    converged = False
    iterations = 0
    for tau in range(1, cfg.max_iterations + 1):
        energy, fields = _slice_energy(s, tau, bp_model, bg_model, structures.bp_probability)
        labeling = min_cut(energy, lock)
        if not labeling.any():
            if cut is None:
                raise SliceUnsegmentableError(z, "first graph cut labeled no blood pool")
            logger.warning(f"slice {z}: cut at iteration {tau} is empty; keeping iteration {tau - 1}")
            break
        cut = labeling
        iterations = tau
        for name, values in fields.items():
            recorder.record(f'{name}_it{tau}', z, values)
        recorder.record(f'bp_cut_it{tau}', z, cut)

        try:
            fixed = signed_distance(cut).values
            result = register_affine(fixed, moving, init=transform, settings=settings, mode='slice2d')
            refined_values = resample_array(initial.values, result.transform, s.pixels.shape, order=1)
            refined = ProbabilityMap.clamped(refined_values)
            refined_structures = bp_prior_structures(s, refined, cfg.prior_threshold, cfg.erosion_fraction)
        except (AtlasCutError, ValueError) as e:
            logger.warning(f"slice {z}: prior refinement failed at iteration {tau} ({e}); keeping the last cut")
            break

        change = parameter_distance(result.transform, transform, extent=s.dims)
        changes.append(change)
        transform = result.transform
        prior = refined
        structures = refined_structures
        recorder.record(f'prior_it{tau}', z, prior.values)

        try:
            bp_model, bg_model = bp_models(s, cut, prior, cfg.low_threshold, cfg.bp_bg_components, cfg.seed)
        except SliceUnsegmentableError as e:
            logger.debug(f"slice {z}: keeping previous intensity models ({e.reason})")
        lock = lock | cut

        if change < cfg.convergence_tol:
            converged = True
            break

    bp = convex_hull_mask(cut)
    logger.debug(f"slice {z}: {iterations} iterations, converged={converged}, changes={changes}")
    return BpSliceResult(z, bp, prior, iterations, converged, tuple(changes))


def slice_order(slice_range: Tuple[int, int]) -> List[int]:
    """Mid-slice first, then alternately one slice below and above, moving outward."""
    start, end = slice_range
    mid = (start + end) // 2
    order = [mid]
    for step in range(1, end - start + 1):
        for z in (mid - step, mid + step):
            if start <= z <= end:
                order.append(z)
    return order


def segment_bp_volume(
    v: Volume,
    prior: ProbabilityMap,
    cfg: PipelineConfig,
    recorder: Optional[DebugRecorder] = None,
) -> BpVolumeResult:
    """
    Segments the blood pool slice by slice from the mid-slice outward.

    Each slice after the mid-slice locks the blood pool of its already segmented
    neighbour (towards the mid-slice), eroded by `cfg.lock_erosion` pixels, unless
    `cfg.inter_slice_lock` is off.
    Unsegmentable slices are recorded and left empty.

    Returns:
        BpVolumeResult: BP masks, refined prior volume, processing order and
        per-slice iteration counts.
    """
    start, end = cfg.require_slice_range()
    nz = v.shape[0]
    if end >= nz:
        raise IndexError(f"slice_range {cfg.slice_range} exceeds volume with {nz} slices")
    if prior.values.shape != v.shape:
        raise ValueError(f"prior dims {prior.dims} do not match volume dims {v.dims}")

    mid = (start + end) // 2
    bp = np.zeros(v.shape, dtype=bool)
    refined = np.array(prior.values, copy=True)
    order = slice_order((start, end))
    iterations: Dict[int, int] = {}
    converged: Dict[int, bool] = {}
    unsegmentable: Dict[int, str] = {}

    for z in order:
        neighbour = z + 1 if z < mid else z - 1
        locked = None
        if cfg.inter_slice_lock and z != mid and bp[neighbour].any():
            locked = erode_disk(bp[neighbour], cfg.lock_erosion)
        try:
            slice_result = segment_bp_slice(extract_slice(v, z), prior.slice(z), locked, cfg, recorder)
        except SliceUnsegmentableError as e:
            logger.warning(f"slice {z} skipped: {e.reason}")
            unsegmentable[z] = e.reason
            continue
        bp[z] = slice_result.bp
        refined[z] = slice_result.refined_prior.values
        iterations[z] = slice_result.iterations
        converged[z] = slice_result.converged
        monitoring.metrics(
            {'z': z, 'iterations': slice_result.iterations, 'converged': slice_result.converged},
            message='bp slice segmented',
        )

    logger.info(f"blood pool order: {order}")
    return BpVolumeResult(bp, ProbabilityMap(refined), order, iterations, converged, unsegmentable)
