"""End-to-end segmentation: prior propagation, blood pool, then myocardium."""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from src.atlas.atlas import Atlas, ProbabilityMap, propagate_prior
from src.pipeline.blood_pool import segment_bp_volume
from src.pipeline.config import PipelineConfig
from src.pipeline.debug import DebugRecorder
from src.pipeline.myocardium import myo_models, segment_myocardium
from src.pipeline.roi import detect_roi_xy
from src.utility.errors import AtlasCutError, DegenerateInputError, StageError
from src.utility.logger import get_logger, get_loggers
from src.utility.utility import stage_timer
from src.volumecore.preprocess import RoiBox, crop_volume, normalize_volume
from src.volumecore.volume import LabelMask, Volume

logger = get_logger(__name__)
monitoring = get_loggers('monitoring')

T = TypeVar('T')


@dataclass(frozen=True)
class SegmentationResult:
    bp: LabelMask
    myo: LabelMask
    iterations_per_slice: Dict[int, int]
    converged: Dict[int, bool]
    prior_final: ProbabilityMap
    prior_initial: ProbabilityMap
    order: List[int]
    unsegmentable: Dict[int, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(self.bp.array & self.myo.array):
            raise ValueError("blood pool and myocardium masks overlap")


@dataclass(frozen=True)
class PreparedVolume:
    volume: Volume
    roi: RoiBox
    full_dims: Tuple[int, int, int]
    skipped_slices: List[int]


def prepare_volume(frames: Sequence[Volume], cfg: PipelineConfig) -> PreparedVolume:
    """
    Selects the end-diastolic frame, crops it to the motion ROI and normalizes each slice.

    ROI detection runs only when enabled and more than one frame is available;
    otherwise the full frame is kept.
    """
    if not frames:
        raise DegenerateInputError("no frames to segment")
    if cfg.ed_frame >= len(frames):
        raise IndexError(f"ed_frame {cfg.ed_frame} out of range for {len(frames)} frames")
    volume = frames[cfg.ed_frame]
    nx, ny, _ = volume.dims
    if cfg.detect_roi and len(frames) > 1:
        roi = detect_roi_xy(frames)
    else:
        roi = RoiBox.full(nx, ny)
    normalized, skipped = normalize_volume(crop_volume(volume, roi))
    return PreparedVolume(normalized, roi, volume.dims, skipped)


def _stage(name: str, timings: Dict[str, float], action: Callable[[], T]) -> T:
    with stage_timer(timings, name):
        try:
            return action()
        except StageError:
            raise
        except (AtlasCutError, ValueError, IndexError) as e:
            logger.error(f"stage '{name}' failed: {e}")
            raise StageError(name, e) from e


def run_pipeline(
    atlas: Atlas,
    test: Volume,
    cfg: PipelineConfig,
    recorder: Optional[DebugRecorder] = None,
) -> SegmentationResult:
    """
    Segments blood pool and myocardium of a preprocessed test volume.

    Args:
        atlas (Atlas): Appearance and myocardial prior atlas.
        test (Volume): Cropped, normalized end-diastolic volume.
        cfg (PipelineConfig): Pipeline settings; must carry slice_range.
        recorder (DebugRecorder, optional): Receives intermediate fields; flushed even
            when a stage fails.

    Returns:
        SegmentationResult: Masks on the test grid, refined prior, per-slice iteration
        counts and stage timings.

    Raises:
        ConfigError: If slice_range is missing.
        StageError: If a stage fails; `stage` names it.
    """
    cfg.require_slice_range()
    recorder = recorder or DebugRecorder(None)
    timings: Dict[str, float] = {}
    try:
        prior = _stage(
            'propagate_prior', timings,
            lambda: propagate_prior(atlas, test, cfg.registration.volume.settings()),
        )
        for z in range(test.shape[0]):
            recorder.record('prior_initial', z, prior.values[z])
        bp_result = _stage('blood_pool', timings, lambda: segment_bp_volume(test, prior, cfg, recorder))
        models = _stage(
            'myocardium_models', timings,
            lambda: myo_models(test, bp_result.refined_prior, cfg, bp_result.bp),
        )
        myo = _stage(
            'myocardium', timings,
            lambda: segment_myocardium(test, bp_result.bp, bp_result.refined_prior, cfg, models, recorder),
        )
    finally:
        recorder.flush(test.shape, test.spacing)

    monitoring.metrics(
        {f'{stage}_seconds': round(seconds, 4) for stage, seconds in timings.items()},
        message='pipeline stage timings',
    )
    return SegmentationResult(
        bp=LabelMask(bp_result.bp, test.spacing),
        myo=LabelMask(myo, test.spacing),
        iterations_per_slice=bp_result.iterations,
        converged=bp_result.converged,
        prior_final=bp_result.refined_prior,
        prior_initial=prior,
        order=bp_result.order,
        unsegmentable=bp_result.unsegmentable,
        timings=timings,
    )
