"""
Average appearance atlas and myocardial probabilistic atlas.

Every subject is histogram matched to the reference volume, registered to it with a
3D affine transform, and resampled onto the reference grid (intensities trilinear,
labels nearest-neighbour). The atlas is the voxelwise mean of the results.
"""
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.imageops.threshold import match_volume_histogram
from src.registration.register import RegistrationResult, RegistrationSettings, register_affine
from src.registration.transform import resample, resample_array
from src.utility.errors import AtlasBuildError, AtlasCutError, InvalidVolumeError, VolumeFormatError
from src.utility.logger import get_logger
from src.volumecore.cvol import load_volume, save_volume
from src.volumecore.volume import LabelMask, Volume

logger = get_logger(__name__)

PROBABILITY_TOLERANCE = 1e-9
META_FILE = 'meta.json'


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel prior in [0, 1]; values shaped (ny, nx) or (nz, ny, nx)."""
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim not in (2, 3):
            raise InvalidVolumeError(f"probability map must be 2D or 3D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidVolumeError("probability map contains NaN or Inf")
        if values.size and (values.min() < -PROBABILITY_TOLERANCE or values.max() > 1 + PROBABILITY_TOLERANCE):
            raise InvalidVolumeError(
                f"probabilities must lie in [0, 1], got range [{values.min():.6g}, {values.max():.6g}]"
            )
        np.clip(values, 0.0, 1.0, out=values)
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def clamped(cls, values: np.ndarray) -> 'ProbabilityMap':
        return cls(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0))

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(reversed(self.values.shape))

    def slice(self, z: int) -> 'ProbabilityMap':
        if self.values.ndim != 3:
            raise ValueError("slice() needs a 3D probability map")
        if not 0 <= z < self.values.shape[0]:
            raise IndexError(f"slice index {z} out of range for {self.values.shape[0]} slices")
        return ProbabilityMap(self.values[z])


@dataclass(frozen=True)
class Atlas:
    appearance: Volume
    prior: ProbabilityMap
    n_subjects: int
    reference_id: str = 'reference'
    settings: Optional[Dict[str, Any]] = None

    def __post_init__(self) -> None:
        if self.n_subjects < 1:
            raise InvalidVolumeError(f"an atlas needs at least one subject, got {self.n_subjects}")
        if self.prior.values.shape != self.appearance.shape:
            raise InvalidVolumeError(
                f"atlas prior {self.prior.dims} and appearance {self.appearance.dims} dims differ"
            )


@dataclass(frozen=True)
class AlignedSubject:
    name: str
    volume: np.ndarray
    labels: np.ndarray
    registration: RegistrationResult


def align_subject(
    reference: Volume,
    name: str,
    volume: Volume,
    labels: LabelMask,
    settings: Optional[RegistrationSettings] = None,
) -> AlignedSubject:
    """
    Histogram matches one subject to the reference and maps it onto the reference grid.

    Raises:
        AtlasBuildError: If the subject cannot be matched or registered.
    """
    if labels.labels.shape != volume.shape:
        raise AtlasBuildError(name, f"label dims {labels.dims} differ from volume dims {volume.dims}")
    try:
        matched = match_volume_histogram(volume, reference)
        result = register_affine(reference, matched, settings=settings, mode='volume3d')
        warped = resample(matched, result.transform, reference.dims)
        warped_labels = resample(labels, result.transform, reference.dims)
    except (AtlasCutError, ValueError) as e:
        raise AtlasBuildError(name, str(e)) from e
    logger.info(
        f"subject '{name}' registered: ssd={result.final_metric:.4g}, iterations={result.iterations}",
        extra={'subject': name, 'ssd': result.final_metric, 'converged': result.converged},
    )
    return AlignedSubject(name, np.asarray(warped.voxels, dtype=np.float64), warped_labels.array, result)


def build_atlas(
    reference: Volume,
    subjects: Sequence[Tuple[Volume, LabelMask]],
    names: Optional[Sequence[str]] = None,
    settings: Optional[RegistrationSettings] = None,
    jobs: int = 1,
    reference_id: str = 'reference',
) -> Atlas:
    """
    Builds the average appearance atlas and the myocardial probabilistic atlas.

    Args:
        reference (Volume): End-diastolic reference volume, already normalized.
        subjects: (volume, myocardium labels) pairs at end-diastole.
        names (Sequence[str], optional): Subject identifiers for diagnostics.
        settings (RegistrationSettings, optional): 3D registration settings.
        jobs (int): Subjects registered concurrently.
        reference_id (str): Identifier stored in the atlas metadata.

    Returns:
        Atlas: Voxelwise means of the aligned subjects, reduced in subject order.

    Raises:
        AtlasBuildError: If there are no subjects or one of them fails to register.
    """
    if not subjects:
        raise AtlasBuildError(reference_id, "no subjects given")
    names = list(names) if names is not None else [f'subject_{i:03d}' for i in range(len(subjects))]
    if len(names) != len(subjects):
        raise ValueError(f"{len(names)} names for {len(subjects)} subjects")

    def run(index: int) -> AlignedSubject:
        volume, labels = subjects[index]
        return align_subject(reference, names[index], volume, labels, settings)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        aligned: List[AlignedSubject] = list(pool.map(run, range(len(subjects))))

    appearance = np.zeros(reference.shape, dtype=np.float64)
    prior = np.zeros(reference.shape, dtype=np.float64)
    for subject in aligned:
        appearance += subject.volume
        prior += subject.labels
    n = len(aligned)
    logger.info(f"atlas built from {n} subjects on reference '{reference_id}'")
    return Atlas(
        appearance=reference.with_voxels((appearance / n).astype(np.float32)),
        prior=ProbabilityMap.clamped(prior / n),
        n_subjects=n,
        reference_id=reference_id,
        settings=asdict(settings) if settings is not None else None,
    )


def propagate_prior(
    atlas: Atlas,
    test: Volume,
    settings: Optional[RegistrationSettings] = None,
) -> ProbabilityMap:
    """
    Registers the atlas appearance onto a test volume and carries the myocardial
    prior along with trilinear interpolation.

    Returns:
        ProbabilityMap: The prior on the test grid, clamped to [0, 1].

    Raises:
        RegistrationError: If the registration aborts.
    """
    result = register_affine(test, atlas.appearance, settings=settings, mode='volume3d')
    values = resample_array(atlas.prior.values, result.transform, test.shape, order=1)
    logger.info(f"prior propagated: ssd={result.final_metric:.4g}, iterations={result.iterations}")
    return ProbabilityMap.clamped(values)


def save_atlas(atlas: Atlas, directory: str) -> None:
    """Writes appearance.{json,raw}, prior.{json,raw} and meta.json into `directory`."""
    os.makedirs(directory, exist_ok=True)
    save_volume(atlas.appearance, os.path.join(directory, 'appearance'))
    prior = atlas.appearance.with_voxels(atlas.prior.values.astype(np.float32))
    save_volume(prior, os.path.join(directory, 'prior'))
    meta = {
        'n_subjects': atlas.n_subjects,
        'reference_id': atlas.reference_id,
        'settings': atlas.settings or {},
    }
    with open(os.path.join(directory, META_FILE), 'w', encoding='utf-8') as file:
        json.dump(meta, file, indent=2)


def load_atlas(directory: str) -> Atlas:
    """
    Reads an atlas directory written by `save_atlas`.

    Raises:
        VolumeFormatError: If meta.json or one of the volumes is missing or corrupt.
    """
    meta_path = os.path.join(directory, META_FILE)
    try:
        with open(meta_path, 'r', encoding='utf-8') as file:
            meta = json.load(file)
    except (OSError, json.JSONDecodeError) as e:
        raise VolumeFormatError(f"cannot read atlas metadata {meta_path}: {e}")
    appearance = load_volume(os.path.join(directory, 'appearance'))
    prior = load_volume(os.path.join(directory, 'prior'))
    return Atlas(
        appearance=appearance,
        prior=ProbabilityMap.clamped(prior.voxels),
        n_subjects=int(meta.get('n_subjects', 0)),
        reference_id=str(meta.get('reference_id', 'reference')),
        settings=meta.get('settings') or None,
    )
