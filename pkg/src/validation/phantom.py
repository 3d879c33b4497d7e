"""
Synthetic short-axis cine phantoms with known blood pool and myocardium labels.

Each slice holds a bright disk (blood pool) inside a dark annulus (myocardium), a
right-ventricle-like crescent on one side and a uniform background, plus Gaussian
noise and a per-slice intensity offset. Frames shrink the ventricle sinusoidally
over the cycle; frame 0 is end-diastole.
"""
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src.utility.errors import PhantomSpecError
from src.utility.logger import get_logger
from src.utility.utility import load_config
from src.volumecore.cvol import save_cine, save_mask
from src.volumecore.volume import LabelMask, Volume

logger = get_logger(__name__)

DEFAULT_SPEC_PATH = os.path.join(os.path.dirname(__file__), 'phantom.yaml')
GT_BP = 'gt_bp'
GT_MYO = 'gt_myo'


class PhantomSpec(BaseModel):
    nx: int = Field(default=128, ge=8)
    ny: int = Field(default=128, ge=8)
    n_slices: int = Field(default=12, ge=1)
    n_frames: int = Field(default=6, ge=1)
    spacing: Tuple[float, float, float] = (1.5, 1.5, 8.0)

    bp_radius_base: float = Field(default=16.0, gt=0)
    bp_radius_apex: float = Field(default=7.0, gt=0)
    myo_thickness: float = Field(default=7.0, ge=2)
    motion_amplitude: float = Field(default=0.15, ge=0, lt=1)

    rv_radius: float = Field(default=20.0, ge=0)
    rv_gap: float = Field(default=2.0, ge=0)

    intensity_bp: float = 200.0
    intensity_myo: float = 80.0
    intensity_bg: float = 40.0
    intensity_rv: float = 160.0

    noise_sigma: float = Field(default=10.0, ge=0)
    slice_offset: float = Field(default=15.0, ge=0)
    jitter: float = Field(default=1.0, ge=0)

    seed: int = 0
    geometry_seed: int = 0

    def bp_radius(self, z: int) -> float:
        """End-diastolic blood pool radius of slice z, tapering linearly towards the apex."""
        if self.n_slices == 1:
            return self.bp_radius_base
        t = z / (self.n_slices - 1)
        return (1.0 - t) * self.bp_radius_base + t * self.bp_radius_apex

    def rv_offset(self) -> float:
        """Largest distance from the ventricle center to the crescent disk center."""
        epicardium = max(self.bp_radius_base, self.bp_radius_apex) + self.myo_thickness
        return epicardium + self.rv_gap + 0.5 * self.rv_radius

    def check_geometry(self) -> None:
        """
        Raises:
            PhantomSpecError: If a structure can leave the frame.
        """
        cx, cy = (self.nx - 1) / 2.0, (self.ny - 1) / 2.0
        outer = max(self.bp_radius_base, self.bp_radius_apex) + self.myo_thickness + self.jitter
        if outer >= min(cx, cy):
            raise PhantomSpecError(
                f"ventricle radius {outer:.1f} px does not fit a {self.nx}x{self.ny} frame"
            )
        if self.rv_radius > 0 and self.rv_offset() + self.rv_radius + self.jitter >= cx:
            raise PhantomSpecError(
                f"right ventricle crescent reaches {self.rv_offset() + self.rv_radius:.1f} px from the center, "
                f"beyond the {cx:.1f} px half-width"
            )


@dataclass(frozen=True)
class Phantom:
    frames: List[Volume]
    gt_bp: LabelMask
    gt_myo: LabelMask
    slice_range: Tuple[int, int]


def load_phantom_spec(path: Optional[str] = None) -> PhantomSpec:
    """
    Reads a phantom spec from YAML/JSON, the packaged default when `path` is None.

    Raises:
        PhantomSpecError: Unreadable file, invalid values or oversize geometry.
    """
    path = path or DEFAULT_SPEC_PATH
    data = load_config(path)
    if data is None:
        raise PhantomSpecError(f"cannot read phantom spec '{path}'")
    try:
        spec = PhantomSpec(**data)
    except ValidationError as e:
        raise PhantomSpecError(f"invalid phantom spec '{path}': {e}")
    spec.check_geometry()
    return spec


def _frame_scale(spec: PhantomSpec, frame: int) -> float:
    phase = 2.0 * np.pi * frame / spec.n_frames
    return 1.0 - spec.motion_amplitude * (1.0 - np.cos(phase)) / 2.0


def _slice_labels(spec: PhantomSpec, z: int, scale: float, center: np.ndarray) -> np.ndarray:
    """0 background, 1 blood pool, 2 myocardium, 3 crescent."""
    yy, xx = np.mgrid[0:spec.ny, 0:spec.nx].astype(np.float64)
    r_bp = spec.bp_radius(z) * scale
    r_epi = r_bp + spec.myo_thickness
    d = np.hypot(xx - center[0], yy - center[1])
    labels = np.zeros((spec.ny, spec.nx), dtype=np.uint8)
    if spec.rv_radius > 0:
        rv_center = center - np.array([r_epi + spec.rv_gap + 0.5 * spec.rv_radius, 0.0])
        rv = np.hypot(xx - rv_center[0], yy - rv_center[1]) <= spec.rv_radius
        labels[rv & (d > r_epi + spec.rv_gap)] = 3
    labels[d <= r_epi] = 2
    labels[d <= r_bp] = 1
    return labels


def generate_phantom(spec: PhantomSpec) -> Phantom:
    """
    Renders a deterministic cine phantom with its end-diastolic labels.

    Geometry (in-plane jitter) depends only on `geometry_seed`; intensity offsets and
    noise depend on `seed`.

    Raises:
        PhantomSpecError: If the geometry exceeds the frame.
    """
    spec.check_geometry()
    geometry_rng = np.random.default_rng(spec.geometry_seed)
    jitter = geometry_rng.uniform(-spec.jitter, spec.jitter, size=(spec.n_slices, 2))
    rng = np.random.default_rng(spec.seed)
    offsets = rng.uniform(-spec.slice_offset, spec.slice_offset, size=spec.n_slices)

    frame_center = np.array([(spec.nx - 1) / 2.0, (spec.ny - 1) / 2.0])
    palette = np.array(
        [spec.intensity_bg, spec.intensity_bp, spec.intensity_myo, spec.intensity_rv], dtype=np.float64
    )
    frames: List[Volume] = []
    gt_bp = np.zeros((spec.n_slices, spec.ny, spec.nx), dtype=np.uint8)
    gt_myo = np.zeros_like(gt_bp)
    for frame in range(spec.n_frames):
        scale = _frame_scale(spec, frame)
        voxels = np.zeros((spec.n_slices, spec.ny, spec.nx), dtype=np.float64)
        for z in range(spec.n_slices):
            labels = _slice_labels(spec, z, scale, frame_center + jitter[z])
            voxels[z] = palette[labels] + offsets[z]
            if frame == 0:
                gt_bp[z] = labels == 1
                gt_myo[z] = labels == 2
        if spec.noise_sigma > 0:
            voxels += rng.normal(0.0, spec.noise_sigma, size=voxels.shape)
        frames.append(Volume(voxels.astype(np.float32), spec.spacing, frame))

    logger.info(
        f"phantom rendered: {spec.n_slices} slices of {spec.nx}x{spec.ny}, {spec.n_frames} frames, "
        f"noise {spec.noise_sigma}, seed {spec.seed}"
    )
    return Phantom(
        frames=frames,
        gt_bp=LabelMask(gt_bp, spec.spacing),
        gt_myo=LabelMask(gt_myo, spec.spacing),
        slice_range=(0, spec.n_slices - 1),
    )


def save_phantom(phantom: Phantom, directory: str) -> None:
    """Writes the cine frames plus gt_bp and gt_myo masks into one directory."""
    save_cine(phantom.frames, directory)
    save_mask(phantom.gt_bp, os.path.join(directory, GT_BP))
    save_mask(phantom.gt_myo, os.path.join(directory, GT_MYO))
