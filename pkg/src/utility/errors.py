"""Exception hierarchy shared by every atlascut package."""
from typing import Optional


class AtlasCutError(Exception):
    """Base class for all atlascut errors."""


class VolumeFormatError(AtlasCutError):
    """A CVOL sidecar is missing, unreadable or describes an unsupported layout."""


class VolumeIntegrityError(VolumeFormatError):
    """A CVOL payload does not hold the number of values its sidecar promises."""


class InvalidVolumeError(AtlasCutError, ValueError):
    """A volume, slice or mask violates its construction invariants."""


class DegenerateInputError(AtlasCutError, ValueError):
    """Input has no usable dynamic range (constant slice, single-valued ROI, ...)."""


class RegistrationError(AtlasCutError):
    """An affine registration could not be carried out."""


class OptimizerAbortError(RegistrationError):
    """The simplex optimizer met a non-finite objective value."""


class SliceUnsegmentableError(AtlasCutError):
    """A slice lacks the prior support or samples needed for segmentation."""

    def __init__(self, z_index: int, reason: str):
        super().__init__(f"slice {z_index}: {reason}")
        self.z_index = z_index
        self.reason = reason


class AtlasBuildError(AtlasCutError):
    """Building the atlas failed for a named subject."""

    def __init__(self, subject: str, reason: str):
        super().__init__(f"atlas build failed for subject '{subject}': {reason}")
        self.subject = subject


class StageError(AtlasCutError):
    """A pipeline stage failed; `stage` records where."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class PhantomSpecError(AtlasCutError, ValueError):
    """A phantom specification cannot be rendered inside its frame."""


class ConfigError(AtlasCutError, ValueError):
    """Configuration is missing a required value or holds an invalid one."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key
