"""Optional dump of intermediate per-slice fields as CVOL volumes."""
import os
import threading
from typing import Dict, Optional, Tuple

import numpy as np

from src.utility.logger import get_logger
from src.volumecore.cvol import save_volume
from src.volumecore.volume import Volume

logger = get_logger(__name__)


class DebugRecorder:
    """
    Collects 2D fields keyed by name and slice index; `flush` writes one float32
    volume per name, slices never recorded left at zero.
    """

    def __init__(self, directory: Optional[str]):
        self.directory = directory
        self._fields: Dict[str, Dict[int, np.ndarray]] = {}
        self._lock = threading.Lock()

    @property
    def enabled(self) -> bool:
        return self.directory is not None

    def record(self, name: str, z: int, values: np.ndarray) -> None:
        if not self.enabled:
            return
        with self._lock:
            self._fields.setdefault(name, {})[z] = np.array(values, dtype=np.float32, copy=True)

    def names(self):
        return sorted(self._fields)

    def flush(self, shape: Tuple[int, int, int], spacing=(1.0, 1.0, 1.0)) -> int:
        """
        Writes every recorded field into the dump directory.

        Returns:
            int: Number of volumes written.
        """
        if not self.enabled or not self._fields:
            return 0
        os.makedirs(self.directory, exist_ok=True)
        with self._lock:
            fields = {name: dict(slices) for name, slices in self._fields.items()}
        for name, slices in sorted(fields.items()):
            volume = np.zeros(shape, dtype=np.float32)
            for z, values in slices.items():
                if 0 <= z < shape[0] and values.shape == shape[1:]:
                    volume[z] = np.nan_to_num(values, nan=0.0, posinf=0.0, neginf=0.0)
            save_volume(Volume(volume, spacing), os.path.join(self.directory, name))
        logger.info(f"wrote {len(fields)} debug fields to {self.directory}")
        return len(fields)
