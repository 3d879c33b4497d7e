"""Reproducibility record written by every command."""
import os
import platform
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from src import __version__
from src.utility.utility import directory_sha256, file_sha256

MANIFEST_FILE = 'manifest.json'


class RunManifest(BaseModel):
    command: str
    arguments: List[str] = []
    config: Dict[str, Any] = {}
    input_hashes: Dict[str, str] = {}
    seed: Optional[int] = None
    version: str = __version__
    python: str = Field(default_factory=platform.python_version)
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    wall_time: float = 0.0
    timings: Dict[str, float] = {}
    outputs: List[str] = []
    details: Dict[str, Any] = {}
    status: str = 'ok'
    error: Optional[str] = None

    def hash_inputs(self, label: str, path: str) -> None:
        """Adds sha256 digests of a file, or of every file below a directory, under `label`."""
        if os.path.isdir(path):
            for relative, digest in directory_sha256(path).items():
                self.input_hashes[f'{label}/{relative}'] = digest
        elif os.path.isfile(path):
            self.input_hashes[label] = file_sha256(path)

    def write(self, directory: str) -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, MANIFEST_FILE)
        with open(path, 'w', encoding='utf-8') as file:
            file.write(self.model_dump_json(indent=2))
        return path
