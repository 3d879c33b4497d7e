import hashlib
import os
import shutil
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

import yaml

from src.utility.logger import get_logger

logger = get_logger(__name__)


def load_config(filepath: str = "config.yaml") -> Optional[Dict[str, Any]]:
    """Loads configuration data from a YAML file.

    This function reads a YAML file and parses its contents into a Python dictionary.
    It uses `yaml.safe_load()`, so JSON configuration files load through the same path.

    Args:
        filepath (str): The path to the YAML or JSON configuration file. Defaults to "config.yaml".

    Returns:
        Optional[Dict[str, Any]]: A dictionary containing the configuration data if the file
        is successfully loaded and parsed. Returns None if the file is not found or if there
        is an error during parsing.
    """
    try:
        with open(filepath, 'r', encoding='utf-8') as file:
            config = yaml.safe_load(file)
            return config if config is not None else {}
    except FileNotFoundError:
        logger.error(f"Configuration file '{filepath}' not found.")
        return None
    except yaml.YAMLError as e:
        logger.error(f"Error parsing configuration file '{filepath}': {e}")
        return None


def file_sha256(file_path: str, chunk_size: int = 1 << 20) -> str:
    """
    Returns the hex SHA-256 digest of a file.

    Args:
        file_path (str): The file to hash.
        chunk_size (int): Bytes read per step.

    Returns:
        str: The hex digest.
    """
    digest = hashlib.sha256()
    with open(file_path, 'rb') as file:
        for chunk in iter(lambda: file.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def directory_sha256(directory: str) -> Dict[str, str]:
    """
    Hashes every file below a directory.

    Returns:
        Dict[str, str]: Relative path (forward slashes, sorted) to SHA-256 digest.
    """
    hashes: Dict[str, str] = {}
    for root, _, files in os.walk(directory):
        for name in sorted(files):
            path = os.path.join(root, name)
            relative = os.path.relpath(path, directory).replace(os.sep, '/')
            hashes[relative] = file_sha256(path)
    return dict(sorted(hashes.items()))


def recreate_directory(directory: str) -> None:
    """
    Deletes the specified directory if it exists and then recreates it.

    Args:
        directory (str): The path of the directory to recreate.
    """
    if os.path.exists(directory):
        shutil.rmtree(directory)
    os.makedirs(directory)


@contextmanager
def stage_timer(timings: Dict[str, float], stage: str) -> Iterator[None]:
    """Records the wall time of the enclosed block under `timings[stage]`."""
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[stage] = timings.get(stage, 0.0) + (time.perf_counter() - start)
