import hashlib
import json
from pathlib import Path
from typing import Dict, Iterable, List

import aiofiles

from exodyad.utils.types import PathType

FLOAT_FORMAT = '%.17g'


def format_float(value: float) -> str:
    """Formats a float so that parsing it back gives the same bits."""
    return FLOAT_FORMAT % value


def file_digest(path: PathType, algorithm: str = 'sha256', chunk_size: int = 1 << 16) -> str:
    """Gets the hex digest of a file's contents.

    Args:
        path (PathType): File to hash
        algorithm (str): Any algorithm known to hashlib
        chunk_size (int): Bytes read per iteration

    Returns:
        (str): Hex digest
    """
    digest = hashlib.new(algorithm)
    with open(path, 'rb') as f:
        while chunk := f.read(chunk_size):
            digest.update(chunk)
    return digest.hexdigest()


def get_file_inventory(paths: Iterable[PathType]) -> List[Dict[str, object]]:
    """Lists existing files with their size and SHA-256, sorted by path."""
    inventory = []
    for path in sorted(Path(p) for p in paths):
        if path.is_file():
            inventory.append({'path': str(path), 'bytes': path.stat().st_size, 'sha256': file_digest(path)})
    return inventory


async def write_json(path: PathType, data):
    """
    Asynchronously writes JSON data to a file.

    Args:
        path (PathType): The path of the file where the JSON data should be written.
        data (Any): The data to be written in JSON format.
    """
    async with aiofiles.open(path, mode='w') as f:
        await f.write(json.dumps(data, indent=2, sort_keys=True, default=str))


async def write_text(path: PathType, text: str):
    """Asynchronously writes text to a file."""
    async with aiofiles.open(path, mode='w', newline='') as f:
        await f.write(text)
