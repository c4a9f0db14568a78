"""Small shared helpers."""

import math
import os
import tempfile
from pathlib import Path


def round_half_away(x: float) -> int:
    """Round to the nearest integer with ties away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write a file atomically (temp file + rename) in the target directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
