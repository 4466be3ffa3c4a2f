"""
File operation context managers for scenecam
Every artifact (features, checkpoints, WAVs, PNGs, reports) goes through here so
a failed run never leaves a partial file behind.
"""

import logging
import os
import shutil
import tempfile
from collections.abc import Generator
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any

logger = logging.getLogger(__name__)


@contextmanager
def safe_file_write(
    filepath: str | Path,
    mode: str = "w",
    encoding: str = "utf-8",
) -> Generator[IO[Any], None, None]:
    """
    Write to a file atomically: data goes to a temporary file in the same
    directory which replaces the target only after the block succeeds.

    Args:
        filepath: Path to the file
        mode: Write mode ('w' or 'wb')
        encoding: Text encoding (ignored for binary mode)
    """
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)

    temp_fd, temp_path = tempfile.mkstemp(dir=filepath.parent, prefix=f".{filepath.name}.", suffix=".tmp")
    os.close(temp_fd)
    temp_file: Path | None = Path(temp_path)

    try:
        if "b" in mode:
            with open(temp_file, mode) as f:
                yield f
                f.flush()
                os.fsync(f.fileno())
        else:
            with open(temp_file, mode, encoding=encoding) as f:
                yield f
                f.flush()
                os.fsync(f.fileno())

        # Atomic rename
        temp_file.replace(filepath)
        temp_file = None
    finally:
        if temp_file is not None and temp_file.exists():
            temp_file.unlink()


def write_bytes_atomic(filepath: str | Path, data: bytes) -> Path:
    """Atomically write a complete byte payload."""
    with safe_file_write(filepath, "wb") as f:
        f.write(data)
    return Path(filepath)


def write_text_atomic(filepath: str | Path, text: str) -> Path:
    with safe_file_write(filepath, "w") as f:
        f.write(text)
    return Path(filepath)


@contextmanager
def staged_directory(target: str | Path) -> Generator[Path, None, None]:
    """
    Build a directory tree in a sibling staging directory and move it into
    place on success. The target must not exist, or must be empty.
    """
    target = Path(target)
    if target.exists() and any(target.iterdir()):
        raise FileExistsError(f"output directory {target} is not empty")
    target.parent.mkdir(parents=True, exist_ok=True)

    staging = Path(tempfile.mkdtemp(dir=target.parent, prefix=f".{target.name}.", suffix=".staging"))
    try:
        yield staging
        if target.exists():
            target.rmdir()
        staging.replace(target)
        logger.debug(f"Staged directory moved into {target}")
    finally:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)


@contextmanager
def staged_files(target: str | Path) -> Generator[Path, None, None]:
    """
    Collect files in a staging directory and move them into `target` (which
    may already hold other files) on success. On failure nothing lands in
    `target`, and a target directory created here is removed again.
    """
    target = Path(target)
    created = not target.exists()
    target.mkdir(parents=True, exist_ok=True)

    staging = Path(tempfile.mkdtemp(dir=target, prefix=".", suffix=".staging"))
    try:
        yield staging
        for path in sorted(staging.iterdir()):
            path.replace(target / path.name)
        logger.debug(f"Staged files moved into {target}")
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        if created:
            shutil.rmtree(target, ignore_errors=True)
        raise
    finally:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)
