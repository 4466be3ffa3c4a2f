"""
Context managers for scenecam
"""

import contextlib
import logging
import time
from collections.abc import Callable, Generator
from dataclasses import dataclass

logger = logging.getLogger(__name__)


@dataclass
class Timing:
    name: str
    seconds: float = 0.0


@contextlib.contextmanager
def timed_operation(
    operation_name: str, log_func: Callable[[str], None] | None = None
) -> Generator[Timing, None, None]:
    """Context manager to time operations; the yielded Timing is filled on exit."""
    log = log_func or logger.debug
    timing = Timing(operation_name)
    start_time = time.perf_counter()
    log(f"Starting {operation_name}...")

    try:
        yield timing
    finally:
        timing.seconds = time.perf_counter() - start_time
        log(f"{operation_name} completed in {timing.seconds:.3f}s")
