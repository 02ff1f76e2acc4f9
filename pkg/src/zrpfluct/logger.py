"""Utils related to logging."""
import logging
import time
from contextlib import contextmanager
from typing import Any, Iterator

_logger = logging.getLogger("zrpfluct")


@contextmanager
def timed_info(msg: Any, *args: Any) -> Iterator[None]:
    """Log a slow stage at INFO level together with its wall-clock duration."""
    start = time.perf_counter()
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        _logger.info(msg + " in %.2fs", *(*args, elapsed))
