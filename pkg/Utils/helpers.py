"""
Helper utilities for the time-diffraction toolkit
Number formatting, batch fan-out of blocking work and seed derivation
"""

import asyncio
import logging
import math
from typing import Any, Callable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 6


def format_number(value: Any, digits: int = SIGNIFICANT_DIGITS) -> str:
    """Format a number with a fixed count of significant digits"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))

    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value == 0.0:
        return "0"
    return f"{value:.{digits}g}"


def round_significant(value: float, digits: int = SIGNIFICANT_DIGITS) -> float:
    """Round a float to a fixed count of significant digits (for stable JSON)"""
    if not math.isfinite(value) or value == 0.0:
        return value
    return float(f"{value:.{digits}g}")


def format_duration(seconds: float) -> str:
    """Format duration in seconds to human readable format"""
    if seconds is None:
        return "Unknown"
    if seconds < 1.0:
        return f"{seconds * 1e3:.0f}ms"

    whole = int(seconds)
    minutes, secs = divmod(whole, 60)
    hours, minutes = divmod(minutes, 60)
    if hours > 0:
        return f"{hours}h {minutes}m {secs}s"
    elif minutes > 0:
        return f"{minutes}m {secs}s"
    else:
        return f"{seconds:.1f}s"


def derive_seeds(seed: int, count: int) -> List[np.random.SeedSequence]:
    """Independent child seeds for `count` partitions of one seeded job"""
    if count < 1:
        raise ValueError(f"partition count must be at least 1 (got {count})")
    return np.random.SeedSequence(seed).spawn(count)


async def batch_process(
    items: Sequence[Any],
    process_func: Callable[[Any], Any],
    batch_size: int = 4,
) -> List[Any]:
    """Run blocking process_func over items in batches of worker threads.

    Results keep the input order; the first failure is re-raised.
    """
    results: List[Any] = []

    for i in range(0, len(items), batch_size):
        batch = items[i:i + batch_size]
        batch_results = await asyncio.gather(
            *[asyncio.to_thread(process_func, item) for item in batch],
            return_exceptions=True,
        )
        for result in batch_results:
            if isinstance(result, BaseException):
                logger.error(f"❌ Batch item failed: {result}")
                raise result
        results.extend(batch_results)

    return results


def run_batches(
    items: Sequence[Any],
    process_func: Callable[[Any], Any],
    workers: Optional[int] = None,
) -> List[Any]:
    """Synchronous entry to batch_process; workers <= 1 runs inline"""
    items = list(items)
    if not workers or workers <= 1 or len(items) <= 1:
        return [process_func(item) for item in items]
    return asyncio.run(batch_process(items, process_func, batch_size=workers))
