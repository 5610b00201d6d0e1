"""Various utilities."""

from __future__ import annotations

from asyncio import CancelledError, Task
from collections.abc import Callable, Generator, Iterable, Sequence
from contextlib import contextmanager
import csv
import math
from time import perf_counter
from typing import TextIO

import numpy as np

@contextmanager
def timer() -> Generator[Callable[[], float], None, None]:
    """Context manager to time the execution of a block.

    The timer can be called to return the execution time in s.
    """
    def t() -> float:
        return end - start
    start = end = perf_counter()
    yield t
    end = perf_counter()

async def cancel(task: Task[object]) -> None:
    """Cancel the *task*."""
    task.cancel()
    try:
        await task
    except CancelledError:
        pass

def format_number(value: float | int | None, *, digits: int = 12) -> str:
    """Format *value* deterministically with *digits* significant digits.

    The result is the shortest representation of the rounded value, e.g. ``-2.0`` or ``0.25``.
    Integers are kept as is and ``None`` yields an empty string.
    """
    if value is None:
        return ''
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if not math.isfinite(value):
        return repr(value)
    rounded = float(f'{value:.{digits}g}')
    return repr(rounded + 0.0)

def format_vector(values: Iterable[float], *, digits: int = 12) -> str:
    """Format *values* as a bracketed, comma-separated list."""
    return f"[{', '.join(format_number(v, digits=digits) for v in values)}]"

def write_csv(file: TextIO, header: Sequence[str],
              rows: Iterable[Sequence[float | int | str | None]]) -> None:
    """Write a CSV table with *header* and *rows* to *file*.

    Numbers are formatted with :func:`format_number`, lines end with ``\\r\\n``.
    """
    writer = csv.writer(file, lineterminator='\r\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow(cell if isinstance(cell, str) else format_number(cell) for cell in row)
