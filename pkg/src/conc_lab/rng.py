"""Counter-based Gaussian noise and chunked parallel execution.

Each ensemble member owns a Philox stream keyed by (master seed, stream tag,
member index); step k of that member always reads the k-th block of its
stream. Output therefore does not depend on how members are scheduled.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

MASK64 = (1 << 64) - 1

# stream tags; distinct purposes never share keys
STREAM_PATHS = 0
STREAM_AUX_BM = 1
STREAM_BASELINE = 2
STREAM_PROBES = 3
STREAM_SAMPLES = 4

CHUNK = 256

T = TypeVar("T")


def member_generator(master_seed: int, member: int, stream: int = STREAM_PATHS) -> np.random.Generator:
    key = np.array([master_seed & MASK64, ((stream & 0xFFFFFF) << 40) | (member & ((1 << 40) - 1))],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gaussian_increments(master_seed: int, members: Sequence[int], n_steps: int, dim: int,
                        stream: int = STREAM_PATHS) -> np.ndarray:
    """Standard normal draws with shape (len(members), n_steps, dim)."""
    out = np.empty((len(members), n_steps, dim))
    for row, i in enumerate(members):
        out[row] = member_generator(master_seed, i, stream).standard_normal((n_steps, dim))
    return out


def thread_count() -> int:
    raw = os.environ.get("CONC_LAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def chunk_ranges(m: int, chunk: int = CHUNK) -> list[range]:
    return [range(s, min(m, s + chunk)) for s in range(0, m, chunk)]


def map_chunks(func: Callable[[range], T], m: int, chunk: int = CHUNK, threads: int | None = None) -> list[T]:
    """Apply ``func`` to fixed member chunks, in order, on up to ``threads`` workers.

    The chunk boundaries never depend on the worker count, so results are
    identical for any degree of parallelism.
    """
    ranges = chunk_ranges(m, chunk)
    workers = min(threads or thread_count(), len(ranges))
    if workers <= 1:
        return [func(r) for r in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, ranges))
