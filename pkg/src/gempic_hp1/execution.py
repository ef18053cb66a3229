"""
Minimal execution-policy layer: split a particle index range over worker
threads, each with a private scratch block carved from one pooled buffer.

Bodies that do real work are expected to be ``numba.njit(nogil=True)``
kernels so that worker threads actually run concurrently.
"""
import itertools
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

WORKERS_ENV = "GEMPIC_NUM_WORKERS"
FALLBACK_ENV = "OMP_NUM_THREADS"

CACHE_LINE_BYTES = 64
REAL_BYTES = 8


def env_workers(default=1):
    """Worker count from ``GEMPIC_NUM_WORKERS``, then ``OMP_NUM_THREADS``."""
    for name in (WORKERS_ENV, FALLBACK_ENV):
        raw = os.environ.get(name)
        if raw:
            try:
                return max(int(raw), 1)
            except ValueError:
                raise ValueError(f"{name} must be an integer, got {raw!r}") from None
    return default


def round_up(n, multiple):
    return -(-n // multiple) * multiple


def aligned_zeros(n, align=CACHE_LINE_BYTES):
    """Zeroed float64 buffer of length ``n`` whose data pointer is ``align``-aligned."""
    raw = np.zeros(n + align // REAL_BYTES, dtype=np.float64)
    shift = (-raw.ctypes.data % align) // REAL_BYTES
    return raw[shift : shift + n]


@dataclass(frozen=True)
class ExecConfig:
    """How to run a particle loop.

    ``chunk`` is either ``"static"`` (one contiguous block per worker) or a
    positive integer chunk size handed out dynamically. ``deterministic``
    forces static partitioning and, in the operator, a replicated reduction.
    ``scratch_layout`` is ``"pooled"`` (one contiguous block per worker) or
    ``"interleaved"`` (slot ``s`` of worker ``w`` at ``s * n_workers + w``),
    the latter kept only to demonstrate false sharing.
    """

    n_workers: int = 1
    chunk: object = "static"
    scratch_elements: int = 0
    deterministic: bool = False
    strategy: object = None
    scratch_layout: str = "pooled"
    cache_line_bytes: int = CACHE_LINE_BYTES

    def __post_init__(self):
        if int(self.n_workers) < 1:
            raise ValueError(f"n_workers must be >= 1, got {self.n_workers}")
        if self.chunk != "static" and (not isinstance(self.chunk, int) or self.chunk < 1):
            raise ValueError(f"chunk must be 'static' or a positive int, got {self.chunk!r}")
        if self.scratch_layout not in ("pooled", "interleaved"):
            raise ValueError(f"unknown scratch_layout {self.scratch_layout!r}")
        if self.scratch_elements < 0:
            raise ValueError("scratch_elements must be >= 0")

    @property
    def static(self):
        return self.deterministic or self.chunk == "static"


@dataclass
class Scratch:
    """One worker's private workspace; ``real`` and ``integer`` alias the same memory."""

    real: np.ndarray
    integer: np.ndarray


class ScratchPool:
    """Per-worker scratch blocks inside a single allocation.

    With the pooled layout, worker ``w`` owns the slots
    ``[offset + w*block_stride, offset + w*block_stride + size)``.
    """

    def __init__(self, n_workers, size, layout="pooled", buffer=None, offset=0,
                 block_stride=None, cache_line_bytes=CACHE_LINE_BYTES):
        self.n_workers = n_workers
        self.size = size
        self.layout = layout
        line = max(cache_line_bytes // REAL_BYTES, 1)
        if layout == "pooled":
            self.block_stride = block_stride or max(round_up(size, line), line)
            self.stride = 1
            needed = offset + (n_workers - 1) * self.block_stride + size
        else:
            self.block_stride = 1
            self.stride = n_workers
            needed = offset + n_workers * size
        if buffer is None:
            buffer = aligned_zeros(needed, cache_line_bytes)
        elif buffer.shape[0] < needed:
            raise ValueError("scratch buffer too small")
        self.buffer = buffer
        self.offset = offset

    def base(self, worker_id):
        return self.offset + worker_id * self.block_stride

    def slots(self, worker_id):
        """Index range of the pool owned by ``worker_id`` (stride-aware)."""
        b = self.base(worker_id)
        return range(b, b + self.size * self.stride, self.stride)

    def block(self, worker_id):
        b = self.base(worker_id)
        sl = slice(b, b + self.size * self.stride, self.stride)
        return Scratch(self.buffer[sl], self.buffer.view(np.int64)[sl])


def partition(begin, end, n_workers):
    """Contiguous static split of ``[begin, end)``; first ranges get the remainder."""
    n = max(end - begin, 0)
    q, r = divmod(n, n_workers)
    out = []
    lo = begin
    for w in range(n_workers):
        hi = lo + q + (1 if w < r else 0)
        out.append((lo, hi))
        lo = hi
    return out


@lru_cache(maxsize=None)
def _executor(n_workers):
    return ThreadPoolExecutor(max_workers=n_workers, thread_name_prefix="gempic")


def parallel_for_ranges(begin, end, exec_config, body, pool=None):
    """Call ``body(worker_id, lo, hi, scratch)`` over sub-ranges covering ``[begin, end)``.

    Each index is covered exactly once. A failing body stops its worker and
    raises the error with the smallest failing index once all workers are
    done; errors may carry an ``index`` attribute, otherwise the start of the
    failing sub-range is used.

    Returns the :class:`ScratchPool` that was used.
    """
    n_workers = int(exec_config.n_workers)
    if pool is None:
        pool = ScratchPool(n_workers, exec_config.scratch_elements,
                           exec_config.scratch_layout,
                           cache_line_bytes=exec_config.cache_line_bytes)
    if end <= begin:
        return pool
    blocks = [pool.block(w) for w in range(n_workers)]

    if n_workers == 1:
        body(0, begin, end, blocks[0])
        return pool

    abort = threading.Event()
    failures = []

    def run(w, ranges):
        for lo, hi in ranges:
            if abort.is_set():
                return
            try:
                body(w, lo, hi, blocks[w])
            except BaseException as exc:  # noqa: BLE001 - re-raised below
                failures.append((getattr(exc, "index", lo), exc))
                abort.set()
                return

    if exec_config.static:
        work = [[r] for r in partition(begin, end, n_workers)]
        futures = [_executor(n_workers).submit(run, w, work[w]) for w in range(n_workers)]
    else:
        counter = itertools.count(begin, exec_config.chunk)
        lock = threading.Lock()
        step = exec_config.chunk

        def chunks():
            while True:
                with lock:
                    lo = next(counter)
                if lo >= end:
                    return
                yield lo, min(lo + step, end)

        futures = [_executor(n_workers).submit(run, w, chunks()) for w in range(n_workers)]
    for f in futures:
        f.result()
    if failures:
        raise min(failures, key=lambda t: t[0])[1]
    return pool


class ParticleError(RuntimeError):
    """A per-index body failed; ``index`` is the offending particle."""

    def __init__(self, index, cause):
        super().__init__(f"body failed at index {index}: {cause!r}")
        self.index = index
        self.__cause__ = cause


def parallel_for_particles(begin, end, exec_config, body, pool=None):
    """Call ``body(worker_id, index, scratch)`` exactly once per index.

    Convenience wrapper around :func:`parallel_for_ranges` for Python-level
    bodies. Within one worker, indices are visited in ascending order.
    """

    def ranged(w, lo, hi, scratch):
        for i in range(lo, hi):
            try:
                body(w, i, scratch)
            except Exception as exc:
                raise ParticleError(i, exc) from exc

    return parallel_for_ranges(begin, end, exec_config, ranged, pool)
