"""
Thread-safe vector reduction targets for current deposition.

Four strategies:

* ``replicated`` - one independently allocated dense copy per worker.
* ``padded`` - one allocation, per-worker copies rounded up to whole cache
  lines so no two workers share a line.
* ``pooled`` - one allocation holding, per worker, its copy followed by its
  scratch workspace, so all memory a worker touches is one block.
* ``atomic`` - a single shared vector updated with atomic adds. The only
  strategy whose result depends on thread interleaving.
"""
from enum import Enum

import numba
import numpy as np
from numba import types
from numba.core import cgutils
from numba.extending import intrinsic

from .execution import (CACHE_LINE_BYTES, REAL_BYTES, ScratchPool, aligned_zeros,
                        round_up)


class Strategy(str, Enum):
    REPLICATED = "replicated"
    PADDED = "padded"
    POOLED = "pooled"
    ATOMIC = "atomic"


@intrinsic
def atomic_add(typingctx, arr, idx, val):
    """``arr[idx] += val`` as a single relaxed atomic read-modify-write."""
    sig = types.void(arr, idx, val)

    def codegen(context, builder, signature, args):
        arrty = signature.args[0]
        a, i, v = args
        ary = context.make_array(arrty)(context, builder, a)
        ptr = cgutils.get_item_pointer(context, builder, arrty, ary, [i], wraparound=False)
        builder.atomic_rmw("fadd", ptr, v, "monotonic")
        return context.get_dummy_value()

    return sig, codegen


@numba.njit(nogil=True, cache=True)
def _atomic_deposit(buf, index, value):
    atomic_add(buf, index, value)


class ScatterAccumulator:
    """Deposit target for ``n_workers`` concurrent writers.

    Kernels obtain their destination through :meth:`target`, which returns a
    flat buffer, an offset into it and whether adds must be atomic.
    """

    def __init__(self, strategy, n_dofs, n_workers, cache_line_bytes=CACHE_LINE_BYTES,
                 scratch_elements=0):
        self.strategy = Strategy(strategy)
        if n_dofs < 1 or n_workers < 1:
            raise ValueError(f"n_dofs and n_workers must be >= 1, got {n_dofs}, {n_workers}")
        self.n_dofs = int(n_dofs)
        self.n_workers = int(n_workers)
        line = max(cache_line_bytes // REAL_BYTES, 1)
        self.scratch_pool = None
        if self.strategy is Strategy.REPLICATED:
            self.stride = self.n_dofs
            self.copies = [np.zeros(self.n_dofs) for _ in range(self.n_workers)]
        elif self.strategy is Strategy.PADDED:
            self.stride = round_up(self.n_dofs, line)
            self.storage = aligned_zeros(self.n_workers * self.stride, cache_line_bytes)
        elif self.strategy is Strategy.POOLED:
            j_part = round_up(self.n_dofs, line)
            self.stride = j_part + round_up(scratch_elements, line)
            self.storage = aligned_zeros(self.n_workers * self.stride, cache_line_bytes)
            self.scratch_pool = ScratchPool(self.n_workers, scratch_elements, "pooled",
                                            buffer=self.storage, offset=j_part,
                                            block_stride=self.stride,
                                            cache_line_bytes=cache_line_bytes)
        else:
            self.stride = 0
            self.storage = np.zeros(self.n_dofs)

    @property
    def padding(self):
        if self.strategy is Strategy.PADDED:
            return self.stride - self.n_dofs
        return 0

    @property
    def deterministic(self):
        return self.strategy is not Strategy.ATOMIC

    def target(self, worker_id):
        """``(buffer, offset, atomic)`` where worker ``worker_id`` deposits."""
        if self.strategy is Strategy.REPLICATED:
            return self.copies[worker_id], 0, False
        if self.strategy is Strategy.ATOMIC:
            return self.storage, 0, True
        return self.storage, worker_id * self.stride, False

    def worker_copy(self, worker_id):
        """The ``n_dofs`` slots worker ``worker_id`` writes (shared vector for atomic)."""
        buf, off, _ = self.target(worker_id)
        return buf[off : off + self.n_dofs]

    def deposit(self, worker_id, index, value):
        if not 0 <= index < self.n_dofs:
            raise IndexError(f"dof index {index} outside [0, {self.n_dofs})")
        if not 0 <= worker_id < self.n_workers:
            raise IndexError(f"worker id {worker_id} outside [0, {self.n_workers})")
        buf, off, atomic = self.target(worker_id)
        if atomic:
            _atomic_deposit(buf, index, float(value))
        else:
            buf[off + index] += value

    def reset(self):
        if self.strategy is Strategy.REPLICATED:
            for c in self.copies:
                c[:] = 0.0
        elif self.strategy is Strategy.ATOMIC:
            self.storage[:] = 0.0
        else:
            for w in range(self.n_workers):
                self.worker_copy(w)[:] = 0.0

    def contribute(self, out=None):
        """Sum the worker copies slot by slot, worker 0 first."""
        if out is None:
            out = np.zeros(self.n_dofs)
        if self.strategy is Strategy.ATOMIC:
            out[:] = self.storage
            return out
        out[:] = self.worker_copy(0)
        for w in range(1, self.n_workers):
            out += self.worker_copy(w)
        return out


def make_accumulator(strategy, n_dofs, n_workers, cache_line_bytes=CACHE_LINE_BYTES,
                     scratch_elements=0):
    return ScatterAccumulator(strategy, n_dofs, n_workers, cache_line_bytes, scratch_elements)
