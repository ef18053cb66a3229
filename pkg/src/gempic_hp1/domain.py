"""Periodic grid, particle ensemble and field coefficient containers."""
import math
from dataclasses import dataclass, field

import numba
import numpy as np

# column layout of ParticleGroup.particle_array (array of structures)
X1, X2, X3, V1, V2, V3, W = range(7)
N_ATTRS = 7


@dataclass(frozen=True)
class Grid3:
    """Periodic tensor grid with ``n_grid[k]`` cells along axis ``k``."""

    n_grid: tuple
    domain: tuple = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    Lx: np.ndarray = field(init=False, repr=False)
    delta_x: np.ndarray = field(init=False, repr=False)
    rdelta_x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n_grid = tuple(int(n) for n in self.n_grid)
        if len(n_grid) != 3 or min(n_grid) < 1:
            raise ValueError(f"n_grid must be 3 positive integers, got {self.n_grid}")
        domain = tuple((float(a), float(b)) for a, b in self.domain)
        if len(domain) != 3 or any(not b > a for a, b in domain):
            raise ValueError(f"domain must be 3 intervals with max > min, got {self.domain}")
        lx = np.array([b - a for a, b in domain])
        dx = lx / np.array(n_grid)
        object.__setattr__(self, "n_grid", n_grid)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "Lx", lx)
        object.__setattr__(self, "delta_x", dx)
        object.__setattr__(self, "rdelta_x", 1.0 / dx)

    @classmethod
    def from_lengths(cls, n_grid, lengths):
        return cls(tuple(n_grid), tuple((0.0, float(l)) for l in lengths))

    @property
    def n_dofs(self):
        return self.n_grid[0] * self.n_grid[1] * self.n_grid[2]

    @property
    def xmin(self):
        return np.array([a for a, _ in self.domain])

    @property
    def n_grid_array(self):
        return np.array(self.n_grid, dtype=np.int64)


@dataclass
class ParticleGroup:
    """One species of macro-particles.

    ``particle_array`` has shape ``(n_particles, 7)`` with rows
    ``(x1, x2, x3, v1, v2, v3, w)``.
    """

    particle_array: np.ndarray
    q: float = 1.0
    m: float = 1.0
    common_weight: float = 1.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.particle_array, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != N_ATTRS:
            raise ValueError(f"particle_array must have shape (N, {N_ATTRS}), got {arr.shape}")
        self.particle_array = arr

    @property
    def n_particles(self):
        return self.particle_array.shape[0]

    def copy(self):
        return ParticleGroup(self.particle_array.copy(), self.q, self.m, self.common_weight)


@dataclass
class FieldDofs:
    """Magnetic-field coefficients ``[b1 | b2 | b3]`` and the x1 current."""

    bfield_dofs: np.ndarray
    j_dofs_local: np.ndarray

    def __post_init__(self):
        self.bfield_dofs = np.ascontiguousarray(self.bfield_dofs, dtype=np.float64)
        self.j_dofs_local = np.ascontiguousarray(self.j_dofs_local, dtype=np.float64)
        n = self.j_dofs_local.shape[0]
        if self.bfield_dofs.shape != (3 * n,):
            raise ValueError(
                f"bfield_dofs must have length 3*{n}, got {self.bfield_dofs.shape}"
            )

    @classmethod
    def zeros(cls, n_dofs):
        return cls(np.zeros(3 * n_dofs), np.zeros(n_dofs))

    @property
    def n_dofs(self):
        return self.j_dofs_local.shape[0]

    def component(self, k):
        """View of the coefficients of b_k (k = 1, 2, 3)."""
        n = self.n_dofs
        return self.bfield_dofs[(k - 1) * n : k * n]


@numba.njit(nogil=True, cache=True)
def wrap_periodic(x, L):
    """Map ``x`` into [0, L)."""
    y = x % L
    # -tiny % L rounds to L
    if y >= L:
        y = 0.0
    return y


@numba.njit(nogil=True, cache=True)
def locate_unwrapped(x, xmin, rdx):
    """Cell and offset of ``x`` without periodic reduction of the cell index."""
    s = (x - xmin) * rdx
    c = math.floor(s)
    xi = s - c
    if xi >= 1.0:
        # s just below an integer: s - floor(s) rounds up to 1
        c += 1.0
        xi = 0.0
    return np.int64(c), xi


def locate(x, grid, axis):
    """Periodic cell index and normalized position of ``x`` along ``axis``."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"position must be finite, got {x!r}")
    lo = grid.domain[axis][0]
    xw = lo + wrap_periodic(x - lo, grid.Lx[axis])
    cell, xi = locate_unwrapped(xw, lo, grid.rdelta_x[axis])
    n = grid.n_grid[axis]
    if cell >= n:
        # rounding in (x - lo) * rdx can land exactly on n
        cell, xi = n - 1, math.nextafter(1.0, 0.0)
    return int(cell), float(xi)


def tensor_index_1d(i1, i2, i3, grid):
    """Flat DOF index, ``i1`` fastest, with periodic reduction of each index."""
    n1, n2, n3 = grid.n_grid
    return i1 % n1 + n1 * (i2 % n2 + n2 * (i3 % n3))
