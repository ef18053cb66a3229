"""Seeded construction of particle ensembles and magnetic-field coefficients."""
from dataclasses import dataclass

import numpy as np

from .domain import FieldDofs, Grid3, ParticleGroup

# dt * v_scale < delta_x[0] for dt = 0.05 on the unit-length 16x8x8 grid
DEFAULT_V_SCALE = 1.0
# crosses several cells per step on the same grid (up to 6.4)
FAST_V_SCALE = 8.0


@dataclass(frozen=True)
class InitSpec:
    seed: int = 1
    n_particles: int = 1000
    n_grid: tuple = (16, 8, 8)
    lengths: tuple = (1.0, 1.0, 1.0)
    degree: int = 3
    v_scale: float = DEFAULT_V_SCALE
    q: float = 1.0
    m: float = 1.0
    common_weight: float = 1.0

    @property
    def grid(self):
        return Grid3.from_lengths(self.n_grid, self.lengths)


def make_generator(seed):
    """Philox-4x64 generator: counter based, identical streams on every platform."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def init(spec):
    """Uniform positions, uniform velocities in ``[-v_scale, v_scale]^3``, unit weights,
    and b coefficients uniform in ``[-1, 1]``."""
    if spec.n_particles <= 0:
        raise ValueError(f"n_particles must be positive, got {spec.n_particles}")
    grid = spec.grid
    rng = make_generator(spec.seed)
    n = int(spec.n_particles)
    parts = np.empty((n, 7))
    u = rng.random((n, 3))
    parts[:, 0:3] = grid.xmin + u * grid.Lx
    # u * L may round up to L
    for a in range(3):
        col = parts[:, a]
        col[col >= grid.domain[a][1]] = grid.domain[a][0]
    parts[:, 3:6] = rng.uniform(-spec.v_scale, spec.v_scale, size=(n, 3))
    parts[:, 6] = 1.0
    b = rng.uniform(-1.0, 1.0, size=3 * grid.n_dofs)
    group = ParticleGroup(parts, spec.q, spec.m, spec.common_weight)
    return group, FieldDofs(b, np.zeros(grid.n_dofs))
