"""
The H_p1 substep: advance x1 with v1, kick v2/v3 with the magnetic field
integrated along the x1 trajectory, and deposit the x1 current.

Along x1 the field and current basis is the degree ``p - 1`` spline, whose
trajectory integral is a difference of primitives. Along x2 and x3 the
degree ``p`` and ``p - 1`` splines are evaluated at the (fixed) position.
"""
import time
from dataclasses import dataclass

import numba
import numpy as np

from .domain import locate_unwrapped, wrap_periodic
from .execution import ExecConfig, ScratchPool, parallel_for_ranges
from .scatter import Strategy, atomic_add, make_accumulator
from .spline_basis import horner_rows, pp_coefficients


class StepTooLargeError(ValueError):
    """A particle crossed more cells along x1 than allowed in one step."""

    def __init__(self, index, crossing=None, limit=None):
        msg = f"particle {index} crosses too many cells in one step"
        if crossing is not None:
            msg += f" ({crossing} > {limit})"
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True)
class ScratchLayout:
    """Slot offsets of the per-particle workspace (8-byte slots)."""

    degree: int
    max_crossing: int

    @property
    def line_size(self):
        # entries of j1d / index_x
        return self.max_crossing + self.degree

    # float slots
    @property
    def x_old(self):
        return 0

    @property
    def x_new(self):
        return 3

    @property
    def vi(self):
        return 6

    @property
    def wi(self):
        return 9

    @property
    def spline_p(self):
        return 10

    @property
    def spline_pm1(self):
        return self.spline_p + 3 * (self.degree + 1)

    @property
    def j1d(self):
        return self.spline_pm1 + 3 * self.degree

    @property
    def primitive(self):
        return self.j1d + self.line_size

    # integer slots (same memory, after the float block)
    @property
    def cells(self):
        return self.primitive + 2 * (self.degree + 1)

    @property
    def index_x(self):
        return self.cells + 3

    @property
    def startjk(self):
        return self.index_x + self.line_size

    @property
    def size(self):
        return self.startjk + (self.degree + 1) ** 2


@numba.njit(nogil=True, cache=True)
def _imod(a, n):
    r = a % n
    if r < 0:
        r += n
    return r


@numba.njit(nogil=True, cache=True)
def integrated_line(prim_coeffs, cell_old, xi_old, cell_new, xi_new, out, out_off, prim, prim_off):
    """Exact integrals of the degree-d basis along x1 between two positions.

    Writes ``|cell_new - cell_old| + d + 1`` values (cell units, signed) into
    ``out[out_off:]`` and returns the unreduced index of the first function.
    ``prim[prim_off : prim_off + 2*(d+2)]`` is used as workspace.
    """
    d = prim_coeffs.shape[0] - 1
    np1 = d + 2
    prim[prim_off] = 1.0
    horner_rows(prim_coeffs, xi_old, prim, prim_off + 1, 1)
    prim[prim_off + np1] = 1.0
    horner_rows(prim_coeffs, xi_new, prim, prim_off + np1 + 1, 1)
    lo = min(cell_old, cell_new)
    hi = max(cell_old, cell_new)
    first = lo - d
    n = hi - lo + d + 1
    for r in range(n):
        i = first + r
        # primitive of function i seen from each endpoint's cell
        rel = i - (cell_new - d)
        if rel < 0:
            pn = 1.0
        elif rel > d:
            pn = 0.0
        else:
            pn = prim[prim_off + np1 + 1 + rel]
        rel = i - (cell_old - d)
        if rel < 0:
            po = 1.0
        elif rel > d:
            po = 0.0
        else:
            po = prim[prim_off + 1 + rel]
        out[out_off + r] = pn - po
    return first


@numba.njit(nogil=True, cache=True)
def push_range(parts, begin, end, dt, qoverm, charge_scale, n_grid, xmin, lx, dx, rdx,
               coef_p, coef_pm1, prim_pm1, bfield, jbuf, joff, atomic, sf, si, max_cross):
    """Push particles ``begin .. end-1`` in place and deposit their current.

    ``sf``/``si`` are the float and int views of the worker scratch. Returns
    -1, or the index of the first particle whose step is too large (that
    particle and all later ones are left untouched).
    """
    p = coef_p.shape[0] - 1
    d = p - 1
    n1 = n_grid[0]
    n2 = n_grid[1]
    n3 = n_grid[2]
    ndofs = n1 * n2 * n3
    start_b2 = ndofs
    start_b3 = 2 * ndofs
    line = max_cross + p

    X_OLD = 0
    X_NEW = 3
    VI = 6
    WI = 9
    SP = 10
    SPM1 = SP + 3 * (p + 1)
    J1D = SPM1 + 3 * p
    PRIM = J1D + line
    CELLS = PRIM + 2 * (p + 1)
    IDX = CELLS + 3
    SJK = IDX + line

    for ip in range(begin, end):
        for a in range(3):
            sf[X_OLD + a] = parts[ip, a]
            sf[VI + a] = parts[ip, 3 + a]
        sf[WI] = parts[ip, 6]

        sf[X_NEW] = sf[X_OLD] + dt * sf[VI]
        sf[X_NEW + 1] = sf[X_OLD + 1]
        sf[X_NEW + 2] = sf[X_OLD + 2]
        if sf[X_NEW] == sf[X_OLD]:
            # v1 == 0 (or dt*v1 below resolution): empty trajectory
            continue

        # localization, computed once per particle and reused below
        c_old, xi_old = locate_unwrapped(sf[X_OLD], xmin[0], rdx[0])
        c_new, xi_new = locate_unwrapped(sf[X_NEW], xmin[0], rdx[0])
        crossing = abs(c_new - c_old)
        if crossing > max_cross:
            return ip
        c2, xi2 = locate_unwrapped(sf[X_OLD + 1], xmin[1], rdx[1])
        c3, xi3 = locate_unwrapped(sf[X_OLD + 2], xmin[2], rdx[2])
        si[CELLS] = c_old
        si[CELLS + 1] = c2
        si[CELLS + 2] = c3

        horner_rows(coef_p, xi2, sf, SP + (p + 1), 1)
        horner_rows(coef_p, xi3, sf, SP + 2 * (p + 1), 1)
        horner_rows(coef_pm1, xi2, sf, SPM1 + p, 1)
        horner_rows(coef_pm1, xi3, sf, SPM1 + 2 * p, 1)

        first = integrated_line(prim_pm1, c_old, xi_old, c_new, xi_new, sf, J1D, sf, PRIM)
        local_size = crossing + p
        for i in range(local_size):
            sf[J1D + i] *= dx[0]
            si[IDX + i] = _imod(first + i, n1)
        for k in range(p + 1):
            i3 = _imod(c3 - p + k, n3)
            for j in range(p + 1):
                i2 = _imod(c2 - p + j, n2)
                si[SJK + k * (p + 1) + j] = n1 * (i2 + n2 * i3)

        marker_charge = charge_scale * sf[WI]
        dv2 = 0.0
        dv3 = 0.0
        for k in range(p + 1):
            vtt2 = 0.0
            vtt3 = 0.0
            for j in range(p + 1):
                splinejk = sf[SP + (p + 1) + j] * sf[SP + 2 * (p + 1) + k] * marker_charge
                vt2 = 0.0
                vt3 = 0.0
                sjk = si[SJK + k * (p + 1) + j]
                for i in range(local_size):
                    index1d = sjk + si[IDX + i]
                    val = sf[J1D + i]
                    if atomic:
                        atomic_add(jbuf, joff + index1d, val * splinejk)
                    else:
                        jbuf[joff + index1d] += val * splinejk
                    vt2 += bfield[start_b3 + index1d] * val
                    vt3 += bfield[start_b2 + index1d] * val
                if j > 0:
                    vtt2 += vt2 * sf[SPM1 + p + j - 1]
                vtt3 += vt3 * sf[SP + (p + 1) + j]
            dv2 += vtt2 * sf[SP + 2 * (p + 1) + k]
            if k > 0:
                dv3 += vtt3 * sf[SPM1 + 2 * p + k - 1]
        parts[ip, 4] = sf[VI + 1] - qoverm * dv2
        parts[ip, 5] = sf[VI + 2] + qoverm * dv3
        parts[ip, 0] = xmin[0] + wrap_periodic(sf[X_NEW] - xmin[0], lx[0])
    return -1


class Hp1Operator:
    """H_p1 substep on a fixed grid with splines of ``degree`` (>= 1).

    Parameters
    ----------
    grid : Grid3
    degree : int
        Degree ``p`` of the spline used for the current and for B along
        x2/x3; the trajectory integral uses degree ``p - 1``.
    max_crossing : int, optional
        Largest number of cell boundaries a particle may cross along x1 in
        one step. Defaults to ``n_grid[0] - 1``.
    """

    def __init__(self, grid, degree=3, max_crossing=None):
        if degree < 1:
            raise ValueError(f"degree must be >= 1, got {degree}")
        self.grid = grid
        self.degree = int(degree)
        self.basis_p = pp_coefficients(self.degree)
        self.basis_pm1 = pp_coefficients(self.degree - 1)
        if max_crossing is None:
            max_crossing = max(grid.n_grid[0] - 1, 1)
        self.max_crossing = int(max_crossing)
        self.layout = ScratchLayout(self.degree, self.max_crossing)
        self._n_grid = grid.n_grid_array
        self._xmin = grid.xmin
        self.last_timing = (0.0, 0.0)

    @property
    def scratch_elements(self):
        return self.layout.size

    def _kernel_args(self, group, fields, dt):
        return (
            float(dt), group.q / group.m, group.q * group.common_weight,
            self._n_grid, self._xmin, self.grid.Lx, self.grid.delta_x, self.grid.rdelta_x,
            self.basis_p.poly_coeffs, self.basis_pm1.poly_coeffs,
            self.basis_pm1.poly_coeffs_primitive, fields.bfield_dofs,
        )

    def run_range(self, parts, begin, end, args, jbuf, joff, atomic, scratch):
        dt, qoverm, cs, ng, xmin, lx, dx, rdx, cp, cpm1, prim, bf = args
        bad = push_range(parts, begin, end, dt, qoverm, cs, ng, xmin, lx, dx, rdx,
                         cp, cpm1, prim, bf, jbuf, joff, atomic,
                         scratch.real, scratch.integer, self.max_crossing)
        if bad >= 0:
            raise StepTooLargeError(int(bad), limit=self.max_crossing)

    def step(self, group, fields, dt, exec_config=None):
        """Push every particle of ``group`` and store the current in ``fields.j_dofs_local``.

        ``exec_config.strategy`` selects the reduction; ``None`` runs the
        serial reference loop that deposits straight into ``j_dofs_local``.
        Wall times of the particle loop and of the reduction are stored in
        ``last_timing``.
        """
        exec_config = exec_config or ExecConfig()
        if fields.n_dofs != self.grid.n_dofs:
            raise ValueError("field DOF count does not match the grid")
        parts = group.particle_array
        args = self._kernel_args(group, fields, dt)
        fields.j_dofs_local[:] = 0.0
        n = group.n_particles

        strategy = exec_config.strategy
        if strategy is not None:
            strategy = Strategy(strategy)
            if exec_config.deterministic and strategy is Strategy.ATOMIC:
                strategy = Strategy.REPLICATED

        if strategy is None:
            t0 = time.perf_counter()
            pool = ScratchPool(1, self.scratch_elements)
            self.run_range(parts, 0, n, args, fields.j_dofs_local, 0, False, pool.block(0))
            self.last_timing = (time.perf_counter() - t0, 0.0)
            return fields

        n_workers = int(exec_config.n_workers)
        cfg = ExecConfig(n_workers, exec_config.chunk, self.scratch_elements,
                         exec_config.deterministic, strategy, exec_config.scratch_layout,
                         exec_config.cache_line_bytes)
        t0 = time.perf_counter()
        acc = make_accumulator(strategy, self.grid.n_dofs, n_workers,
                               cfg.cache_line_bytes, scratch_elements=self.scratch_elements)
        pool = acc.scratch_pool if strategy is Strategy.POOLED else None
        targets = [acc.target(w) for w in range(n_workers)]

        def body(w, lo, hi, scratch):
            jbuf, joff, atomic = targets[w]
            self.run_range(parts, lo, hi, args, jbuf, joff, atomic, scratch)

        parallel_for_ranges(0, n, cfg, body, pool)
        t1 = time.perf_counter()
        acc.contribute(out=fields.j_dofs_local)
        self.last_timing = (t1 - t0, time.perf_counter() - t1)
        return fields


def integrated_basis_line(basis_pm1, cell_old, xi_old, cell_new, xi_new, max_crossing=None):
    """Signed integrals (cell units) of the x1 basis between two positions.

    Returns ``(first_dof, j1d)`` where ``j1d[r]`` belongs to basis function
    ``first_dof + r`` (not reduced modulo the grid).
    """
    crossing = abs(int(cell_new) - int(cell_old))
    if max_crossing is not None and crossing > max_crossing:
        raise StepTooLargeError(0, crossing, max_crossing)
    d = basis_pm1.degree
    out = np.empty(crossing + d + 1)
    prim = np.empty(2 * (d + 2))
    first = integrated_line(basis_pm1.poly_coeffs_primitive, int(cell_old), float(xi_old),
                            int(cell_new), float(xi_new), out, 0, prim, 0)
    return int(first), out


def hp1_push_particle(state, dt, grid, bases, bfield, acc, scratch=None, worker_id=0,
                      q=1.0, m=1.0, common_weight=1.0, max_crossing=None):
    """Push a single particle record ``(x1, x2, x3, v1, v2, v3, w)``.

    ``bases`` is ``(basis_p, basis_pm1)``; current goes to ``acc`` as
    ``worker_id``. Returns the updated record (the input is not modified).
    """
    basis_p, basis_pm1 = bases
    if basis_pm1.degree != basis_p.degree - 1:
        raise ValueError("bases must have degrees (p, p - 1)")
    p = basis_p.degree
    if max_crossing is None:
        max_crossing = max(grid.n_grid[0] - 1, 1)
    layout = ScratchLayout(p, max_crossing)
    if scratch is None:
        scratch = ScratchPool(1, layout.size).block(0)
    rec = np.array(state, dtype=np.float64).reshape(1, 7)
    jbuf, joff, atomic = acc.target(worker_id)
    bad = push_range(rec, 0, 1, float(dt), q / m, q * common_weight, grid.n_grid_array,
                     grid.xmin, grid.Lx, grid.delta_x, grid.rdelta_x,
                     basis_p.poly_coeffs, basis_pm1.poly_coeffs,
                     basis_pm1.poly_coeffs_primitive, np.ascontiguousarray(bfield, dtype=np.float64),
                     jbuf, joff, atomic, scratch.real, scratch.integer, max_crossing)
    if bad >= 0:
        raise StepTooLargeError(0, limit=max_crossing)
    return rec[0]
