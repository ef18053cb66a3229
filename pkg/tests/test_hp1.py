import numpy as np
import pytest

from gempic_hp1 import (ExecConfig, FieldDofs, Grid3, Hp1Operator, ParticleGroup,
                        StepTooLargeError, hp1_push_particle, init, InitSpec,
                        integrated_basis_line, make_accumulator, pp_coefficients)
from gempic_hp1.hp1 import ScratchLayout
from oracles import quadrature_integrate, trajectory_oracle


class TestIntegratedBasisLine:
    def test_zero_displacement(self):
        first, j1d = integrated_basis_line(pp_coefficients(2), 3, 0.4, 3, 0.4)
        assert j1d.shape == (3,) and np.all(j1d == 0.0)

    def test_indicator(self):
        first, j1d = integrated_basis_line(pp_coefficients(0), 0, 0.25, 0, 0.75)
        assert first == 0
        np.testing.assert_allclose(j1d, [0.5], atol=1e-15)

    def test_crossing_matches_quadrature_and_reverses(self):
        b = pp_coefficients(2)
        first, j1d = integrated_basis_line(b, 2, 0.8, 4, 0.1)
        assert j1d.shape == (5,)
        want = [quadrature_integrate(2, 2.8, 4.1, basis_offset=first + r) for r in range(5)]
        np.testing.assert_allclose(j1d, want, atol=1e-12, rtol=0)
        first_r, back = integrated_basis_line(b, 4, 0.1, 2, 0.8)
        assert first_r == first
        np.testing.assert_array_equal(back, -j1d)

    @pytest.mark.parametrize("d", range(5))
    def test_sum_is_displacement(self, d, rng):
        b = pp_coefficients(d)
        for _ in range(200):
            c0, c1 = rng.integers(-5, 6, 2)
            x0, x1 = rng.random(2)
            _, j1d = integrated_basis_line(b, c0, x0, c1, x1)
            assert abs(j1d.sum() - ((c1 + x1) - (c0 + x0))) <= 1e-12 * max(1, abs(c1 - c0))

    def test_limit(self):
        with pytest.raises(StepTooLargeError):
            integrated_basis_line(pp_coefficients(2), 0, 0.1, 9, 0.2, max_crossing=8)


def _random_state(rng, v_max=8.0):
    return np.r_[rng.random(3), rng.uniform(-v_max, v_max, 3), rng.uniform(0.5, 2.0)]


class TestPushParticle:
    def test_zero_v1_is_noop(self, small_grid, cubic_bases, rng):
        state = _random_state(rng)
        state[3] = 0.0
        acc = make_accumulator("replicated", small_grid.n_dofs, 1)
        b = rng.uniform(-1, 1, 3 * small_grid.n_dofs)
        out = hp1_push_particle(state, 0.05, small_grid, cubic_bases, b, acc)
        np.testing.assert_array_equal(out, state)
        assert np.all(acc.contribute() == 0.0)

    def test_zero_field_keeps_velocity(self, small_grid, cubic_bases, rng):
        state = _random_state(rng)
        acc = make_accumulator("replicated", small_grid.n_dofs, 1)
        out = hp1_push_particle(state, 0.05, small_grid, cubic_bases,
                                np.zeros(3 * small_grid.n_dofs), acc)
        np.testing.assert_array_equal(out[3:], state[3:])
        assert out[0] == pytest.approx((state[0] + 0.05 * state[3]) % 1.0, abs=1e-15)
        assert np.any(acc.contribute() != 0.0)

    def test_matches_trajectory_oracle(self, small_grid, cubic_bases, rng):
        b = rng.uniform(-1, 1, 3 * small_grid.n_dofs)
        for _ in range(40):
            state = _random_state(rng)
            acc = make_accumulator("replicated", small_grid.n_dofs, 1)
            out = hp1_push_particle(state, 0.05, small_grid, cubic_bases, b, acc,
                                    q=-1.3, m=0.7, common_weight=0.25)
            v2, v3, j = trajectory_oracle(state, 0.05, (8, 4, 4), (1, 1, 1), 3, b,
                                          q=-1.3, m=0.7, common_weight=0.25)
            assert abs(out[4] - v2) <= 1e-11 and abs(out[5] - v3) <= 1e-11
            assert np.max(np.abs(acc.contribute() - j)) <= 1e-11

    @pytest.mark.parametrize("degree", [1, 2, 4])
    def test_other_degrees_match_oracle(self, degree, rng):
        grid = Grid3.from_lengths((9, 5, 6), (2.0, 1.5, 0.7))
        bases = (pp_coefficients(degree), pp_coefficients(degree - 1))
        b = rng.uniform(-1, 1, 3 * grid.n_dofs)
        for _ in range(10):
            state = _random_state(rng) * np.r_[grid.Lx, 1, 1, 1, 1]
            acc = make_accumulator("pooled", grid.n_dofs, 1)
            out = hp1_push_particle(state, 0.05, grid, bases, b, acc)
            v2, v3, j = trajectory_oracle(state, 0.05, grid.n_grid, grid.Lx, degree, b)
            assert abs(out[4] - v2) <= 1e-11 and abs(out[5] - v3) <= 1e-11
            assert np.max(np.abs(acc.contribute() - j)) <= 1e-11

    def test_charge_flux(self, small_grid, cubic_bases, rng):
        b = rng.uniform(-1, 1, 3 * small_grid.n_dofs)
        for _ in range(200):
            state = _random_state(rng, v_max=12.0)
            acc = make_accumulator("replicated", small_grid.n_dofs, 1)
            hp1_push_particle(state, 0.05, small_grid, cubic_bases, b, acc, q=2.0,
                              common_weight=0.5)
            want = 2.0 * state[6] * 0.5 * (0.05 * state[3])
            assert abs(acc.contribute().sum() - want) <= 1e-12 * abs(want)

    def test_backward_step_undoes_forward(self, small_grid, cubic_bases, rng):
        b = rng.uniform(-1, 1, 3 * small_grid.n_dofs)
        for _ in range(50):
            state = _random_state(rng)
            fwd = make_accumulator("replicated", small_grid.n_dofs, 1)
            mid = hp1_push_particle(state, 0.05, small_grid, cubic_bases, b, fwd)
            bwd = make_accumulator("replicated", small_grid.n_dofs, 1)
            end = hp1_push_particle(mid, -0.05, small_grid, cubic_bases, b, bwd)
            np.testing.assert_allclose(bwd.contribute(), -fwd.contribute(), atol=1e-13)
            np.testing.assert_allclose(end[4:6], state[4:6], atol=1e-13)
            assert end[0] == pytest.approx(state[0], abs=1e-13)

    def test_too_large(self, small_grid, cubic_bases):
        acc = make_accumulator("replicated", small_grid.n_dofs, 1)
        state = np.array([0.1, 0.2, 0.3, 400.0, 0, 0, 1])
        with pytest.raises(StepTooLargeError):
            hp1_push_particle(state, 0.05, small_grid, cubic_bases,
                              np.zeros(3 * small_grid.n_dofs), acc)

    def test_mismatched_bases(self, small_grid):
        acc = make_accumulator("replicated", small_grid.n_dofs, 1)
        with pytest.raises(ValueError):
            hp1_push_particle(np.zeros(7), 0.05, small_grid,
                              (pp_coefficients(3), pp_coefficients(1)),
                              np.zeros(3 * small_grid.n_dofs), acc)


def test_scratch_layout_slots_do_not_overlap():
    lay = ScratchLayout(3, 7)
    starts = [lay.x_old, lay.x_new, lay.vi, lay.wi, lay.spline_p, lay.spline_pm1, lay.j1d,
              lay.primitive, lay.cells, lay.index_x, lay.startjk, lay.size]
    assert starts == sorted(starts)
    assert lay.spline_pm1 - lay.spline_p == 12 and lay.j1d - lay.spline_pm1 == 9
    assert lay.primitive - lay.j1d == 10


def _fresh(n=10**4, grid=(8, 4, 4), seed=5, v_scale=8.0):
    return init(InitSpec(seed=seed, n_particles=n, n_grid=grid, v_scale=v_scale))


class TestStep:
    def test_empty_group(self, small_grid):
        op = Hp1Operator(small_grid)
        fields = FieldDofs.zeros(small_grid.n_dofs)
        fields.j_dofs_local[:] = 5.0
        op.step(ParticleGroup(np.zeros((0, 7))), fields, 0.05, ExecConfig(3, strategy="atomic"))
        assert np.all(fields.j_dofs_local == 0.0)

    def test_replicated_single_worker_bitwise(self, small_grid):
        op = Hp1Operator(small_grid)
        g0, f0 = _fresh()
        g1, f1 = _fresh()
        op.step(g0, f0, 0.05)
        op.step(g1, f1, 0.05, ExecConfig(1, strategy="replicated"))
        np.testing.assert_array_equal(f0.j_dofs_local, f1.j_dofs_local)
        np.testing.assert_array_equal(g0.particle_array, g1.particle_array)

    @pytest.mark.parametrize("strategy,tol", [("replicated", 1e-10), ("padded", 1e-10),
                                              ("pooled", 1e-10), ("atomic", 1e-9)])
    @pytest.mark.parametrize("chunk", ["static", 333])
    def test_four_workers_close_to_serial(self, small_grid, strategy, tol, chunk):
        op = Hp1Operator(small_grid)
        g0, f0 = _fresh()
        g1, f1 = _fresh()
        op.step(g0, f0, 0.05)
        op.step(g1, f1, 0.05, ExecConfig(4, chunk=chunk, strategy=strategy))
        rel = np.linalg.norm(f1.j_dofs_local - f0.j_dofs_local) / np.linalg.norm(f0.j_dofs_local)
        assert rel <= tol
        np.testing.assert_array_equal(g0.particle_array, g1.particle_array)

    def test_interleaved_scratch_same_result(self, small_grid):
        op = Hp1Operator(small_grid)
        g0, f0 = _fresh()
        g1, f1 = _fresh()
        op.step(g0, f0, 0.05, ExecConfig(3, strategy="padded"))
        op.step(g1, f1, 0.05, ExecConfig(3, strategy="padded", scratch_layout="interleaved"))
        np.testing.assert_array_equal(f0.j_dofs_local, f1.j_dofs_local)
        np.testing.assert_array_equal(g0.particle_array, g1.particle_array)

    def test_deterministic_mode_reproducible(self, small_grid):
        op = Hp1Operator(small_grid)
        runs = []
        for _ in range(2):
            g, f = _fresh()
            op.step(g, f, 0.05, ExecConfig(4, strategy="atomic", deterministic=True))
            runs.append(f.j_dofs_local.copy())
        np.testing.assert_array_equal(*runs)

    def test_reports_first_offending_particle(self, small_grid):
        op = Hp1Operator(small_grid)
        g, f = _fresh()
        g.particle_array[[37, 5000], 3] = 1e4
        with pytest.raises(StepTooLargeError) as info:
            op.step(g, f, 0.05, ExecConfig(4, strategy="pooled", deterministic=True))
        assert info.value.index == 37

    def test_invariants(self, small_grid):
        op = Hp1Operator(small_grid)
        g, f = _fresh()
        before = g.particle_array.copy()
        for _ in range(3):
            op.step(g, f, 0.05, ExecConfig(2, strategy="replicated"))
        after = g.particle_array
        for col in (1, 2, 3, 6):
            np.testing.assert_array_equal(after[:, col], before[:, col])
        assert np.all((after[:, 0] >= 0) & (after[:, 0] < 1))

    def test_current_total(self, small_grid):
        op = Hp1Operator(small_grid)
        g, f = _fresh()
        want = 0.05 * np.sum(g.particle_array[:, 3] * g.particle_array[:, 6]) * g.q * g.common_weight
        op.step(g, f, 0.05)
        assert f.j_dofs_local.sum() == pytest.approx(want, rel=1e-12)

    def test_grid_mismatch(self, small_grid):
        op = Hp1Operator(small_grid)
        g, _ = _fresh(n=10)
        with pytest.raises(ValueError):
            op.step(g, FieldDofs.zeros(5), 0.05)

    def test_degree_zero_rejected(self, small_grid):
        with pytest.raises(ValueError):
            Hp1Operator(small_grid, degree=0)
