import itertools

import numpy as np
import pytest

from compactwave import operators as ops
from compactwave.grid import GridFn, inner_product_h, make_uniform_mesh, norm_h, sample
from compactwave.operators import OperatorParams

import dense_oracles as dm
from conftest import random_interior


def _all_ids(mesh):
    nd = mesh.ndim
    ids = [ops.LAPLACE, ops.NUMEROV_SUM, ops.NUMEROV_PROD]
    ids += [ops.second_diff(k) for k in range(nd)]
    ids += [ops.numerov_1d(k) for k in range(nd)]
    ids += [ops.numerov_sum_excl(k) for k in range(nd)]
    ids += [ops.numerov_prod_excl(k) for k in range(nd)]
    ids += [ops.ELLIPTIC_SUM, ops.ELLIPTIC_PROD, ops.COMPACT_LAPLACE]
    if nd == 2:
        ids.append(ops.NUMEROV_SUM_BETA)
    if nd == 3:
        ids += [ops.NUMEROV_SUM_BETA_GAMMA, ops.ELLIPTIC_THETA]
    return ids


def _params(mesh):
    nd = mesh.ndim
    return OperatorParams(a=tuple(0.7 + 0.3 * k for k in range(1, nd + 1)),
                          beta=1.3, gamma=0.4, theta=0.6, eps1=0.5)


class TestStencils:
    def test_second_diff_exact_on_quadratic(self):
        mesh = make_uniform_mesh((2.0, 1.0), (8, 5), 1.0, 4)
        w = sample(lambda x, y: x * (2.0 - x) + 0.0 * y, mesh)
        out = ops.apply_operator(ops.second_diff(0), OperatorParams(), w)
        assert np.allclose(out.interior, -2.0, atol=1e-12)

    def test_numerov_sum_preserves_constants_inside(self):
        mesh = make_uniform_mesh((2.0, 2.0), (8, 8), 1.0, 4)
        one = sample(lambda x, y: np.ones_like(x + y), mesh)
        sn = ops.apply_operator(ops.NUMEROV_SUM, OperatorParams(), one)
        # pure stencil away from the boundary: averaging preserves constants
        assert sn.values[4, 4] == pytest.approx(1.0, rel=1e-15)

    def test_elliptic_sum_eigenvector(self):
        # dense-matrix oracle on a 6x6 mesh plus the closed-form symbol
        mesh = make_uniform_mesh((1.0, 1.3), (6, 6), 1.0, 4)
        p = _params(mesh)
        mode = ops.sine_mode(mesh, (2, 3))
        lam = ops.operator_symbol(ops.ELLIPTIC_SUM, p, mesh, (2, 3))
        out = ops.apply_operator(ops.ELLIPTIC_SUM, p, mode)
        assert np.allclose(out.interior, lam * mode.interior, atol=1e-12 * abs(lam))
        dense = dm.dense_operator(ops.ELLIPTIC_SUM, p, mesh)
        ref = (dense @ mode.interior.ravel()).reshape(mesh.interior_shape)
        assert np.allclose(out.interior, ref, atol=1e-12 * abs(lam))

    def test_product_average_expansion_identity(self, mesh3d, rng):
        # product average = additive average + 2nd and 3rd cross terms,
        # both sides evaluated independently
        p = _params(mesh3d)
        w = random_interior(mesh3d, rng)
        left = ops.apply_operator(ops.NUMEROV_PROD, p, w).interior
        p_one = OperatorParams(a=p.a, beta=1.0, gamma=1.0)
        right = ops.apply_operator(ops.NUMEROV_SUM_BETA_GAMMA, p_one, w).interior
        assert np.max(np.abs(left - right)) < 1e-13 * norm_h(w)

    def test_boundary_values_are_read(self):
        mesh = make_uniform_mesh((1.0, 1.0), (4, 4), 1.0, 4)
        w = GridFn.zeros(mesh)
        w.values[0, 2] = 1.0  # boundary node
        out = ops.apply_operator(ops.ELLIPTIC_SUM, OperatorParams(), w)
        assert np.any(out.interior != 0.0)
        assert out.in_zero_boundary_space()


class TestDenseShadow:
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_apply_matches_dense(self, dim, rng):
        mesh = {1: make_uniform_mesh((1.1,), (7,), 1.0, 4),
                2: make_uniform_mesh((1.5, 1.0), (6, 5), 1.0, 4),
                3: make_uniform_mesh((1.0, 1.2, 0.8), (4, 5, 4), 1.0, 4)}[dim]
        p = _params(mesh)
        w = random_interior(mesh, rng)
        for op in _all_ids(mesh):
            got = ops.apply_operator(op, p, w).interior.ravel()
            ref = dm.dense_operator(op, p, mesh) @ w.interior.ravel()
            assert np.allclose(got, ref, atol=1e-11 * max(1.0, np.abs(ref).max())), op

    def test_factored_elliptic_matches_dense_variable_csq(self, rng):
        mesh = make_uniform_mesh((1.0, 1.0), (6, 6), 1.0, 8)
        csq = sample(lambda x, y: 1.0 + 0.5 * np.sin(2 * x) * np.cos(y), mesh)
        p = OperatorParams(a=(1.0, 1.0), csq=csq, h_t=mesh.time_step)
        w = random_interior(mesh, rng)
        got = ops.apply_operator(ops.ELLIPTIC_FACTORED, p, w).interior.ravel()
        ref = dm.dense_operator(ops.ELLIPTIC_FACTORED, p, mesh) @ w.interior.ravel()
        assert np.allclose(got, ref, atol=1e-10 * np.abs(ref).max())


class TestNumerovLineSolve:
    def test_roundtrip(self, mesh2d, rng):
        y = random_interior(mesh2d, rng)
        for k in range(mesh2d.ndim):
            w = ops.apply_operator(ops.numerov_1d(k), OperatorParams(), y)
            back = ops.solve_numerov_lines(k, w)
            assert np.max(np.abs(back.interior - y.interior)) < 1e-13

    def test_sine_mode_symbol(self):
        mesh = make_uniform_mesh((1.0,), (12,), 1.0, 4)
        mode = ops.sine_mode(mesh, (5,))
        sym = 1.0 - np.sin(5 * np.pi / 24) ** 2 / 3.0  # per-axis average symbol
        z = ops.solve_numerov_lines(0, mode)
        assert np.allclose(z.interior, mode.interior / sym, rtol=1e-13)

    def test_zero(self, mesh2d):
        z = ops.solve_numerov_lines(0, GridFn.zeros(mesh2d))
        assert not np.any(z.values)


class TestSymbols:
    def test_second_diff_symbol_coarse(self):
        mesh = make_uniform_mesh((1.0,), (2,), 1.0, 2)
        assert ops.operator_symbol(ops.second_diff(0), OperatorParams(), mesh, (1,)) \
            == pytest.approx(-8.0)

    def test_additive_average_minimal_symbol_3d(self):
        # minimal eigenvalue approaches 1 - n/3 = 0 from above as the mesh refines
        p = OperatorParams()
        vals = []
        for N in (8, 16, 32):
            mesh = make_uniform_mesh((1.0, 1.0, 1.0), (N, N, N), 1.0, 2)
            vals.append(ops.symbol_grid(ops.NUMEROV_SUM, p, mesh).min())
        assert all(v > 0.0 for v in vals)
        # O(sum 1/N_k^2) decay towards zero
        assert vals[1] == pytest.approx(vals[0] / 4.0, rel=0.15)
        assert vals[2] == pytest.approx(vals[1] / 4.0, rel=0.15)

    def test_product_elliptic_symbol_formula(self, mesh3d):
        p = _params(mesh3d)
        mu = [-(4.0 / h**2) * np.sin(j * np.pi / (2 * N)) ** 2
              for h, N, j in zip(mesh3d.steps, mesh3d.counts, (2, 3, 1))]
        expected = sum(
            p.a[k] ** 2 * (-mu[k]) * np.prod([
                1.0 + mesh3d.steps[i] ** 2 * mu[i] / 12.0
                for i in range(3) if i != k
            ])
            for k in range(3)
        )
        got = ops.operator_symbol(ops.ELLIPTIC_PROD, p, mesh3d, (2, 3, 1))
        assert got == pytest.approx(expected, rel=1e-13)

    def test_symbols_match_dense_eigenvalues(self):
        mesh = make_uniform_mesh((1.0, 1.1), (5, 5), 1.0, 4)
        p = _params(mesh)
        for op in (ops.ELLIPTIC_PROD, ops.ELLIPTIC_SUM, ops.NUMEROV_PROD):
            dense = dm.dense_operator(op, p, mesh)
            eigs = np.sort(np.linalg.eigvalsh(0.5 * (dense + dense.T)))
            sym = np.sort(ops.symbol_grid(op, p, mesh).ravel())
            assert np.allclose(eigs, sym, rtol=1e-10)

    def test_apply_reproduces_symbol_on_modes(self, mesh2d):
        p = _params(mesh2d)
        for op in _all_ids(mesh2d):
            for j in [(1, 1), (3, 2), (6, 5)]:
                mode = ops.sine_mode(mesh2d, j)
                lam = ops.operator_symbol(op, p, mesh2d, j)
                out = ops.apply_operator(op, p, mode)
                scale = max(abs(lam), 1.0)
                assert np.max(np.abs(out.interior - lam * mode.interior)) \
                    < 1e-12 * scale, op

    def test_mode_out_of_range(self, mesh2d):
        with pytest.raises(ValueError):
            ops.operator_symbol(ops.NUMEROV_SUM, OperatorParams(), mesh2d, (0, 1))


class TestAlgebraicProperties:
    def test_symmetry(self, mesh2d, rng):
        p = _params(mesh2d)
        w = random_interior(mesh2d, rng)
        z = random_interior(mesh2d, rng)
        for op in _all_ids(mesh2d):
            lhs = inner_product_h(ops.apply_operator(op, p, w), z)
            rhs = inner_product_h(w, ops.apply_operator(op, p, z))
            assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs))), op

    def test_factored_elliptic_symmetric_positive(self, rng):
        mesh = make_uniform_mesh((1.0, 1.0), (6, 6), 1.0, 8)
        csq = sample(lambda x, y: 1.0 + x * y, mesh)
        p = OperatorParams(a=(1.0, 1.0), csq=csq, h_t=mesh.time_step)
        y = random_interior(mesh, rng)
        z_vals = y.values - (mesh.time_step ** 2 / 12.0) * csq.values \
            * ops.apply_core(ops.COMPACT_LAPLACE, p, mesh, y.values)
        z = GridFn(mesh, z_vals)
        lhs = inner_product_h(ops.apply_operator(ops.ELLIPTIC_FACTORED, p, y), y)
        rhs = inner_product_h(
            GridFn(mesh, -ops.apply_core(ops.COMPACT_LAPLACE, p, mesh, z.values)), z
        )
        assert lhs == pytest.approx(rhs, rel=1e-11)
        assert lhs > 0.0

    def test_product_average_rayleigh_bounds(self, mesh3d, rng):
        p = OperatorParams(a=(1.0, 1.0, 1.0))
        for _ in range(20):
            w = random_interior(mesh3d, rng)
            ray = inner_product_h(ops.apply_operator(ops.NUMEROV_PROD, p, w), w) \
                / inner_product_h(w, w)
            assert (2.0 / 3.0) ** 3 < ray < 1.0

    def test_commutation(self, mesh2d, rng):
        p = _params(mesh2d)
        w = random_interior(mesh2d, rng)
        pairs = [(ops.NUMEROV_SUM, ops.ELLIPTIC_SUM),
                 (ops.NUMEROV_PROD, ops.ELLIPTIC_PROD),
                 (ops.NUMEROV_SUM_BETA, ops.ELLIPTIC_SUM),
                 (ops.NUMEROV_PROD, ops.ELLIPTIC_SUM)]
        for b, a in pairs:
            ba = ops.apply_operator(b, p, ops.apply_operator(a, p, w))
            ab = ops.apply_operator(a, p, ops.apply_operator(b, p, w))
            assert norm_h(GridFn(mesh2d, ba.values - ab.values)) <= 1e-12 * norm_h(w)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_elliptic_lower_bound(self, dim, rng):
        # eps2 * a_min^2 * (2/3)^(n-1) (-Lap w, w) <= (A w, w) for each variant's A
        mesh = {1: make_uniform_mesh((1.0,), (8,), 1.0, 4),
                2: make_uniform_mesh((1.2, 0.9), (7, 6), 1.0, 4),
                3: make_uniform_mesh((1.0, 1.1, 0.9), (5, 4, 5), 1.0, 4)}[dim]
        p = _params(mesh)
        a_min = min(p.a)
        cases = [(ops.ELLIPTIC_PROD, 1.0)]
        if dim <= 2:
            cases.append((ops.ELLIPTIC_SUM, 1.0))
        if dim == 3:
            cases.append((ops.ELLIPTIC_THETA, p.theta))  # eps2 = theta default
        for op, eps2 in cases:
            for _ in range(10):
                w = random_interior(mesh, rng)
                lap = inner_product_h(
                    GridFn(mesh, -ops.apply_core(ops.LAPLACE, p, mesh, w.values)), w
                )
                aw = inner_product_h(ops.apply_operator(op, p, w), w)
                bound = eps2 * a_min**2 * (2.0 / 3.0) ** (dim - 1) * lap
                assert aw >= bound - 1e-12 * abs(aw), op


class TestValidation:
    def test_missing_axis(self):
        with pytest.raises(ValueError):
            ops.OperatorId(ops.OpTag.SECOND_DIFF)

    def test_spurious_axis(self):
        with pytest.raises(ValueError):
            ops.OperatorId(ops.OpTag.NUMEROV_SUM, 0)

    def test_wrong_speed_count(self, mesh2d, rng):
        p = OperatorParams(a=(1.0,))
        with pytest.raises(ValueError):
            ops.apply_operator(ops.ELLIPTIC_SUM, p, random_interior(mesh2d, rng))

    def test_factored_needs_csq_and_step(self, mesh2d, rng):
        with pytest.raises(ValueError):
            ops.apply_operator(ops.ELLIPTIC_FACTORED, OperatorParams(),
                               random_interior(mesh2d, rng))

    def test_family_dimension_guards(self, mesh3d, rng):
        with pytest.raises(ValueError):
            ops.apply_operator(ops.NUMEROV_SUM_BETA, _params(mesh3d),
                               random_interior(mesh3d, rng))
