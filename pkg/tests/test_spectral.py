import numpy as np
import pytest

from degenlab.fields import band_limited_field, sine_product_field
from degenlab.geometry import GridFunction, make_slab_grid
from degenlab.operators import CoefficientField
from degenlab.spectral import (KummerMode, ModeSolveError, SpectralError,
                               VerticalProfile, mode_params, reduce_mode,
                               solve_constant_halfspace, solve_constant_slab,
                               solve_mode_halfspace, solve_mode_slab, solve_zero_mode)

L = 2.0 * np.pi


def profile_from(fn, nu=1.0, n=129):
    levels = np.linspace(0.0, nu, n)
    return VerticalProfile.from_samples(levels, np.asarray(fn(levels), dtype=complex))


def mode_ode_fdm_oracle(coeffs, xi, profile, nu, n=4096):
    """Independent oracle: dense complex FD solve of the exact vertical mode ODE.

    For the mode e^{i xi x1} (d = 2) the profile solves
        -x a22 p'' - (b2 + 2 i a12 xi x) p' + (c - i b1 xi + a11 xi^2 x) p = f~,
    with Dirichlet zero at the top and the degenerate first-order row at the
    bottom.  Assembled from scratch with central differences.
    """
    from scipy.linalg import solve_banded

    a, b, c = coeffs.a_const, coeffs.b_const, coeffs.c_const
    a11, a12, a22 = a[0, 0], a[0, 1], a[1, 1]
    b1, b2 = b
    h = nu / n
    x = np.linspace(0.0, nu, n + 1)
    rhs = np.asarray(profile(x), dtype=complex)[:n]
    ab = np.zeros((4, n), dtype=complex)
    # bottom row: -b2 p'(0) + (c - i b1 xi) p(0) = f(0), one-sided second order
    ab[2, 0] += 3.0 * b2 / (2.0 * h) + (c - 1j * b1 * xi)
    ab[1, 1] += -4.0 * b2 / (2.0 * h)
    ab[0, 2] += b2 / (2.0 * h)
    for i in range(1, n):
        xi_d = x[i]
        conv = b2 + 2.0j * a12 * xi * xi_d
        lower = -a22 * xi_d / h ** 2 + conv / (2.0 * h)
        diag = 2.0 * a22 * xi_d / h ** 2 + (c - 1j * b1 * xi + a11 * xi ** 2 * xi_d)
        upper = -a22 * xi_d / h ** 2 - conv / (2.0 * h)
        ab[3, i - 1] += lower
        ab[2, i] += diag
        if i + 1 < n:
            ab[1, i + 1] += upper
    sol = solve_banded((1, 2), ab, rhs)
    return x, np.concatenate([sol, [0.0 + 0.0j]])


class TestModeParams:
    def test_requires_isotropic(self):
        coeffs = CoefficientField.constant([[2.0, 0.0], [0.0, 1.0]], [0.0, 1.0], 0.5)
        prof = profile_from(lambda x: np.ones_like(x))
        with pytest.raises(ValueError):
            mode_params(coeffs, np.array([1.0]), prof)

    def test_real_drift_free_case(self):
        # c = 1, b = (0, 2), |xi| = 1: a(xi) = (1 + 2)/2 = 3/2 and the Kummer
        # second parameter equals b^d (the mode ODE pins it; see ledger)
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 2.0], 1.0)
        prof = profile_from(lambda x: np.exp(-10 * x))
        mode = mode_params(coeffs, np.array([1.0]), prof)
        assert mode.a_of_xi == pytest.approx(1.5)
        assert mode.b_ode == pytest.approx(2.0)
        assert mode.scale == pytest.approx(2.0)

    def test_tangential_drift_conjugate_pair(self):
        # b1 = 1, b^d = 2, c = 0, |xi| = 1: {a(xi), a(-xi)} is the conjugate
        # pair {1 + i/2, 1 - i/2}; which sign goes with which frequency is a
        # transform-convention choice
        coeffs = CoefficientField.constant(np.eye(2), [1.0, 2.0], 0.0)
        prof = profile_from(lambda x: np.exp(-10 * x))
        a_plus = mode_params(coeffs, np.array([1.0]), prof).a_of_xi
        a_minus = mode_params(coeffs, np.array([-1.0]), prof).a_of_xi
        assert a_plus == pytest.approx(np.conj(a_minus))
        assert sorted([a_plus.imag, a_minus.imag]) == pytest.approx([-0.5, 0.5])
        assert a_plus.real == pytest.approx(1.0)

    def test_zero_forcing_gives_zero_g(self):
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 1.0)
        prof = profile_from(lambda x: np.zeros_like(x))
        mode = mode_params(coeffs, np.array([2.0]), prof)
        assert np.all(mode.g(np.linspace(0.0, 3.0, 7)) == 0.0)

    def test_zero_frequency_rejected(self):
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 1.0)
        prof = profile_from(lambda x: np.ones_like(x))
        with pytest.raises(ValueError):
            reduce_mode(coeffs, np.array([0.0]), prof)

    def test_negative_real_part_rejected(self):
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 0.0)
        prof = profile_from(lambda x: np.ones_like(x))
        mode = reduce_mode(coeffs, np.array([1.0]), prof)
        assert mode.a_of_xi.real > 0.0
        with pytest.raises(ModeSolveError):
            KummerMode(xi=np.array([1.0]), a_of_xi=-0.5 + 0.0j, b_ode=1.0,
                       scale=2.0, decay=1.0, phase=0.0, profile=prof, add=1.0,
                       f_sup=1.0)


class TestModeSolve:
    def test_zero_forcing_zero_solution(self):
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.5], 0.5)
        prof = profile_from(lambda x: np.zeros_like(x))
        mode = reduce_mode(coeffs, np.array([1.0]), prof)
        sol = solve_mode_slab(mode, 1.0)
        assert np.max(np.abs(sol.v)) == 0.0

    def test_slab_endpoint_zero(self):
        coeffs = CoefficientField.constant(np.eye(2), [0.3, 1.5], 0.5)
        prof = profile_from(lambda x: np.sin(np.pi * x) ** 2)
        mode = reduce_mode(coeffs, np.array([2.0]), prof)
        sol = solve_mode_slab(mode, 1.0)
        assert sol.endpoint_abs <= 1e-12 * max(np.max(np.abs(sol.v)), 1.0)

    def test_ode_residual_small(self):
        coeffs = CoefficientField.constant(np.eye(2), [0.3, 1.5], 0.5)
        prof = profile_from(lambda x: np.exp(-6 * x) * (1 + 0.5j) * np.sin(2 * x))
        mode = reduce_mode(coeffs, np.array([1.0]), prof)
        for sol in (solve_mode_slab(mode, 1.0),
                    solve_mode_halfspace(mode, np.linspace(0.0, 1.0, 33))):
            assert sol.ode_residual_rel < 1e-6

    def test_mode_profile_matches_independent_fdm(self):
        # full-chain oracle: reduction + Kummer + quadrature vs a dense
        # complex finite-difference solve of the original vertical ODE
        coeffs = CoefficientField.constant([[1.0, 0.3], [0.3, 1.6]], [0.7, 1.2], 0.4)
        xi = 2.0
        nu = 1.0
        prof = profile_from(lambda x: np.cos(3 * x) * (nu - x) * (0.8 - 0.3j))
        mode = reduce_mode(coeffs, np.array([xi]), prof)
        levels = np.linspace(0.0, nu, 33)
        sol = solve_mode_slab(mode, nu, x_targets=levels)
        mine = sol.u_tilde(levels, order=0)
        x_fine, oracle = mode_ode_fdm_oracle(coeffs, xi, prof, nu)
        idx = np.searchsorted(x_fine, levels)
        err = np.max(np.abs(mine - oracle[idx]))
        assert err < 5e-6, err  # oracle is second order on 4096 cells

    def test_halfspace_mode_bound(self):
        # sup |u~| <= (1/c) sup |f~| for c > 0
        c = 0.8
        coeffs = CoefficientField.constant(np.eye(2), [0.2, 1.1], c)
        prof = profile_from(lambda x: np.exp(-8 * x) * (1.0 + 0.3j), nu=4.0)
        mode = reduce_mode(coeffs, np.array([1.0]), prof)
        levels = np.linspace(0.0, 4.0, 65)
        sol = solve_mode_halfspace(mode, levels)
        assert np.max(np.abs(sol.u_tilde(levels))) <= prof.sup / c


class TestZeroMode:
    def coeffs(self, c=0.0):
        return CoefficientField.constant(np.eye(2), [0.0, 1.0], c)

    def test_zero_forcing(self):
        prof = profile_from(lambda x: np.zeros_like(x))
        sol = solve_zero_mode(self.coeffs(), prof, 1.0)
        assert np.max(np.abs(sol.values)) == 0.0

    def test_exact_affine_solution(self):
        # c = 0, b^d = 1, f = 1: u = nu - x_d (exact stencils, solver roundoff)
        nu = 1.0
        prof = profile_from(lambda x: np.ones_like(x), nu=nu)
        sol = solve_zero_mode(self.coeffs(), prof, nu)
        assert np.max(np.abs(sol.values - (nu - sol.levels))) < 1e-10

    def test_self_convergence(self):
        prof = profile_from(lambda x: np.sin(3 * x) * np.exp(-x))
        sol = solve_zero_mode(self.coeffs(c=0.4), prof, 1.0)
        assert sol.self_convergence < 1e-8

    def test_halfspace_needs_positive_c(self):
        prof = profile_from(lambda x: np.exp(-9 * x))
        with pytest.raises(SpectralError):
            solve_zero_mode(self.coeffs(c=0.0), prof, 1.0, halfspace=True)


class TestSlabPipeline:
    def coeffs(self):
        return CoefficientField.constant([[1.0, 0.25], [0.25, 1.3]], [0.4, 1.0], 0.6)

    def test_zero_source(self):
        grid = make_slab_grid(2, 1.0, L, 16, 16)
        sol = solve_constant_slab(self.coeffs(), GridFunction.zeros(grid))
        assert sol.u.sup_norm() == 0.0

    def test_tangentially_constant_matches_zero_mode(self):
        grid = make_slab_grid(2, 1.0, L, 16, 32)
        vals = np.broadcast_to(np.sin(2.5 * grid.vertical_coords()), grid.shape).copy()
        sol = solve_constant_slab(self.coeffs(), GridFunction(grid, vals))
        zm_only = np.broadcast_to(sol.zero_mode.values.real, grid.shape)
        assert np.max(np.abs(sol.u.values - zm_only)) < 1e-12
        assert len(sol.mode_diagnostics) == 0

    def test_manufactured_recovery(self):
        nu, n = 1.0, 48
        grid = make_slab_grid(2, nu, L, n, n)
        coeffs = self.coeffs()
        a, b, c = coeffs.a_const, coeffs.b_const, coeffs.c_const
        k = 2 * np.pi / L
        x1, x2 = grid.meshgrid()
        ustar = np.sin(k * x1) * (nu - x2)
        f = (-x2 * (-a[0, 0] * k ** 2 * np.sin(k * x1) * (nu - x2)
                    - 2 * a[0, 1] * k * np.cos(k * x1))
             - b[0] * k * np.cos(k * x1) * (nu - x2) + b[1] * np.sin(k * x1)
             + c * np.sin(k * x1) * (nu - x2))
        sol = solve_constant_slab(coeffs, GridFunction(grid, f))
        assert np.max(np.abs(sol.u.values - ustar)) < 1e-10
        assert sol.top_abs < 1e-12
        assert sol.max_imag < 1e-12

    def test_hermitian_modes(self):
        grid = make_slab_grid(2, 1.0, L, 16, 24)
        f = band_limited_field(2, L, 1.0, kmax=3, seed=2, vertical="slab").on_grid(grid)
        sol = solve_constant_slab(self.coeffs(), f)
        levels = grid.vertical_coords()
        for idx, ms in sol._mode_solutions.items():
            mirror = tuple((-i) % grid.n_tangential for i in idx)
            if mirror in sol._mode_solutions:
                u_plus = ms.u_tilde(levels)
                u_minus = sol._mode_solutions[mirror].u_tilde(levels)
                assert np.max(np.abs(u_plus - np.conj(u_minus))) < 1e-12 * max(
                    1e-30, np.max(np.abs(u_plus)))

    def test_sign_preservation(self):
        # c >= 0 and f <= 0 everywhere force u <= 0 up to tolerance
        grid = make_slab_grid(2, 1.0, L, 24, 24)
        base = band_limited_field(2, L, 1.0, kmax=2, seed=5, vertical="slab").on_grid(grid)
        f_vals = -(base.values - np.min(base.values)) - 0.05
        sol = solve_constant_slab(self.coeffs(), GridFunction(grid, f_vals))
        assert np.max(sol.u.values) <= 1e-10

    def test_requires_nonnegative_c(self):
        grid = make_slab_grid(2, 1.0, L, 12, 12)
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], -0.2)
        with pytest.raises(SpectralError):
            solve_constant_slab(coeffs, GridFunction.zeros(grid))

    def test_boundary_flatness_under_refinement(self):
        field = band_limited_field(2, L, 1.0, kmax=2, seed=8, vertical="slab")
        worst = []
        for n in (16, 32, 64):
            grid = make_slab_grid(2, 1.0, L, 16, n)
            sol = solve_constant_slab(self.coeffs(), field.on_grid(grid))
            h = grid.h_vertical
            layer = 1
            vals = [np.max(np.abs(sol.derivative_grid(beta).values[..., layer]))
                    for beta in [(2, 0), (1, 1), (0, 2)]]
            worst.append(h * max(vals))
        assert worst[1] <= worst[0] * 1.1 and worst[2] <= worst[1] * 1.1, worst


class TestHalfspacePipeline:
    def coeffs(self, c=0.7):
        return CoefficientField.constant([[1.0, 0.2], [0.2, 1.4]], [0.3, 1.2], c)

    def test_zero_source(self):
        grid = make_slab_grid(2, 4.0, L, 12, 32)
        sol = solve_constant_halfspace(self.coeffs(), GridFunction.zeros(grid))
        assert sol.u.sup_norm() == 0.0

    def test_requires_positive_c(self):
        grid = make_slab_grid(2, 4.0, L, 12, 32)
        with pytest.raises(SpectralError):
            solve_constant_halfspace(self.coeffs(c=0.0), GridFunction.zeros(grid))

    def test_support_precondition(self):
        grid = make_slab_grid(2, 4.0, L, 12, 32)
        vals = np.ones(grid.shape)  # support reaches the top: rejected
        with pytest.raises(SpectralError):
            solve_constant_halfspace(self.coeffs(), GridFunction(grid, vals))

    def test_per_mode_bound_and_decay(self):
        grid = make_slab_grid(2, 6.0, L, 16, 72)
        f = band_limited_field(2, L, 6.0, kmax=2, seed=3, vertical="decay",
                               decay_rate=12.0).on_grid(grid)
        sol = solve_constant_halfspace(self.coeffs(), f)
        assert sol.mode_diagnostics, "battery must retain modes"
        for diag in sol.mode_diagnostics:
            assert diag["bound_ratio"] <= 1.0 + 1e-8
            assert diag["u_top_abs"] <= 0.2 * diag["f_sup"] / 0.7

    def test_agreement_with_tall_slab(self):
        # with data near the bottom, the half-space and Dirichlet-slab solves
        # agree on a fixed low window, better and better as the slab grows
        field = band_limited_field(2, L, 8.0, kmax=2, seed=4, vertical="decay",
                                   decay_rate=16.0)
        coeffs = self.coeffs()
        diffs = []
        for nu_slab, n_v in ((5.0, 60), (8.0, 96)):
            grid = make_slab_grid(2, nu_slab, L, 12, n_v)
            f = field.on_grid(grid)
            sol_h = solve_constant_halfspace(coeffs, f)
            sol_s = solve_constant_slab(coeffs, f)
            keep = grid.vertical_coords() <= 2.0 + 1e-12
            diffs.append(np.max(np.abs(sol_h.u.values[..., keep]
                                       - sol_s.u.values[..., keep])))
        assert diffs[1] < diffs[0], diffs


def test_torus_period_doubling_study():
    # a tangentially localized source sampled on growing tori: solutions on
    # the common window stabilize as the period grows
    coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 0.5)
    nu = 0.5
    sols = {}
    for mult in (1, 2, 4):
        period = mult * L
        grid = make_slab_grid(2, nu, period, 24 * mult, 24)
        pts_x1 = grid.tangential_coords()
        x1_centered = np.where(pts_x1 > period / 2.0, pts_x1 - period, pts_x1)
        prof = np.sin(np.pi * grid.vertical_coords() / nu)
        vals = np.exp(-0.5 * (x1_centered / 0.5) ** 2)[:, None] * prof[None, :]
        sol = solve_constant_slab(coeffs, GridFunction(grid, vals), mode_floor=1e-10)
        sols[mult] = sol.u.values[:24, :]  # window x1 in [0, 2 pi)
    d12 = np.max(np.abs(sols[1] - sols[2]))
    d24 = np.max(np.abs(sols[2] - sols[4]))
    assert d24 < d12, (d12, d24)


def test_fd_residual_diagnostic_scales():
    # the reported finite-difference residual of the spectral solution
    # shrinks at the stencil rate under refinement
    coeffs = CoefficientField.constant(np.eye(2), [0.2, 1.0], 0.5)
    field = sine_product_field(2, L, 1.0)
    f = None
    sups = []
    for n in (16, 32, 64):
        grid = make_slab_grid(2, 1.0, L, n, n)
        from degenlab.fields import degenerate_operator_image

        src = degenerate_operator_image(field, coeffs.a_const, coeffs.b_const,
                                        coeffs.c_const)
        sol = solve_constant_slab(coeffs, src.on_grid(grid))
        sups.append(sol.residual_sup)
    rates = np.log2(np.array(sups[:-1]) / np.array(sups[1:]))
    assert np.all(rates > 1.5), (sups, rates)
