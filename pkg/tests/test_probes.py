import json

import numpy as np
import pytest

from degenlab.fields import AnalyticField, band_limited_field, constant_field
from degenlab.geometry import GridFunction, half_ball_points, make_slab_grid
from degenlab.operators import CoefficientField
from degenlab.probes import (ProbeReport, SpectralDerivatives, boundary_flatness_probe,
                             global_schauder_quotient, interpolation_probe,
                             max_principle_probe, operator_values, schauder_quotient,
                             taylor_remainder_probe, xd_du_holder_probe)
from degenlab.spectral import solve_constant_slab

L = 2.0 * np.pi


def base_grid(n=32):
    return make_slab_grid(2, 1.0, L, n, n)


def base_coeffs():
    return CoefficientField.constant([[1.0, 0.2], [0.2, 1.3]], [0.4, 1.1], 0.6)


def spectral_source(seed=0, n=32, coeffs=None):
    grid = base_grid(n)
    coeffs = coeffs or base_coeffs()
    f = band_limited_field(2, L, 1.0, kmax=2, seed=seed, vertical="slab").on_grid(grid)
    sol = solve_constant_slab(coeffs, f)
    return grid, sol, SpectralDerivatives(sol)


def xd2_field():
    return AnalyticField.from_mode(2, 1.0, (0.0,), [0.0, 0.0, 1.0])


def test_operator_values_match_analytic():
    from degenlab.fields import degenerate_operator_image

    coeffs = base_coeffs()
    u = AnalyticField.from_mode(2, 1.0 - 0.3j, (1.0,), [0.3, 0.9, -0.2], 0.2)
    au = degenerate_operator_image(u, coeffs.a_const, coeffs.b_const, coeffs.c_const)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0, L, 40), rng.uniform(0, 1, 40)])
    assert np.allclose(operator_values(coeffs, u, pts), au(pts), atol=1e-12)


class TestSchauderQuotient:
    def test_constant_solution_quotient_one(self):
        grid = base_grid(24)
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 0.0)
        rep = schauder_quotient(constant_field(2, 3.0), coeffs, grid, [0.0, 0.0],
                                0.2, 0.4, 0.5)
        assert rep.measured["quotient"] == 1.0
        assert rep.passed

    def test_zero_solution_anomaly_branch(self):
        grid = base_grid(24)
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 0.0)
        rep = schauder_quotient(constant_field(2, 0.0), coeffs, grid, [0.0, 0.0],
                                0.2, 0.4, 0.5)
        assert "quotient" not in rep.measured
        assert rep.passed  # zero over zero is not an anomaly
        assert rep.anomaly is None

    def test_scale_invariance_exact(self):
        # quotients are exactly invariant under u -> lambda u for dyadic lambda
        grid, sol, src = spectral_source(seed=1)
        coeffs = base_coeffs()
        q1 = schauder_quotient(src, coeffs, grid, [0.0, 0.0], 0.2, 0.4, 0.5).measured["quotient"]
        f4 = GridFunction(grid, 4.0 * (band_limited_field(2, L, 1.0, kmax=2, seed=1,
                                                          vertical="slab").on_grid(grid).values))
        sol4 = solve_constant_slab(coeffs, f4)
        q4 = schauder_quotient(SpectralDerivatives(sol4), coeffs, grid, [0.0, 0.0],
                               0.2, 0.4, 0.5).measured["quotient"]
        assert q1 == q4

    def test_translation_invariance_whole_cells(self):
        grid = base_grid(32)
        coeffs = base_coeffs()
        f = band_limited_field(2, L, 1.0, kmax=2, seed=2, vertical="slab").on_grid(grid)
        shift = 5
        f_shift = GridFunction(grid, np.roll(f.values, shift, axis=0))
        q0 = schauder_quotient(SpectralDerivatives(solve_constant_slab(coeffs, f)),
                               coeffs, grid, [0.0, 0.0], 0.2, 0.4, 0.5).measured["quotient"]
        center = [shift * grid.h_tangential, 0.0]
        q1 = schauder_quotient(SpectralDerivatives(solve_constant_slab(coeffs, f_shift)),
                               coeffs, grid, center, 0.2, 0.4, 0.5).measured["quotient"]
        assert q0 == pytest.approx(q1, rel=1e-10)

    def test_radius_order_enforced(self):
        grid, _, src = spectral_source(seed=3, n=16)
        with pytest.raises(ValueError):
            schauder_quotient(src, base_coeffs(), grid, [0.0, 0.0], 0.4, 0.2, 0.5)

    def test_report_replayable(self):
        grid, _, src = spectral_source(seed=4, n=16)
        rep = schauder_quotient(src, base_coeffs(), grid, [0.0, 0.0], 0.2, 0.4, 0.5,
                                seed=7)
        payload = json.loads(rep.to_json())
        assert payload["metadata"]["seed"] == 7
        assert payload["metadata"]["grid"]["n_tangential"] == 16
        assert payload["metadata"]["coefficients"]["constant"]["b"] == [0.4, 1.1]


class TestGlobalQuotient:
    def test_requires_vanishing_top(self):
        grid = base_grid(16)
        with pytest.raises(ValueError):
            global_schauder_quotient(constant_field(2, 1.0), base_coeffs(), grid, 0.5)

    def test_source_only_quotient_dominates(self):
        grid, _, src = spectral_source(seed=5, n=24)
        rep = global_schauder_quotient(src, base_coeffs(), grid, 0.5)
        assert rep.measured["quotient"] <= rep.measured["quotient_source_only"] + 1e-14


class TestTaylorRemainder:
    def coeffs(self):
        return CoefficientField.constant(np.eye(2), [0.0, 1.0], 0.0)

    def test_affine_zero_remainder(self):
        grid = base_grid(32)
        aff = AnalyticField.from_mode(2, 1.0, (0.0,), [0.2, 0.7])
        rep = taylor_remainder_probe(aff, self.coeffs(), grid, [0.0, 0.0],
                                     [0.1, 0.2, 0.3], 0.45, 0.5)
        assert max(rep.measured["remainder_sups"]) < 1e-13
        assert max(rep.measured["fit_errors"]) < 1e-12
        assert rep.passed

    def test_xd_squared_hand_values(self):
        # R_1 u = x_d^2; its sup over the half-ball grid points is the square
        # of the highest node below the radius
        grid = base_grid(32)
        rep = taylor_remainder_probe(xd2_field(), self.coeffs(), grid, [0.0, 0.0],
                                     [0.2, 0.3], 0.45, 0.5)
        for r, sup in zip(rep.measured["radii"], rep.measured["remainder_sups"]):
            ball = half_ball_points(grid, [0.0, 0.0], r)
            expected = np.max(ball.points[:, 1]) ** 2
            assert sup == pytest.approx(expected, rel=1e-12)
        assert rep.passed

    def test_rejects_large_radius(self):
        grid = base_grid(16)
        with pytest.raises(ValueError):
            taylor_remainder_probe(xd2_field(), self.coeffs(), grid, [0.0, 0.0],
                                   [0.2, 0.5], 0.45, 0.5)


class TestBoundaryFlatness:
    def test_affine_identically_zero(self):
        aff = AnalyticField.from_mode(2, 1.0, (0.0,), [0.2, 0.7])
        sols = [aff.on_grid(make_slab_grid(2, 1.0, L, 8, n)) for n in (8, 16)]
        rep = boundary_flatness_probe(sols)
        assert max(rep.measured["first_layer_weighted_second_derivatives"]) < 1e-12
        assert rep.passed

    def test_xd_squared_halving(self):
        sols = [xd2_field().on_grid(make_slab_grid(2, 1.0, L, 8, n)) for n in (8, 16, 32)]
        rep = boundary_flatness_probe(sols)
        seq = rep.measured["first_layer_weighted_second_derivatives"]
        assert seq == pytest.approx([2.0 / 8, 2.0 / 16, 2.0 / 32], rel=1e-9)
        assert rep.passed

    def test_needs_two_levels(self):
        with pytest.raises(ValueError):
            boundary_flatness_probe([xd2_field().on_grid(base_grid(8))])


class TestInterpolation:
    def test_constant_trivial(self):
        grid = base_grid(24)
        ball = half_ball_points(grid, [0.0, 0.0], 0.4)
        rep = interpolation_probe(constant_field(2, 2.0), 0.5, ball,
                                  [0.1, 0.2, 0.4])
        assert rep.passed
        assert rep.measured["covering_C"] <= 1.0 + 1e-12

    def test_xd_squared_finite_fit(self):
        grid = base_grid(24)
        ball = half_ball_points(grid, [0.0, 0.0], 0.4)
        rep = interpolation_probe(xd2_field(), 0.5, ball, [0.05, 0.1, 0.2, 0.4, 0.8])
        assert rep.passed
        assert np.isfinite(rep.measured["covering_C"])
        assert np.isfinite(rep.measured["covering_m"])

    def test_random_battery_single_covering_pair(self):
        grid = base_grid(24)
        ball = half_ball_points(grid, [0.0, 0.0], 0.4)
        eps = [0.05, 0.1, 0.2, 0.4, 0.8]
        caps = []
        for seed in range(6):
            field = band_limited_field(2, L, 1.0, kmax=2, seed=seed, vertical="slab")
            rep = interpolation_probe(field, 0.5, ball, eps)
            assert rep.passed
            caps.append((rep.measured["covering_C"], rep.measured["covering_m"]))
        c_star = max(c for c, _ in caps)
        m_star = max(m for _, m in caps)
        assert np.isfinite(c_star) and np.isfinite(m_star)

    def test_empty_eps_rejected(self):
        grid = base_grid(16)
        ball = half_ball_points(grid, [0.0, 0.0], 0.3)
        with pytest.raises(ValueError):
            interpolation_probe(xd2_field(), 0.5, ball, [])


class TestXdDuHolder:
    def test_affine_two_point_hand_check(self):
        # u affine: x_d Du has one nonconstant component x_d * u_xd
        grid = base_grid(32)
        ball = half_ball_points(grid, [0.0, 0.0], 0.4)
        aff = AnalyticField.from_mode(2, 1.0, (0.0,), [0.2, 0.7])
        rep = xd_du_holder_probe(aff, 0.5, ball, 0.4)
        assert rep.passed
        assert rep.measured["xd_d2u_sup"] < 1e-14

    def test_zero_function(self):
        grid = base_grid(16)
        ball = half_ball_points(grid, [0.0, 0.0], 0.3)
        rep = xd_du_holder_probe(constant_field(2, 0.0), 0.5, ball, 0.3)
        assert rep.passed

    def test_spectral_battery(self):
        for seed in range(3):
            grid, _, src = spectral_source(seed=seed, n=24)
            for r in (0.25, 0.4):
                ball = half_ball_points(grid, [0.0, 0.0], r)
                rep = xd_du_holder_probe(src, 0.5, ball, r)
                assert rep.passed, rep.measured


class TestMaxPrinciple:
    def test_explicit_constant_value(self):
        # Lambda = sup x_d a^{dd} = 1 on a unit slab with a = I, b0 = 1:
        # C = 4 e^{1/2} ~= 6.5949
        grid = base_grid(16)
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 0.0)
        f = GridFunction(grid, -np.ones(grid.shape))
        rep = max_principle_probe(coeffs, f, 0.0)
        assert rep.measured["bound_constant"] == pytest.approx(4.0 * np.exp(0.5), rel=1e-12)
        assert rep.measured["bound_constant"] == pytest.approx(6.5949, abs=2e-4)
        assert rep.passed

    def test_hand_solution_battery(self):
        # f = -1, g = 0, c = 0, b = (0, 1): u = -(nu - x_d), sup = nu <= C
        grid = base_grid(16)
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 0.0)
        rep = max_principle_probe(coeffs, GridFunction(grid, -np.ones(grid.shape)), 0.0)
        assert rep.measured["sign_applicable"]
        assert rep.measured["max_u"] <= 1e-10
        assert rep.measured["u_sup"] == pytest.approx(1.0, rel=1e-10)
        assert rep.passed

    def test_zero_data(self):
        grid = base_grid(12)
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], 0.3)
        rep = max_principle_probe(coeffs, GridFunction.zeros(grid), 0.0)
        assert rep.measured["u_sup"] <= 1e-12
        assert rep.passed

    def test_rejects_negative_c(self):
        grid = base_grid(12)
        coeffs = CoefficientField.constant(np.eye(2), [0.0, 1.0], -0.5)
        with pytest.raises(ValueError):
            max_principle_probe(coeffs, GridFunction.zeros(grid), 0.0)


def test_probe_reports_deterministic():
    grid, _, src = spectral_source(seed=6, n=16)
    rep1 = schauder_quotient(src, base_coeffs(), grid, [0.0, 0.0], 0.2, 0.4, 0.5, seed=3)
    grid2, _, src2 = spectral_source(seed=6, n=16)
    rep2 = schauder_quotient(src2, base_coeffs(), grid2, [0.0, 0.0], 0.2, 0.4, 0.5, seed=3)
    assert rep1.to_json() == rep2.to_json()


def test_probe_report_roundtrip():
    rep = ProbeReport("demo", {"quotient": 1.5}, 2.0, True, {"seed": 0})
    payload = json.loads(rep.to_json())
    assert payload["name"] == "demo"
    assert payload["passed"] is True
