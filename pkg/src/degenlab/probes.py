"""Empirical verification harness for the a priori estimates.

Each probe measures the quantities appearing in one estimate or identity
over finite point sets and reports measured quotients together with a pass
flag.  The constants in the underlying estimates are existential, so probes
assert *stability under refinement* or *finiteness* (the strongest
falsifiable reading), with two exceptions: the maximum-principle bound,
whose proof supplies the explicit constant 4*Lambda*e^{sigma nu}/b0^2, and
the weighted-gradient Hölder bound, whose proof chain is reproduced
pointwise with its sharp geometric factor.

Every probe is deterministic given its inputs; reports embed the grid,
coefficient and parameter data needed to replay them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import fdm
from .fields import GridDerivatives
from .geometry import GridFunction, PointSet, SlabGrid, half_ball_points
from .holder import ck_2alpha_norm, ck_alpha_norm, holder_seminorm, multi_indices, sup_norm

__all__ = [
    "ProbeReport",
    "SpectralDerivatives",
    "operator_values",
    "schauder_quotient",
    "global_schauder_quotient",
    "taylor_remainder_probe",
    "boundary_flatness_probe",
    "interpolation_probe",
    "xd_du_holder_probe",
    "max_principle_probe",
]


@dataclass
class ProbeReport:
    name: str
    measured: dict
    cap: float | None
    passed: bool
    metadata: dict = field(default_factory=dict)
    anomaly: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "cap": self.cap,
            "passed": bool(self.passed),
            "metadata": self.metadata,
            "anomaly": self.anomaly,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class SpectralDerivatives:
    """Derivative provider over grid nodes backed by a spectral solution."""

    def __init__(self, solution):
        self.solution = solution
        self._lookup = GridDerivatives(solution.u)

    def __call__(self, pts):
        return self.solution.u.values[self._lookup.node_indices(pts)]

    def derivative_values(self, beta, pts):
        beta = tuple(int(b) for b in beta)
        if all(b == 0 for b in beta):
            return self(pts)
        return self.solution.derivative_grid(beta).values[self._lookup.node_indices(pts)]


def operator_values(coeffs, source, pts) -> np.ndarray:
    """A u at the points, assembled from the source's derivatives.

    Uses the derivative provider (analytic closures or stored mode data), so
    no extra stencil error enters beyond the provider's own.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    d = pts.shape[1]
    a = coeffs.a_at(pts)
    b = coeffs.b_at(pts)
    c = coeffs.c_at(pts)
    u = np.asarray(source(pts), dtype=float)
    out = c * u
    for i in range(d):
        e_i = tuple(1 if k == i else 0 for k in range(d))
        out -= b[:, i] * np.asarray(source.derivative_values(e_i, pts), dtype=float)
    xd = pts[:, -1]
    for i in range(d):
        for j in range(i, d):
            beta = tuple((1 if k == i else 0) + (1 if k == j else 0) for k in range(d))
            dij = np.asarray(source.derivative_values(beta, pts), dtype=float)
            factor = 1.0 if i == j else 2.0
            out -= xd * factor * a[:, i, j] * dij
    return out


def _values_array(source, pts):
    return np.asarray(source(pts), dtype=float)


def schauder_quotient(source, coeffs, grid: SlabGrid, center, r: float, r0: float,
                      alpha: float, cap: float | None = None, seed: int = 0) -> ProbeReport:
    """Local estimate quotient on nested boundary half-balls.

    Q = ||u||_{C^{2+alpha}_s(B_r^+)} / (||A u||_{C^alpha_s(B_r0^+)} + ||u||_{C(B_r0^+)}).
    Passes when Q <= cap (always, when no cap is configured); a vanishing
    denominator against a nonzero numerator is flagged as an anomaly.
    """
    if not (0.0 < r < r0):
        raise ValueError(f"need 0 < r < r0, got r={r}, r0={r0}")
    inner = half_ball_points(grid, center, r)
    outer = half_ball_points(grid, center, r0)
    num_report = ck_2alpha_norm(source, 0, alpha, inner, seed=seed)
    numerator = num_report.c_k_2alpha
    au = operator_values(coeffs, source, outer.points)
    u_outer = _values_array(source, outer.points)
    den = (float(np.max(np.abs(au)))
           + holder_seminorm(au, alpha, outer, seed=seed)
           + float(np.max(np.abs(u_outer))))
    measured = {"numerator": numerator, "denominator": den}
    metadata = {"grid": grid.descriptor(), "center": list(np.asarray(center, dtype=float)),
                "r": r, "r0": r0, "alpha": alpha, "seed": seed,
                "coefficients": coeffs.descriptor(),
                "points_inner": len(inner), "points_outer": len(outer)}
    if den <= 1e-14 * max(numerator, 1.0):
        anomaly = None if numerator <= 1e-14 else "vanishing denominator with nonzero numerator"
        return ProbeReport("schauder_quotient", measured, cap, passed=anomaly is None,
                           metadata=metadata, anomaly=anomaly)
    q = numerator / den
    measured["quotient"] = q
    passed = True if cap is None else q <= cap
    return ProbeReport("schauder_quotient", measured, cap, passed, metadata)


def global_schauder_quotient(source, coeffs, grid: SlabGrid, alpha: float, k: int = 0,
                             cap: float | None = None, top_tol: float = 1e-10,
                             seed: int = 0) -> ProbeReport:
    """Global slab quotient; for c >= 0 also the source-only quotient."""
    from .geometry import grid_points

    pts_all = grid_points(grid)
    top = pts_all[:, -1] == grid.nu
    u_all = _values_array(source, pts_all)
    scale = max(float(np.max(np.abs(u_all))), 1e-300)
    top_max = float(np.max(np.abs(u_all[top])))
    if top_max > top_tol * scale:
        raise ValueError(f"u must vanish on the top boundary; found {top_max}")
    points = PointSet(pts_all, tag="full_grid", grid=grid)
    num = ck_2alpha_norm(source, k, alpha, points, seed=seed).c_k_2alpha

    au = operator_values(coeffs, source, pts_all)
    au_gf = GridFunction(grid, au.reshape(grid.shape))
    au_source = GridDerivatives(au_gf)
    den_f = ck_alpha_norm(au_source, k, alpha, points, seed=seed).c_k_alpha
    den_full = den_f + float(np.max(np.abs(u_all)))

    measured = {"numerator": num, "denominator": den_full}
    metadata = {"grid": grid.descriptor(), "alpha": alpha, "k": k, "seed": seed,
                "coefficients": coeffs.descriptor()}
    if den_full <= 1e-14 * max(num, 1.0):
        anomaly = None if num <= 1e-14 else "vanishing denominator with nonzero numerator"
        return ProbeReport("global_schauder_quotient", measured, cap,
                           passed=anomaly is None, metadata=metadata, anomaly=anomaly)
    q = num / den_full
    measured["quotient"] = q
    c_vals = coeffs.c_at(pts_all)
    if np.all(c_vals >= 0.0) and den_f > 1e-14 * max(num, 1.0):
        measured["quotient_source_only"] = num / den_f
    passed = True if cap is None else q <= cap
    return ProbeReport("global_schauder_quotient", measured, cap, passed, metadata)


def _best_affine_sup_fit(points: np.ndarray, values: np.ndarray) -> float:
    """Chebyshev (sup-norm) error of the best degree-1 fit, via linear programming."""
    n, d = points.shape
    # variables: [c0, c_1..c_d, t]; minimize t s.t. |u - (c0 + c.x)| <= t
    basis = np.hstack([np.ones((n, 1)), points])
    a_ub = np.vstack([np.hstack([basis, -np.ones((n, 1))]),
                      np.hstack([-basis, -np.ones((n, 1))])])
    b_ub = np.concatenate([values, -values])
    cost = np.zeros(d + 2)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None)] * (d + 1) + [(0.0, None)],
                  method="highs")
    if not res.success:
        raise RuntimeError(f"sup-norm fit LP failed: {res.message}")
    return float(res.x[-1])


def taylor_remainder_probe(source, coeffs, grid: SlabGrid, center, r_sequence, r0: float,
                           alpha: float, ratio_cap: float = 4.0,
                           seed: int = 0) -> ProbeReport:
    """Degree-1 approximation quality on shrinking boundary half-balls.

    (i) Chebyshev degree-1 fit errors e(r), regressed against (r^2, const)
    with nonnegative coefficients (the shape of the two-term bound).
    (ii) The first-order Taylor remainder quotient
    ||u - T_1 u||_{C(B_r^+)} / r^{1 + alpha/2}, which must not explode:
    consecutive levels may grow by at most ``ratio_cap``.
    """
    r_sequence = sorted(float(r) for r in r_sequence)
    if any(r >= r0 for r in r_sequence):
        raise ValueError("every probe radius must satisfy r < r0")
    coeffs.require_constant("taylor_remainder_probe")
    center = np.asarray(center, dtype=float)
    d = grid.d
    u0 = float(np.asarray(source(center[None, :]))[0])
    grad0 = np.array([
        float(np.asarray(source.derivative_values(
            tuple(1 if k == i else 0 for k in range(d)), center[None, :]))[0])
        for i in range(d)
    ])
    fit_errors, quotients, sup_remainders = [], [], []
    for r in r_sequence:
        ball = half_ball_points(grid, center, r)
        vals = _values_array(source, ball.points)
        fit_errors.append(_best_affine_sup_fit(ball.points, vals))
        taylor = u0 + (ball.points - center) @ grad0
        rem = float(np.max(np.abs(vals - taylor)))
        sup_remainders.append(rem)
        quotients.append(rem / r ** (1.0 + alpha / 2.0))
    # nonnegative least squares against (r^2, 1)
    from scipy.optimize import nnls

    design = np.stack([np.square(r_sequence), np.ones(len(r_sequence))], axis=-1)
    nn_coeffs, nn_resid = nnls(design, np.asarray(fit_errors))
    ratios = [quotients[i + 1] / quotients[i] if quotients[i] > 0.0 else 0.0
              for i in range(len(quotients) - 1)]
    passed = all(rr <= ratio_cap for rr in ratios)
    measured = {
        "radii": r_sequence,
        "fit_errors": fit_errors,
        "fit_coefficients_r2_const": list(map(float, nn_coeffs)),
        "fit_residual": float(nn_resid),
        "remainder_sups": sup_remainders,
        "remainder_quotients": quotients,
        "quotient_ratios": ratios,
    }
    metadata = {"grid": grid.descriptor(), "center": center.tolist(), "r0": r0,
                "alpha": alpha, "seed": seed, "coefficients": coeffs.descriptor()}
    return ProbeReport("taylor_remainder", measured, ratio_cap, passed, metadata)


def boundary_flatness_probe(solutions, noise_band: float = 0.10) -> ProbeReport:
    """Weighted second derivatives on the first interior layer under refinement.

    ``solutions`` is a sequence of grid functions on successively refined
    grids (same domain).  Reports max over the first interior layer of
    |x_d D^2 u| per level; passes when the sequence decreases up to the
    noise band.
    """
    sols = list(solutions)
    if len(sols) < 2:
        raise ValueError("need at least 2 refinement levels")
    values = []
    for gf in sols:
        grid = gf.grid
        src = GridDerivatives(gf)
        layer = 1  # first interior layer
        xd = grid.h_vertical * layer
        worst = 0.0
        d = grid.d
        for beta in multi_indices(d, 2):
            dvals = src.derivative_grid(beta).values[..., layer]
            worst = max(worst, xd * float(np.max(np.abs(dvals))))
        values.append(worst)
    decreasing = all(values[i + 1] <= values[i] * (1.0 + noise_band)
                     for i in range(len(values) - 1))
    measured = {"first_layer_weighted_second_derivatives": values}
    metadata = {"grids": [gf.grid.descriptor() for gf in sols], "noise_band": noise_band}
    return ProbeReport("boundary_flatness", measured, None, decreasing, metadata)


def _interp_norms(source, alpha: float, points: PointSet, seed: int) -> dict:
    pts = points.points
    d = pts.shape[1]
    xd = pts[:, -1]
    u_vals = _values_array(source, pts)
    first = [np.asarray(source.derivative_values(
        tuple(1 if k == i else 0 for k in range(d)), pts), dtype=float)
        for i in range(d)]
    second = {}
    for beta in multi_indices(d, 2):
        second[beta] = np.asarray(source.derivative_values(beta, pts), dtype=float)
    report2 = ck_2alpha_norm(source, 0, alpha, points, seed=seed)
    norms = {
        "u_sup": float(np.max(np.abs(u_vals))),
        "u_alpha": float(np.max(np.abs(u_vals))) + holder_seminorm(u_vals, alpha, points, seed=seed),
        "du_sup": max(float(np.max(np.abs(g))) for g in first),
        "xddu_alpha": max(
            float(np.max(np.abs(xd * g))) + holder_seminorm(xd * g, alpha, points, seed=seed)
            for g in first),
        "xdd2u_sup": max(float(np.max(np.abs(xd * v))) for v in second.values()),
        "u_2alpha": report2.c_k_2alpha,
    }
    return norms


def interpolation_probe(source, alpha: float, points: PointSet, eps_grid,
                        m_cap: float | None = None, seed: int = 0) -> ProbeReport:
    """Interpolation inequalities: minimal C(eps) and fitted exponent m.

    For each of the four inequalities
        ||u||_{C^alpha_s}   <= eps ||u||_{C^{2+alpha}_s} + C eps^{-m} ||u||_C
        ||Du||_C            <= eps ||u||_{C^{2+alpha}_s} + C eps^{-m} ||u||_C
        ||x_d Du||_{C^alpha_s} <= ...
        ||x_d D^2 u||_C     <= ...
    the minimal constant C(eps) is computed per eps; the exponent m is the
    slope of log C(eps) against log(1/eps).  Passes when one (C, m) pair
    covers the whole battery (finite fit, optional cap on m).
    """
    eps_grid = np.asarray(sorted(float(e) for e in eps_grid))
    if eps_grid.size == 0:
        raise ValueError("eps grid must be nonempty")
    if np.any(eps_grid <= 0.0) or np.any(eps_grid >= 1.0):
        raise ValueError("eps values must lie in (0, 1)")
    norms = _interp_norms(source, alpha, points, seed)
    n2 = norms["u_2alpha"]
    n0 = norms["u_sup"]
    lhs_map = {
        "u_alpha": norms["u_alpha"],
        "du_sup": norms["du_sup"],
        "xddu_alpha": norms["xddu_alpha"],
        "xdd2u_sup": norms["xdd2u_sup"],
    }
    per_ineq = {}
    slopes = []
    for key, lhs in lhs_map.items():
        c_eps = np.maximum(0.0, (lhs - eps_grid * n2)) / max(n0, 1e-300)
        mask = c_eps > 0.0
        if np.sum(mask) >= 2:
            slope, intercept = np.polyfit(np.log(1.0 / eps_grid[mask]), np.log(c_eps[mask]), 1)
            slopes.append(float(slope))
        else:
            slope, intercept = 0.0, -np.inf
        per_ineq[key] = {"C_eps": c_eps.tolist(), "fitted_m": float(slope)}
    m_star = max(0.0, max(slopes, default=0.0))
    c_star = 0.0
    for key in lhs_map:
        c_eps = np.asarray(per_ineq[key]["C_eps"])
        c_star = max(c_star, float(np.max(c_eps * eps_grid ** m_star)))
    finite = np.isfinite(c_star) and np.isfinite(m_star)
    passed = bool(finite and (m_cap is None or m_star <= m_cap))
    measured = {"per_inequality": per_ineq, "covering_C": c_star, "covering_m": m_star,
                "norms": norms, "eps_grid": eps_grid.tolist()}
    metadata = {"alpha": alpha, "points": len(points), "seed": seed, "m_cap": m_cap}
    return ProbeReport("interpolation", measured, m_cap, passed, metadata)


def xd_du_holder_probe(source, alpha: float, points: PointSet, r: float,
                       seed: int = 0) -> ProbeReport:
    """Hölder bound for the weighted gradient on a half-ball of radius r.

    The proof chain gives, pointwise over pairs,
        |x1_d Du(x1) - x2_d Du(x2)| <= (||Du||_C + ||x_d D^2 u||_C) |x1 - x2|
    and sup_{pairs in B_r^+} |x1 - x2| / s^alpha <= 2 r^{1 - alpha/2}, hence
        [x_d Du]_{C^alpha_s} <= 2 (||Du||_C + ||x_d D^2 u||_C) r^{1 - alpha/2}.
    Both links are checked with their sharp measured factors.
    """
    pts = points.points
    d = pts.shape[1]
    xd = pts[:, -1]
    first = [np.asarray(source.derivative_values(
        tuple(1 if k == i else 0 for k in range(d)), pts), dtype=float)
        for i in range(d)]
    du_sup = max(float(np.max(np.abs(g))) for g in first)
    xdd2_sup = 0.0
    for beta in multi_indices(d, 2):
        vals = np.asarray(source.derivative_values(beta, pts), dtype=float)
        xdd2_sup = max(xdd2_sup, float(np.max(np.abs(xd * vals))))
    msum = du_sup + xdd2_sup

    # sharp geometric factor: sup over sampled pairs of |x - y| / s(x, y)^alpha
    from .geometry import cycloidal_distance_pairwise

    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    s = cycloidal_distance_pairwise(pts)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(s > 0.0, dist / np.where(s > 0.0, s, 1.0) ** alpha, 0.0)
    rho = float(np.max(ratio))
    geo_cap = 2.0 * r ** (1.0 - alpha / 2.0)

    seminorms = [holder_seminorm(xd * g, alpha, points, seed=seed) for g in first]
    semi_max = max(seminorms)
    slack = 1.0 + 1e-12
    pair_link = semi_max <= msum * rho * slack
    geo_link = rho <= geo_cap * slack
    passed = bool(pair_link and geo_link)
    measured = {
        "weighted_gradient_seminorms": seminorms,
        "du_sup": du_sup,
        "xd_d2u_sup": xdd2_sup,
        "pair_factor_rho": rho,
        "geometric_cap": geo_cap,
        "bound_value": msum * geo_cap,
    }
    metadata = {"alpha": alpha, "r": r, "points": len(points), "seed": seed}
    return ProbeReport("xd_du_holder", measured, None, passed, metadata)


def max_principle_probe(coeffs, f: GridFunction, g_top, tol: float = 1e-8,
                        seed: int = 0) -> ProbeReport:
    """Sign preservation and the explicit maximum-principle estimate.

    Solves with the sign-safe upwind scheme.  (i) When f <= 0 and g <= 0 the
    computed solution must stay below ``tol``.  (ii) The bound
    ||u|| <= C (||f|| + ||g||) is asserted with the explicit constant
    C = 4 Lambda e^{sigma nu} / b0^2, sigma = b0 / (2 Lambda), where Lambda
    is the sampled sup of x_d a^{dd}(x) and b0 the sampled inf of b^d over
    the closed slab.
    """
    from .geometry import grid_points

    grid = f.grid
    pts = grid_points(grid)
    c_vals = coeffs.c_at(pts)
    if np.any(c_vals < 0.0):
        raise ValueError(f"maximum principle requires c >= 0; sampled min {np.min(c_vals)}")
    bd = coeffs.b_at(pts)[:, -1]
    b0 = float(np.min(bd))
    if b0 <= 0.0:
        raise ValueError(f"maximum principle requires inf b^d > 0; sampled {b0}")
    add = coeffs.a_at(pts)[:, -1, -1]
    lam = float(np.max(pts[:, -1] * add))
    sigma = b0 / (2.0 * lam)
    const = 4.0 * lam * np.exp(sigma * grid.nu) / b0 ** 2

    system = fdm.assemble_system(coeffs, f, g_top, scheme="upwind")
    rep = fdm.solve_slab_fdm(system)
    g_arr = system.g_top
    f_sup = float(np.max(np.abs(f.values)))
    g_sup = float(np.max(np.abs(g_arr)))
    u_sup = rep.u.sup_norm()
    bound_rhs = const * (f_sup + g_sup)
    bound_ok = u_sup <= bound_rhs

    sign_applicable = bool(np.all(np.asarray(f.values) <= 0.0) and np.all(g_arr <= 0.0))
    max_u = float(np.max(rep.u.values))
    sign_ok = (max_u <= tol) if sign_applicable else True

    measured = {
        "u_sup": u_sup,
        "bound_constant": const,
        "sigma": sigma,
        "Lambda": lam,
        "b0": b0,
        "bound_rhs": bound_rhs,
        "max_u": max_u,
        "sign_applicable": sign_applicable,
    }
    metadata = {"grid": grid.descriptor(), "coefficients": coeffs.descriptor(),
                "tol": tol, "seed": seed,
                "solver": rep.to_dict()}
    return ProbeReport("max_principle", measured, const, bool(bound_ok and sign_ok), metadata)
