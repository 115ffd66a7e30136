"""Coefficient models and discrete application of degenerate elliptic operators.

The operators act on functions over the upper half-space / slab as

    A u = -x_d * tr(a(x) D^2 u) - b(x) . Du + c(x) u,

with a(x) symmetric positive definite, the vertical drift component b^d
bounded below by a positive constant on the degenerate boundary x_d = 0, and
the second-order part switched off exactly on that boundary by the weight
x_d.  Discrete application uses second-order central differences in the
interior, second-order one-sided differences at the two vertical boundaries
and periodic wrap-around tangentially.

Also provided are the exact coefficient transforms used throughout the
package: tangential shears, the slab-preserving reduction of the
second-order part to the identity matrix, exponential (in x_d) conjugation
and the commuted operators that absorb vertical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import _d1_tangential, _d1_vertical
from .geometry import GridFunction, SlabGrid, grid_points

__all__ = [
    "CoefficientError",
    "GridTooCoarseError",
    "CoefficientField",
    "HestonParams",
    "heston_coefficients",
    "apply_operator",
    "shear_coefficients",
    "isotropize",
    "AffineMap",
    "exponential_transform",
    "exponential_transform_weighted",
    "commuted_operator_apply",
]


class CoefficientError(ValueError):
    """Coefficient data violates an ellipticity or positivity requirement."""


class GridTooCoarseError(ValueError):
    """The grid cannot support the requested difference stencils."""


class CoefficientField:
    """Operator data (a, b, c) with sampled ellipticity/positivity metadata.

    ``a_fn``, ``b_fn``, ``c_fn`` evaluate vectorized over an (n, d) array of
    points and return arrays of shape (n, d, d), (n, d) and (n,).  Constant
    fields carry their arrays directly and skip per-point evaluation.

    ``lambda0`` (ellipticity floor), ``b0`` (floor of b^d on the degenerate
    boundary) and ``Lambda`` (sum of coefficient sup-norms) are exact for
    constant coefficients and are otherwise *sampled* quantities, refreshed
    on the probe set passed to :meth:`validate_on`; a violation raises
    :class:`CoefficientError` rather than being silently recorded.
    """

    def __init__(self, d, a_fn, b_fn, c_fn, is_constant,
                 a_const=None, b_const=None, c_const=None,
                 lambda0=None, b0=None, Lambda=None):
        self.d = int(d)
        self.a_fn = a_fn
        self.b_fn = b_fn
        self.c_fn = c_fn
        self.is_constant = bool(is_constant)
        self.a_const = None if a_const is None else np.asarray(a_const, dtype=float)
        self.b_const = None if b_const is None else np.asarray(b_const, dtype=float)
        self.c_const = None if c_const is None else float(c_const)
        self.lambda0 = lambda0
        self.b0 = b0
        self.Lambda = Lambda

    # -- constructors -------------------------------------------------------

    @staticmethod
    def constant(a, b, c, require_drift: bool = True) -> "CoefficientField":
        """Constant coefficients with exact metadata.

        ``require_drift=False`` admits a nonpositive vertical drift; the
        exponential conjugation in its unit-weight form produces such fields
        (well-posedness there is carried by the shifted zeroth coefficient).
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        c = float(c)
        d = b.shape[0]
        if a.shape != (d, d):
            raise CoefficientError(f"a must be ({d}, {d}), got {a.shape}")
        if not np.allclose(a, a.T, rtol=0.0, atol=1e-13 * max(1.0, np.max(np.abs(a)))):
            raise CoefficientError("a must be symmetric")
        a = 0.5 * (a + a.T)
        eigmin = float(np.min(np.linalg.eigvalsh(a)))
        if eigmin <= 0.0:
            raise CoefficientError(f"a is not positive definite (min eigenvalue {eigmin})")
        if require_drift and b[-1] <= 0.0:
            raise CoefficientError(f"b^d = {b[-1]} must be positive")
        Lambda = float(np.sum(np.abs(a)) + np.sum(np.abs(b)) + abs(c))

        def a_fn(pts):
            return np.broadcast_to(a, (np.atleast_2d(pts).shape[0], d, d))

        def b_fn(pts):
            return np.broadcast_to(b, (np.atleast_2d(pts).shape[0], d))

        def c_fn(pts):
            return np.full(np.atleast_2d(pts).shape[0], c)

        b0 = float(b[-1]) if b[-1] > 0.0 else None
        return CoefficientField(d, a_fn, b_fn, c_fn, True, a, b, c,
                                lambda0=eigmin, b0=b0, Lambda=Lambda)

    @staticmethod
    def from_callables(d, a_fn, b_fn, c_fn, probe_points) -> "CoefficientField":
        field = CoefficientField(d, a_fn, b_fn, c_fn, False)
        field.validate_on(probe_points)
        return field

    # -- evaluation -----------------------------------------------------------

    def a_at(self, pts) -> np.ndarray:
        return np.asarray(self.a_fn(np.atleast_2d(pts)), dtype=float)

    def b_at(self, pts) -> np.ndarray:
        return np.asarray(self.b_fn(np.atleast_2d(pts)), dtype=float)

    def c_at(self, pts) -> np.ndarray:
        return np.asarray(self.c_fn(np.atleast_2d(pts)), dtype=float)

    # -- metadata -------------------------------------------------------------

    def validate_on(self, probe_points) -> "CoefficientField":
        """Sample ellipticity and positivity floors; raise on violation.

        Updates ``lambda0``, ``b0`` and ``Lambda`` to the sampled values.
        Bottom-boundary positivity of b^d is checked on the x_d = 0
        projections of the probe points.
        """
        pts = np.atleast_2d(np.asarray(probe_points, dtype=float))
        if pts.shape[1] != self.d:
            raise CoefficientError(f"probe points have dimension {pts.shape[1]}, expected {self.d}")
        a = self.a_at(pts)
        asym = np.max(np.abs(a - np.swapaxes(a, 1, 2)))
        if asym > 1e-10 * max(1.0, np.max(np.abs(a))):
            raise CoefficientError(f"a(x) asymmetric by {asym} at sampled points")
        eigmin = float(np.min(np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, 1, 2)))))
        if eigmin <= 0.0:
            raise CoefficientError(f"sampled ellipticity floor {eigmin} is not positive")
        bottom = pts.copy()
        bottom[:, -1] = 0.0
        bd = self.b_at(bottom)[:, -1]
        b0 = float(np.min(bd))
        if b0 <= 0.0:
            raise CoefficientError(f"sampled floor of b^d on the degenerate boundary is {b0}")
        b = self.b_at(pts)
        c = self.c_at(pts)
        Lambda = float(np.sum(np.max(np.abs(a), axis=0))
                       + np.sum(np.max(np.abs(b), axis=0))
                       + np.max(np.abs(c)))
        self.lambda0 = eigmin
        self.b0 = b0
        self.Lambda = Lambda
        return self

    def require_constant(self, what: str) -> None:
        if not self.is_constant:
            raise CoefficientError(f"{what} is defined for constant coefficients only")

    def descriptor(self) -> dict:
        if self.is_constant:
            return {
                "constant": {
                    "a": self.a_const.tolist(),
                    "b": self.b_const.tolist(),
                    "c": self.c_const,
                }
            }
        return {"variable": {"d": self.d, "lambda0": self.lambda0,
                             "b0": self.b0, "Lambda": self.Lambda}}


@dataclass(frozen=True)
class HestonParams:
    """Parameters of the two-dimensional stochastic-volatility operator."""

    q: float
    c0: float
    kappa: float
    theta: float
    sigma: float
    rho: float

    def __post_init__(self):
        if self.c0 < 0.0:
            raise CoefficientError(f"c0 must be >= 0, got {self.c0}")
        if self.kappa <= 0.0:
            raise CoefficientError(f"kappa must be > 0, got {self.kappa}")
        if self.theta <= 0.0:
            raise CoefficientError(f"theta must be > 0, got {self.theta}")
        if self.sigma == 0.0:
            raise CoefficientError("sigma must be nonzero")
        if not (-1.0 < self.rho < 1.0):
            raise CoefficientError(f"rho must lie in (-1, 1), got {self.rho}")


def heston_coefficients(p: HestonParams) -> CoefficientField:
    """Coefficient field of the Heston operator in degenerate form (d = 2).

    a = 0.5 * [[1, rho*sigma], [rho*sigma, sigma^2]] (constant),
    b(x) = (c0 - q - x_2/2, kappa*(theta - x_2)), c = c0.  The vertical
    drift floor on the boundary is b0 = kappa*theta and the ellipticity
    floor is the smaller eigenvalue of a.
    """
    a = 0.5 * np.array([[1.0, p.rho * p.sigma], [p.rho * p.sigma, p.sigma ** 2]])
    lambda0 = float(np.min(np.linalg.eigvalsh(a)))
    if lambda0 <= 0.0:
        raise CoefficientError("Heston second-order matrix is not positive definite")

    def a_fn(pts):
        return np.broadcast_to(a, (np.atleast_2d(pts).shape[0], 2, 2))

    def b_fn(pts):
        pts = np.atleast_2d(pts)
        x2 = pts[:, 1]
        return np.stack([p.c0 - p.q - 0.5 * x2, p.kappa * (p.theta - x2)], axis=-1)

    def c_fn(pts):
        return np.full(np.atleast_2d(pts).shape[0], p.c0)

    return CoefficientField(2, a_fn, b_fn, c_fn, False,
                            lambda0=lambda0, b0=p.kappa * p.theta, Lambda=None)


# ---------------------------------------------------------------------------
# discrete operator application
# ---------------------------------------------------------------------------


def _require_stencil_grid(grid: SlabGrid) -> None:
    if grid.n_vertical + 1 < 4:
        raise GridTooCoarseError(
            f"need at least 4 vertical levels for one-sided stencils, got {grid.n_vertical + 1}"
        )
    if grid.n_tangential < 3:
        raise GridTooCoarseError(
            f"need at least 3 tangential nodes for central stencils, got {grid.n_tangential}"
        )


def _d2_vertical(values: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(values)
    out[..., 1:-1] = (values[..., 2:] - 2.0 * values[..., 1:-1] + values[..., :-2]) / h ** 2
    out[..., -1] = (2.0 * values[..., -1] - 5.0 * values[..., -2]
                    + 4.0 * values[..., -3] - values[..., -4]) / h ** 2
    # bottom layer left at 0: every use multiplies by the weight x_d = 0
    return out


def _d2_tangential(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(values, -1, axis=axis) - 2.0 * values + np.roll(values, 1, axis=axis)) / h ** 2


def _cross_tangential(values: np.ndarray, ax1: int, ax2: int, h1: float, h2: float) -> np.ndarray:
    pp = np.roll(np.roll(values, -1, axis=ax1), -1, axis=ax2)
    pm = np.roll(np.roll(values, -1, axis=ax1), 1, axis=ax2)
    mp = np.roll(np.roll(values, 1, axis=ax1), -1, axis=ax2)
    mm = np.roll(np.roll(values, 1, axis=ax1), 1, axis=ax2)
    return (pp - pm - mp + mm) / (4.0 * h1 * h2)


def _derivative_tables(u: GridFunction):
    """First and second difference arrays of a grid function, all axes."""
    grid = u.grid
    values = np.asarray(u.values)
    d = grid.d
    ht, hv = grid.h_tangential, grid.h_vertical
    d1 = [_d1_tangential(values, ax, ht) for ax in range(d - 1)]
    d1.append(_d1_vertical(values, hv))
    d2 = {}
    for i in range(d - 1):
        d2[(i, i)] = _d2_tangential(values, i, ht)
        for j in range(i + 1, d - 1):
            d2[(i, j)] = _cross_tangential(values, i, j, ht, ht)
        d2[(i, d - 1)] = _d1_tangential(d1[d - 1], i, ht)
    d2[(d - 1, d - 1)] = _d2_vertical(values, hv)
    return d1, d2


def apply_operator(coeffs: CoefficientField, u: GridFunction) -> GridFunction:
    """Sample A u = -x_d tr(a D^2 u) - b . Du + c u on the grid of ``u``.

    Second-order accurate everywhere; at x_d = 0 the second-order term is
    exactly zero because of the degeneracy weight.
    """
    grid = u.grid
    if coeffs.d != grid.d:
        raise ValueError(f"coefficient dimension {coeffs.d} != grid dimension {grid.d}")
    _require_stencil_grid(grid)
    d = grid.d
    d1, d2 = _derivative_tables(u)
    xd = grid.vertical_coords()  # broadcasts along the last axis

    if coeffs.is_constant:
        a, b, c = coeffs.a_const, coeffs.b_const, coeffs.c_const
        second = np.zeros_like(np.asarray(u.values) + 0.0)
        for i in range(d):
            second = second + a[i, i] * d2[(i, i)]
            for j in range(i + 1, d):
                second = second + 2.0 * a[i, j] * d2[(i, j)]
        first = sum(b[i] * d1[i] for i in range(d))
        out = -xd * second - first + c * np.asarray(u.values)
        return GridFunction(grid, out)

    pts = grid_points(grid)
    a = coeffs.a_at(pts).reshape(grid.shape + (d, d))
    b = coeffs.b_at(pts).reshape(grid.shape + (d,))
    c = coeffs.c_at(pts).reshape(grid.shape)
    second = np.zeros(grid.shape, dtype=np.result_type(u.values, float))
    for i in range(d):
        second = second + a[..., i, i] * d2[(i, i)]
        for j in range(i + 1, d):
            second = second + 2.0 * a[..., i, j] * d2[(i, j)]
    first = sum(b[..., i] * d1[i] for i in range(d))
    out = -xd * second - first + c * np.asarray(u.values)
    return GridFunction(grid, out)


# ---------------------------------------------------------------------------
# exact coefficient transforms (constant coefficients)
# ---------------------------------------------------------------------------


def shear_coefficients(coeffs: CoefficientField, xi) -> CoefficientField:
    """Coefficients of the operator in sheared coordinates y = x + xi * x_d.

    ``xi`` must have xi_d = 0 so the map fixes the degenerate boundary.  For
    v(y) := u(x) the transformed second-order matrix is the congruent image
    J a J^T of a under the shear Jacobian J, i.e.

        a~^{ij} = a^{ij} + xi_j a^{id} + xi_i a^{jd} + xi_i xi_j a^{dd}   (i, j != d)
        a~^{id} = a^{id} + xi_i a^{dd},   a~^{dd} = a^{dd},

    and b~^i = b^i + xi_i b^d (i != d), b~^d = b^d, c unchanged.  Choosing
    xi_i = -b^i / b^d kills the tangential drift.
    """
    coeffs.require_constant("shear_coefficients")
    xi = np.asarray(xi, dtype=float)
    d = coeffs.d
    if xi.shape != (d,):
        raise ValueError(f"xi must have shape ({d},), got {xi.shape}")
    if xi[-1] != 0.0:
        raise ValueError("xi_d must be zero (the shear fixes the degenerate boundary)")
    a, b, c = coeffs.a_const, coeffs.b_const, coeffs.c_const
    J = np.eye(d)
    J[:, -1] += xi
    a_new = J @ a @ J.T
    b_new = b + xi * b[-1]
    return CoefficientField.constant(a_new, b_new, c)


@dataclass(frozen=True)
class AffineMap:
    """Invertible linear change of variables y = M x preserving {x_d = 0}."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_inv", np.linalg.inv(m))

    def apply(self, pts) -> np.ndarray:
        return np.atleast_2d(pts) @ self.matrix.T

    def invert(self, pts) -> np.ndarray:
        return np.atleast_2d(pts) @ self._inv.T

    @property
    def vertical_scale(self) -> float:
        return float(self.matrix[-1, -1])

    def pullback(self, u):
        """Given u(x), the function v with v(y) = u(x), i.e. v = u o inverse."""
        def v(pts):
            return u(self.invert(pts))
        return v


def isotropize(coeffs: CoefficientField):
    """Slab-preserving change of variables making the second-order matrix I.

    Three stages compose: (1) a shear with xi_i = -a^{id}/a^{dd} removing the
    mixed vertical terms, (2) a tangential linear map L with
    L abar' L^T = I/a^{dd}, (3) the vertical scaling y_d = x_d / a^{dd}.
    The composite keeps {x_d = 0} fixed, keeps the degeneracy weight linear
    and turns the second-order coefficient into the identity.  Returns the
    transformed coefficients and the affine map (y = M x).
    """
    coeffs.require_constant("isotropize")
    a, b, c = coeffs.a_const, coeffs.b_const, coeffs.c_const
    d = coeffs.d
    eigmin = float(np.min(np.linalg.eigvalsh(a)))
    if eigmin <= 0.0:
        raise CoefficientError("isotropize requires a symmetric positive definite matrix")
    add = a[-1, -1]
    xi = np.zeros(d)
    xi[:-1] = -a[:-1, -1] / add
    sheared = shear_coefficients(coeffs, xi)
    abar = sheared.a_const
    bbar = sheared.b_const
    # tangential factor: L abar' L^T = I/add
    C = np.linalg.cholesky(abar[:-1, :-1])
    L = np.linalg.inv(C) / np.sqrt(add)
    t = 1.0 / add

    M = np.eye(d)
    M[:, -1] += xi                      # shear
    block = np.eye(d)
    block[:-1, :-1] = L                 # tangential map
    scale = np.eye(d)
    scale[-1, -1] = t                   # vertical scaling
    M = scale @ block @ M

    a_new = np.eye(d)
    b_new = np.empty(d)
    b_new[:-1] = L @ bbar[:-1]
    b_new[-1] = t * bbar[-1]
    new = CoefficientField.constant(a_new, b_new, c)
    return new, AffineMap(M)


def exponential_transform(coeffs: CoefficientField, sigma: float) -> CoefficientField:
    """Conjugation by e^{sigma x_d} for operators with unit weight.

    For the non-degenerate form -tr(a D^2 .) - b . D + c (the second-order
    part *not* weighted by x_d), substituting u = e^{-sigma x_d} v gives an
    operator with the same a and

        b~^i = b^i - 2 sigma a^{id},      c~ = c + sigma b^d - sigma^2 a^{dd}.

    On the degenerate boundary of the weighted operator the second order
    part vanishes, so there the zeroth coefficient is c + sigma b^d; the
    x_d-weighted version of the transform, exact for the degenerate
    operator, is :func:`exponential_transform_weighted`.
    """
    sigma = float(sigma)
    if coeffs.is_constant:
        a, b, c = coeffs.a_const, coeffs.b_const, coeffs.c_const
        b_new = b - 2.0 * sigma * a[:, -1]
        c_new = c + sigma * b[-1] - sigma ** 2 * a[-1, -1]
        return CoefficientField.constant(a, b_new, c_new, require_drift=False)

    a_fn, b_fn, c_fn = coeffs.a_fn, coeffs.b_fn, coeffs.c_fn

    def b_new_fn(pts):
        a = np.asarray(a_fn(pts), dtype=float)
        return np.asarray(b_fn(pts), dtype=float) - 2.0 * sigma * a[..., :, -1]

    def c_new_fn(pts):
        a = np.asarray(a_fn(pts), dtype=float)
        b = np.asarray(b_fn(pts), dtype=float)
        return (np.asarray(c_fn(pts), dtype=float)
                + sigma * b[..., -1] - sigma ** 2 * a[..., -1, -1])

    return CoefficientField(coeffs.d, a_fn, b_new_fn, c_new_fn, False,
                            lambda0=coeffs.lambda0, b0=None, Lambda=None)


def exponential_transform_weighted(coeffs: CoefficientField, sigma: float) -> CoefficientField:
    """Exact e^{sigma x_d}-conjugation of the x_d-weighted operator.

    With A the weighted operator for (a, b, c), the returned field (a, b~, c~)
    satisfies  A~ v = e^{sigma x_d} A(e^{-sigma x_d} v)  identically, where

        b~(x) = b(x) - 2 sigma x_d a(x) e_d,
        c~(x) = c(x) + sigma b^d(x) - sigma^2 x_d a^{dd}(x).

    The result has variable coefficients even for constant input; b~^d
    agrees with b^d on the degenerate boundary, so the drift floor b0 is
    preserved.
    """
    sigma = float(sigma)
    a_fn, b_fn, c_fn = coeffs.a_fn, coeffs.b_fn, coeffs.c_fn

    def b_new_fn(pts):
        pts = np.atleast_2d(pts)
        a = np.asarray(a_fn(pts), dtype=float)
        return (np.asarray(b_fn(pts), dtype=float)
                - 2.0 * sigma * pts[:, -1:] * a[..., :, -1])

    def c_new_fn(pts):
        pts = np.atleast_2d(pts)
        a = np.asarray(a_fn(pts), dtype=float)
        b = np.asarray(b_fn(pts), dtype=float)
        return (np.asarray(c_fn(pts), dtype=float)
                + sigma * b[..., -1] - sigma ** 2 * pts[:, -1] * a[..., -1, -1])

    return CoefficientField(coeffs.d, a_fn, b_new_fn, c_new_fn, False,
                            lambda0=coeffs.lambda0, b0=coeffs.b0, Lambda=None)


def commuted_operator_apply(coeffs: CoefficientField, l: int, u: GridFunction) -> GridFunction:
    """Apply the commuted operator absorbing l vertical derivatives.

    For constant coefficients, differentiating A u a total of l times in the
    vertical direction produces (up to a tangential correction term) the
    operator

        A_(l) v = -x_d a^{ij} v_{x_i x_j}
                  - sum_{i != d} (b^i + 2 l a^{id}) v_{x_i}
                  - (b^d + l a^{dd}) v_{x_d} + c v,

    which this function evaluates with the same stencils as
    :func:`apply_operator`.  ``l = 0`` reproduces the plain operator.
    """
    coeffs.require_constant("commuted_operator_apply")
    l = int(l)
    if l < 0:
        raise ValueError(f"l must be a nonnegative integer, got {l}")
    a, b, c = coeffs.a_const, coeffs.b_const, coeffs.c_const
    b_eff = b.copy()
    b_eff[:-1] += 2.0 * l * a[:-1, -1]
    b_eff[-1] += l * a[-1, -1]
    shifted = CoefficientField.constant(a, b_eff, c)
    return apply_operator(shifted, u)
