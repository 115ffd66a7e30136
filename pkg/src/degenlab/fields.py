"""Scalar fields with exact derivatives, and finite-difference derivative sources.

Weighted Hölder norms and the verification probes need derivatives of the
sampled function.  Two providers are offered:

* :class:`AnalyticField`: a sum of separable terms
  ``Re[c * exp(i k . x') * p(x_d) * exp(w x_d)]`` with complex amplitude
  ``c``, tangential wave vector ``k``, complex polynomial ``p`` and complex
  vertical rate ``w``.  The family is closed under differentiation and under
  multiplication by ``x_d``, so every derivative is exact.  Tangentially it
  is periodic whenever the wave vectors are integer multiples of
  ``2*pi/period``.

* :class:`GridDerivatives`: second-order finite differences on a
  :class:`~degenlab.geometry.SlabGrid` (periodic tangentially, one-sided at
  the two vertical boundaries), for fields only known through samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GridFunction, SlabGrid

__all__ = [
    "AnalyticField",
    "GridDerivatives",
    "sine_product_field",
    "constant_field",
    "band_limited_field",
    "degenerate_operator_image",
    "fd_derivative",
]


def _poly_derivative(p: np.ndarray, w: complex) -> np.ndarray:
    """Coefficients of d/dx [p(x) e^{w x}] / e^{w x} = p'(x) + w p(x)."""
    p = np.asarray(p, dtype=complex)
    out = w * p
    if p.size > 1:
        out = out.copy()
        out[:-1] += np.arange(1, p.size) * p[1:]
    return out


def _poly_eval(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=complex)
    for coeff in p[::-1]:
        out = out * x + coeff
    return out


@dataclass(frozen=True)
class _Term:
    amplitude: complex
    k: tuple              # tangential wave vector, length d-1
    poly: tuple           # ascending complex coefficients of the vertical polynomial
    rate: complex         # vertical exponential rate w


class AnalyticField:
    """Sum of separable exp-trig-polynomial terms with exact derivatives.

    Evaluation returns the real part; building blocks keep complex internals
    so differentiation stays closed-form.
    """

    def __init__(self, terms, d: int):
        if d < 2:
            raise ValueError("d must be >= 2")
        self.d = d
        self.terms = []
        for t in terms:
            if len(t.k) != d - 1:
                raise ValueError("wave vector length must be d-1")
            if abs(t.amplitude) != 0.0:
                self.terms.append(t)

    # construction helpers -------------------------------------------------

    @staticmethod
    def from_mode(d, amplitude, k, poly, rate=0.0):
        return AnalyticField(
            [_Term(complex(amplitude), tuple(float(v) for v in k),
                   tuple(complex(c) for c in np.atleast_1d(poly)), complex(rate))],
            d,
        )

    def __add__(self, other):
        if not isinstance(other, AnalyticField) or other.d != self.d:
            return NotImplemented
        return AnalyticField(self.terms + other.terms, self.d)

    def __mul__(self, scalar):
        return AnalyticField(
            [_Term(t.amplitude * scalar, t.k, t.poly, t.rate) for t in self.terms], self.d
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-other)

    def mul_xd(self):
        """The field multiplied by the vertical coordinate x_d."""
        terms = [
            _Term(t.amplitude, t.k, (0.0,) + tuple(t.poly), t.rate) for t in self.terms
        ]
        return AnalyticField(terms, self.d)

    # evaluation ------------------------------------------------------------

    def complex_values(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.d:
            raise ValueError(f"points have dimension {pts.shape[1]}, field has d={self.d}")
        xd = pts[:, -1]
        out = np.zeros(pts.shape[0], dtype=complex)
        for t in self.terms:
            phase = np.exp(1j * pts[:, :-1] @ np.asarray(t.k, dtype=float))
            out += t.amplitude * phase * _poly_eval(np.asarray(t.poly), xd) * np.exp(t.rate * xd)
        return out[0] if single else out

    def __call__(self, pts) -> np.ndarray:
        return np.real(self.complex_values(pts))

    # differentiation -------------------------------------------------------

    def derivative(self, beta) -> "AnalyticField":
        beta = tuple(int(b) for b in beta)
        if len(beta) != self.d or any(b < 0 for b in beta):
            raise ValueError(f"multi-index must have {self.d} nonnegative entries, got {beta}")
        terms = []
        for t in self.terms:
            amp = t.amplitude
            for j in range(self.d - 1):
                amp = amp * (1j * t.k[j]) ** beta[j]
            poly = np.asarray(t.poly, dtype=complex)
            for _ in range(beta[-1]):
                poly = _poly_derivative(poly, t.rate)
            terms.append(_Term(amp, t.k, tuple(poly), t.rate))
        return AnalyticField(terms, self.d)

    def derivative_values(self, beta, pts) -> np.ndarray:
        return self.derivative(beta)(pts)

    def on_grid(self, grid: SlabGrid) -> GridFunction:
        return GridFunction.from_callable(grid, self)

    def times_exp_vertical(self, sigma) -> "AnalyticField":
        """The field multiplied by e^{sigma x_d} (sigma may be complex)."""
        return AnalyticField(
            [_Term(t.amplitude, t.k, t.poly, t.rate + complex(sigma)) for t in self.terms],
            self.d)

    def pullback_linear(self, matrix) -> "AnalyticField":
        """The field v with v(y) = u(M^{-1} y) for a slab-preserving map y = M x.

        Requires the last row of M to be (0, ..., 0, t): then x' is an affine
        function of (y', y_d) and x_d = y_d / t, keeping every term inside
        the family (tangential wave vectors transform by the inverse
        transpose, shear parts move into complex vertical rates, vertical
        polynomials rescale).
        """
        m = np.asarray(matrix, dtype=float)
        d = self.d
        if m.shape != (d, d) or np.any(m[-1, :-1] != 0.0):
            raise ValueError("map must be slab-preserving: last row (0, ..., 0, t)")
        inv = np.linalg.inv(m)
        a_inv = inv[:-1, :-1]          # x' = a_inv y' + beta_inv y_d
        beta_inv = inv[:-1, -1]
        t_inv = inv[-1, -1]            # x_d = t_inv * y_d
        terms = []
        for term in self.terms:
            k = np.asarray(term.k, dtype=float)
            k_new = a_inv.T @ k
            rate_new = term.rate * t_inv + 1j * float(k @ beta_inv)
            poly = np.asarray(term.poly, dtype=complex)
            poly_new = poly * (t_inv ** np.arange(poly.size))
            terms.append(_Term(term.amplitude, tuple(k_new), tuple(poly_new), rate_new))
        return AnalyticField(terms, d)


def degenerate_operator_image(u: AnalyticField, a, b, c) -> AnalyticField:
    """Exact A u = -x_d tr(a D^2 u) - b . Du + c u for constant coefficients.

    Stays inside the analytic family (multiplication by x_d shifts the
    vertical polynomials), so manufactured sources and their derivatives are
    available in closed form.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = u.d
    out = float(c) * u
    for i in range(d):
        e_i = tuple(1 if k == i else 0 for k in range(d))
        out = out - float(b[i]) * u.derivative(e_i)
        for j in range(d):
            if a[i, j] != 0.0:
                beta = tuple((1 if k == i else 0) + (1 if k == j else 0) for k in range(d))
                out = out - float(a[i, j]) * u.derivative(beta).mul_xd()
    return out


def constant_field(d: int, value: float) -> AnalyticField:
    return AnalyticField.from_mode(d, value, (0.0,) * (d - 1), [1.0])


def sine_product_field(d, period, nu, amplitude=1.0, k_index=1, axis=0) -> AnalyticField:
    """amplitude * sin(2*pi*k*x_axis/period) * (nu - x_d); vanishes at the top."""
    k = [0.0] * (d - 1)
    k[axis] = 2.0 * np.pi * k_index / period
    # sin(kx) = Re[-i e^{ikx}]
    return AnalyticField.from_mode(d, -1j * amplitude, k, [nu, -1.0])


def band_limited_field(d, period, nu, kmax, seed, amplitude=1.0, vertical="slab",
                       decay_rate=None) -> AnalyticField:
    """Random tangentially band-limited field with a smooth vertical profile.

    ``vertical="slab"`` uses x_d*(nu - x_d)-type polynomials (zero Dirichlet
    trace at the top); ``vertical="decay"`` uses x_d^2*exp(-decay_rate*x_d)
    profiles whose tail is negligible well below the top, for half-space
    style sources.
    """
    rng = np.random.default_rng(seed)
    base = 2.0 * np.pi / period
    field = None
    indices = [()]
    for _ in range(d - 1):
        indices = [idx + (k,) for idx in indices for k in range(-kmax, kmax + 1)]
    for idx in indices:
        c = (rng.standard_normal() + 1j * rng.standard_normal()) / (1.0 + np.sum(np.square(idx)))
        if vertical == "slab":
            q0, q1 = rng.standard_normal(2)
            poly = np.polynomial.polynomial.polymul([0.0, 1.0], [nu, -1.0])  # x_d (nu - x_d)
            poly = np.polynomial.polynomial.polymul(poly, [1.0 + 0.2 * q0, 0.2 * q1 / max(nu, 1e-300)])
            rate = 0.0
        elif vertical == "decay":
            rate = -(decay_rate if decay_rate is not None else 40.0 / nu)
            poly = [0.0, 0.0, 1.0 + 0.2 * rng.standard_normal()]
        else:
            raise ValueError(f"unknown vertical profile {vertical!r}")
        mode = AnalyticField.from_mode(d, amplitude * c, tuple(base * k for k in idx), poly, rate)
        field = mode if field is None else field + mode
    return field


# ---------------------------------------------------------------------------
# finite-difference derivatives on a slab grid
# ---------------------------------------------------------------------------


def _d1_tangential(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)


def _d1_vertical(values: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(values)
    out[..., 1:-1] = (values[..., 2:] - values[..., :-2]) / (2.0 * h)
    out[..., 0] = (-3.0 * values[..., 0] + 4.0 * values[..., 1] - values[..., 2]) / (2.0 * h)
    out[..., -1] = (3.0 * values[..., -1] - 4.0 * values[..., -2] + values[..., -3]) / (2.0 * h)
    return out


def fd_derivative(gf: GridFunction, beta) -> GridFunction:
    """Second-order finite-difference D^beta of a grid function.

    Tangential derivatives wrap periodically; vertical ones use central
    stencils inside and one-sided second-order stencils on the two boundary
    layers.  Higher orders compose first-derivative passes.
    """
    beta = tuple(int(b) for b in beta)
    grid = gf.grid
    if len(beta) != grid.d:
        raise ValueError(f"multi-index length {len(beta)} != d = {grid.d}")
    if grid.n_vertical + 1 < 4 and beta[-1] > 0:
        raise ValueError("grid too coarse for one-sided vertical stencils (need >= 4 levels)")
    values = np.asarray(gf.values)
    for axis in range(grid.d - 1):
        for _ in range(beta[axis]):
            values = _d1_tangential(values, axis, grid.h_tangential)
    for _ in range(beta[-1]):
        values = _d1_vertical(values, grid.h_vertical)
    return GridFunction(grid, values)


class GridDerivatives:
    """Derivative provider backed by finite differences of one grid function.

    Points handed to :meth:`derivative_values` must coincide with grid nodes
    (tangential coordinates may be shifted by whole periods, as the
    minimum-image point sets produced by half-ball harvesting are).
    """

    def __init__(self, gf: GridFunction):
        self.gf = gf
        self._cache: dict = {}

    @property
    def d(self) -> int:
        return self.gf.grid.d

    def derivative_grid(self, beta) -> GridFunction:
        beta = tuple(int(b) for b in beta)
        if beta not in self._cache:
            self._cache[beta] = fd_derivative(self.gf, beta)
        return self._cache[beta]

    def node_indices(self, pts) -> tuple:
        grid = self.gf.grid
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx = []
        for j in range(grid.d - 1):
            xj = np.mod(pts[:, j], grid.period)
            ij = np.rint(xj / grid.h_tangential).astype(int) % grid.n_tangential
            if not np.allclose(np.minimum(np.abs(xj - ij * grid.h_tangential),
                                          grid.period - np.abs(xj - ij * grid.h_tangential)),
                               0.0, atol=1e-9 * grid.period):
                raise ValueError("points do not coincide with grid nodes tangentially")
            idx.append(ij)
        iv = np.rint(pts[:, -1] / grid.h_vertical).astype(int)
        if np.any(iv < 0) or np.any(iv > grid.n_vertical) or not np.allclose(
            pts[:, -1], iv * grid.h_vertical, atol=1e-9 * max(grid.nu, 1.0)
        ):
            raise ValueError("points do not coincide with grid nodes vertically")
        return tuple(idx) + (iv,)

    def derivative_values(self, beta, pts) -> np.ndarray:
        return self.derivative_grid(beta).values[self.node_indices(pts)]

    def __call__(self, pts) -> np.ndarray:
        return self.gf.values[self.node_indices(pts)]
