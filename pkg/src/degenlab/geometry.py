"""Grids, point sets and the cycloidal metric on the closed upper half-space.

The computational domain is a slab ``R^{d-1} x (0, nu)`` truncated to a
tangential torus of length ``period`` per axis, so tangential Fourier
transforms are discrete.  The bottom boundary ``x_d = 0`` is where the
operators of this package degenerate; the top ``x_d = nu`` carries Dirichlet
data.  All geometry values are immutable after construction and all
operations here are pure.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SlabGrid",
    "GridFunction",
    "PointSet",
    "make_slab_grid",
    "cycloidal_distance",
    "cycloidal_distance_pairwise",
    "half_ball_points",
    "grid_points",
]


def _check_point(x, name="point"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError(f"{name} must be a 1-d array of length >= 2, got shape {x.shape}")
    if x[-1] < 0.0:
        raise ValueError(f"{name} has x_d = {x[-1]} < 0; points live in the closed upper half-space")
    return x


def cycloidal_distance(x1, x2) -> float:
    """Cycloidal distance s(x1, x2) = |x1-x2| / sqrt(x1_d + x2_d + |x1-x2|).

    Both points must lie in the closed upper half-space (last coordinate
    nonnegative).  Coincident points return exactly 0 without evaluating the
    0/0 quotient.  Note that ``s`` behaves like the square root of the
    Euclidean distance near the degenerate boundary and no triangle
    inequality is assumed anywhere in this package.
    """
    x1 = _check_point(x1, "x1")
    x2 = _check_point(x2, "x2")
    if x1.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x1.shape[0]} vs {x2.shape[0]}")
    diff = float(np.linalg.norm(x1 - x2))
    if diff == 0.0:
        return 0.0
    return diff / np.sqrt(x1[-1] + x2[-1] + diff)


def cycloidal_distance_pairwise(points: np.ndarray) -> np.ndarray:
    """All-pairs cycloidal distances for an (n, d) array of half-space points.

    Returns an (n, n) symmetric matrix with zero diagonal.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise ValueError("points must be an (n, d) array with d >= 2")
    if np.any(pts[:, -1] < 0.0):
        raise ValueError("all points must have x_d >= 0")
    diff = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    xd_sum = pts[:, -1][:, None] + pts[:, -1][None, :]
    denom = np.sqrt(xd_sum + diff)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(diff > 0.0, diff / np.where(denom > 0.0, denom, 1.0), 0.0)
    return s


@dataclass(frozen=True)
class SlabGrid:
    """Uniform grid on the tangentially periodic slab R^{d-1} x (0, nu).

    Tangential axes carry ``n_tangential`` nodes each at spacing
    ``period / n_tangential`` (wrapping periodically); the vertical axis
    carries ``n_vertical + 1`` nodes including both x_d = 0 (degenerate
    boundary) and x_d = nu (Dirichlet boundary).
    """

    d: int
    nu: float
    period: float
    n_tangential: int
    n_vertical: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if not (self.nu > 0.0):
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not (self.period > 0.0):
            raise ValueError(f"period must be positive, got {self.period}")
        if self.n_tangential < 2:
            raise ValueError(f"n_tangential must be >= 2, got {self.n_tangential}")
        if self.n_vertical < 2:
            raise ValueError(f"n_vertical must be >= 2, got {self.n_vertical}")

    @property
    def h_tangential(self) -> float:
        return self.period / self.n_tangential

    @property
    def h_vertical(self) -> float:
        return self.nu / self.n_vertical

    @property
    def shape(self) -> tuple:
        """Array shape of a grid function: tangential axes first, vertical last."""
        return (self.n_tangential,) * (self.d - 1) + (self.n_vertical + 1,)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def tangential_coords(self) -> np.ndarray:
        return self.h_tangential * np.arange(self.n_tangential)

    def vertical_coords(self) -> np.ndarray:
        return np.linspace(0.0, self.nu, self.n_vertical + 1)

    def meshgrid(self) -> list:
        """Coordinate arrays of shape ``self.shape``, one per axis."""
        axes = [self.tangential_coords()] * (self.d - 1) + [self.vertical_coords()]
        return list(np.meshgrid(*axes, indexing="ij"))

    def wrap_tangential(self, delta: np.ndarray) -> np.ndarray:
        """Minimum-image representative of tangential offsets (x_d untouched)."""
        delta = np.array(delta, dtype=float, copy=True)
        p = self.period
        delta[..., : self.d - 1] = (delta[..., : self.d - 1] + p / 2.0) % p - p / 2.0
        return delta

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)

    def descriptor(self) -> dict:
        return {
            "d": self.d,
            "nu": self.nu,
            "period": self.period,
            "n_tangential": self.n_tangential,
            "n_vertical": self.n_vertical,
        }

    @staticmethod
    def from_json(text: str) -> "SlabGrid":
        return SlabGrid(**json.loads(text))


def make_slab_grid(d: int, nu: float, period: float, n_tangential: int, n_vertical: int) -> SlabGrid:
    """Construct a :class:`SlabGrid`, validating all sizes."""
    return SlabGrid(d=d, nu=nu, period=period, n_tangential=n_tangential, n_vertical=n_vertical)


@dataclass(frozen=True)
class GridFunction:
    """A scalar (real or complex) field sampled on every node of a grid."""

    grid: SlabGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"value array shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)

    @staticmethod
    def from_callable(grid: SlabGrid, fn) -> "GridFunction":
        mesh = grid.meshgrid()
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.asarray(fn(pts)).reshape(grid.shape)
        return GridFunction(grid, vals)

    @staticmethod
    def zeros(grid: SlabGrid, dtype=float) -> "GridFunction":
        return GridFunction(grid, np.zeros(grid.shape, dtype=dtype))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def is_real(self, tol: float = 0.0) -> bool:
        if not np.iscomplexobj(self.values):
            return True
        return float(np.max(np.abs(self.values.imag))) <= tol


def grid_points(grid: SlabGrid) -> np.ndarray:
    """All grid nodes as an (node_count, d) array in C order of ``grid.shape``."""
    mesh = grid.meshgrid()
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class PointSet:
    """A nonempty batch of half-space points with an optional provenance tag."""

    points: np.ndarray
    tag: str = ""
    grid: SlabGrid | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] < 2:
            raise ValueError("PointSet needs a nonempty (n, d) array with d >= 2")
        if np.any(pts[:, -1] < 0.0):
            raise ValueError("all points must satisfy x_d >= 0")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path) -> None:
        """One point per row, coordinates only."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(self.d)])
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])

    @staticmethod
    def from_csv(path) -> "PointSet":
        data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float)
        data = np.atleast_2d(data)
        return PointSet(data, tag=str(path))


def half_ball_points(grid: SlabGrid, center, radius: float) -> PointSet:
    """Grid nodes within Euclidean distance ``radius`` of a boundary point.

    ``center`` must lie on the degenerate boundary (x_d = 0).  Distances use
    the minimum-image convention tangentially (x_d is never wrapped), and the
    returned coordinates are the minimum-image representatives relative to
    the center, so they can be fed directly to the flat-space cycloidal
    metric.  A radius above ``period / 2`` would self-overlap and is
    rejected.
    """
    center = _check_point(center, "center")
    if center.shape[0] != grid.d:
        raise ValueError(f"center dimension {center.shape[0]} != grid dimension {grid.d}")
    if center[-1] != 0.0:
        raise ValueError("half-ball center must lie on the degenerate boundary x_d = 0")
    if not (radius > 0.0):
        raise ValueError(f"radius must be positive, got {radius}")
    if radius > grid.period / 2.0:
        raise ValueError(
            f"radius {radius} exceeds period/2 = {grid.period / 2.0}; half-ball would self-overlap"
        )
    pts = grid_points(grid)
    delta = grid.wrap_tangential(pts - center)
    dist = np.linalg.norm(delta, axis=1)
    mask = dist < radius
    if not np.any(mask):
        raise ValueError("half-ball contains no grid nodes; enlarge radius or refine the grid")
    rep = center + delta[mask]
    return PointSet(rep, tag=f"half_ball(r={radius})", grid=grid)
