"""Experiment configuration: JSON schemas, registries and file formats.

Configs and reports are JSON, field data is CSV; nothing binary.  Solution
CSV files carry the grid descriptor in a leading comment line so they are
self-describing for ``compare`` and ``norms``.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .fields import AnalyticField, band_limited_field, constant_field, sine_product_field
from .geometry import GridFunction, SlabGrid, grid_points, make_slab_grid
from .operators import CoefficientField, HestonParams, heston_coefficients

__all__ = [
    "ConfigError",
    "load_config",
    "build_grid",
    "build_coefficients",
    "build_source_field",
    "build_g_top",
    "dump_json",
    "write_solution_csv",
    "read_solution_csv",
    "thread_count",
]


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"missing key {key!r} in {where}")
    return cfg[key]


def build_grid(cfg: dict) -> SlabGrid:
    dom = _require(cfg, "domain", "config")
    try:
        return make_slab_grid(
            d=int(_require(dom, "d", "domain")),
            nu=float(_require(dom, "nu", "domain")),
            period=float(_require(dom, "period", "domain")),
            n_tangential=int(_require(dom, "n_tangential", "domain")),
            n_vertical=int(_require(dom, "n_vertical", "domain")),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc


def _smooth_variable_coefficients(params: dict, grid: SlabGrid) -> CoefficientField:
    """Smooth tangentially periodic perturbation of constant coefficients."""
    a0 = np.asarray(_require(params, "a", "smooth_variable"), dtype=float)
    b0 = np.asarray(_require(params, "b", "smooth_variable"), dtype=float)
    c0 = float(_require(params, "c", "smooth_variable"))
    eps = float(params.get("amplitude", 0.2))
    k = int(params.get("k_index", 1))
    base = 2.0 * np.pi * k / grid.period
    nu = grid.nu
    if not (0.0 <= eps < 0.5):
        raise ConfigError("smooth_variable amplitude must lie in [0, 0.5)")

    def shape(pts):
        pts = np.atleast_2d(pts)
        return np.sin(base * pts[:, 0]) * np.sin(np.pi * pts[:, -1] / nu)

    def a_fn(pts):
        s = shape(pts)
        return a0[None, :, :] * (1.0 + eps * s)[:, None, None]

    def b_fn(pts):
        s = shape(pts)
        return b0[None, :] * (1.0 + eps * s)[:, None]

    def c_fn(pts):
        s = shape(pts)
        return c0 * (1.0 + eps * s)

    return CoefficientField.from_callables(grid.d, a_fn, b_fn, c_fn, grid_points(grid))


def build_coefficients(cfg: dict, grid: SlabGrid) -> CoefficientField:
    spec = _require(cfg, "coefficients", "config")
    if "constant" in spec:
        data = spec["constant"]
        try:
            return CoefficientField.constant(
                _require(data, "a", "coefficients.constant"),
                _require(data, "b", "coefficients.constant"),
                _require(data, "c", "coefficients.constant"))
        except ValueError as exc:
            raise ConfigError(f"invalid constant coefficients: {exc}") from exc
    if "heston" in spec:
        data = spec["heston"]
        try:
            params = HestonParams(
                q=float(data.get("q", 0.0)), c0=float(_require(data, "c0", "heston")),
                kappa=float(_require(data, "kappa", "heston")),
                theta=float(_require(data, "theta", "heston")),
                sigma=float(_require(data, "sigma", "heston")),
                rho=float(_require(data, "rho", "heston")))
        except ValueError as exc:
            raise ConfigError(f"invalid Heston parameters: {exc}") from exc
        if grid.d != 2:
            raise ConfigError("Heston coefficients require d = 2")
        field = heston_coefficients(params)
        try:
            field.validate_on(grid_points(grid))
        except ValueError as exc:
            raise ConfigError(f"Heston coefficients invalid on this grid: {exc}") from exc
        return field
    if "family" in spec:
        name = spec["family"]
        params = spec.get("params", {})
        if name == "smooth_variable":
            try:
                return _smooth_variable_coefficients(params, grid)
            except ValueError as exc:
                raise ConfigError(f"invalid smooth_variable coefficients: {exc}") from exc
        raise ConfigError(f"unknown coefficient family {name!r}")
    raise ConfigError("coefficients must be one of: constant, heston, family")


def build_source_field(cfg: dict, grid: SlabGrid) -> AnalyticField:
    spec = cfg.get("source", {"family": "zero"})
    family = _require(spec, "family", "source")
    d, L, nu = grid.d, grid.period, grid.nu
    if family == "zero":
        return constant_field(d, 0.0)
    if family == "constant":
        return constant_field(d, float(spec.get("value", 1.0)))
    if family == "sine_product":
        return sine_product_field(d, L, nu,
                                  amplitude=float(spec.get("amplitude", 1.0)),
                                  k_index=int(spec.get("k_index", 1)),
                                  axis=int(spec.get("axis", 0)))
    if family == "band_limited":
        return band_limited_field(d, L, nu,
                                  kmax=int(spec.get("kmax", 3)),
                                  seed=int(spec.get("seed", 0)),
                                  amplitude=float(spec.get("amplitude", 1.0)),
                                  vertical=spec.get("vertical", "slab"),
                                  decay_rate=spec.get("decay_rate"))
    raise ConfigError(f"unknown source family {family!r}")


def build_g_top(cfg: dict, grid: SlabGrid):
    spec = cfg.get("g_top", {"family": "zero"})
    family = _require(spec, "family", "g_top")
    if family == "zero":
        return 0.0
    if family == "constant":
        return float(spec.get("value", 0.0))
    if family == "sine":
        amp = float(spec.get("amplitude", 1.0))
        k = int(spec.get("k_index", 1))
        coords = grid.tangential_coords()
        base = 2.0 * np.pi * k / grid.period
        if grid.d == 2:
            return amp * np.sin(base * coords)
        mesh = np.meshgrid(*([coords] * (grid.d - 1)), indexing="ij")
        return amp * np.sin(base * mesh[0])
    raise ConfigError(f"unknown g_top family {family!r}")


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_solution_csv(gf: GridFunction, path, residual: GridFunction | None = None) -> None:
    """One row per node: coordinates, value and (optionally) residual.

    The grid descriptor rides along in a leading comment so the file is
    self-describing.
    """
    grid = gf.grid
    pts = grid_points(grid)
    vals = np.asarray(gf.values).ravel()
    cols = [pts[:, i] for i in range(grid.d)] + [vals]
    header = [f"x{i + 1}" for i in range(grid.d)] + ["u"]
    if residual is not None:
        cols.append(np.asarray(residual.values).ravel())
        header.append("residual")
    with open(path, "w") as fh:
        fh.write(f"# grid {grid.to_json()}\n")
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_solution_csv(path):
    """Returns (grid or None, header list, data array)."""
    grid = None
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("# grid "):
            grid = SlabGrid.from_json(first[len("# grid "):].strip())
            header_line = fh.readline()
        else:
            header_line = first
        header = [h.strip() for h in header_line.split(",")]
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return grid, header, data


def thread_count(cli_value=None) -> int:
    """Worker cap: CLI flag first, DEGENLAB_THREADS next, else 1."""
    if cli_value is not None:
        n = int(cli_value)
    else:
        env = os.environ.get("DEGENLAB_THREADS")
        n = int(env) if env else 1
    if n < 1:
        raise ConfigError(f"thread count must be >= 1, got {n}")
    return n
