"""Weighted Hölder seminorms and norms over finite point sets.

The seminorms measure increments against powers of the cycloidal distance,
the norms stack them by derivative order, and the "2+alpha" family weights
every pure-plus-mixed second derivative by the vertical coordinate x_d
before taking its Hölder norm.  Everything here is evaluated over *finite
sample sets*, hence is a lower bound of the continuum supremum; consumers
frame their assertions as boundedness or refinement-stability checks, never
exact reproduction.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import PointSet

__all__ = [
    "HolderReport",
    "holder_seminorm",
    "classical_holder_seminorm",
    "sup_norm",
    "ck_alpha_norm",
    "ck_2alpha_norm",
    "multi_indices",
    "PAIR_CAP_DEFAULT",
]

PAIR_CAP_DEFAULT = 4096
_CHUNK = 256


def _as_points(points) -> np.ndarray:
    if isinstance(points, PointSet):
        return points.points
    pts = np.asarray(points, dtype=float)
    return np.atleast_2d(pts)


def _subsample(pts: np.ndarray, cap: int, seed: int):
    """Deterministic seeded subsample when the pair enumeration would blow up."""
    if pts.shape[0] <= cap:
        return pts, None
    rng = np.random.default_rng(seed)
    idx = rng.choice(pts.shape[0], size=cap, replace=False)
    idx.sort()
    return pts[idx], seed


def _values_on(u, pts: np.ndarray) -> np.ndarray:
    if callable(u):
        vals = np.asarray(u(pts), dtype=float)
    else:
        vals = np.asarray(u, dtype=float)
    if vals.shape != (pts.shape[0],):
        raise ValueError(f"values have shape {vals.shape}, expected ({pts.shape[0]},)")
    return vals


def sup_norm(u, points) -> float:
    pts = _as_points(points)
    return float(np.max(np.abs(_values_on(u, pts))))


def _max_quotient(vals: np.ndarray, pts: np.ndarray, alpha: float, metric: str) -> float:
    """Chunked max over distinct pairs of |du| / dist^alpha."""
    n = pts.shape[0]
    xd = pts[:, -1]
    best = 0.0
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        diff = pts[start:stop, None, :] - pts[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        if metric == "cycloidal":
            denom = np.sqrt(xd[start:stop, None] + xd[None, :] + dist)
            with np.errstate(invalid="ignore", divide="ignore"):
                s = np.where(dist > 0.0, dist / np.where(denom > 0.0, denom, 1.0), 0.0)
        else:
            s = dist
        dv = np.abs(vals[start:stop, None] - vals[None, :])
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.where(s > 0.0, dv / s ** alpha, 0.0)
        best = max(best, float(np.max(q)))
    return best


def _prep_pairs(u, points, alpha, pair_cap, seed):
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    pts = _as_points(points)
    if pts.shape[0] < 2:
        raise ValueError("Hölder seminorms need at least 2 points")
    if pts.shape[0] > pair_cap:
        rng = np.random.default_rng(seed)
        idx = rng.choice(pts.shape[0], size=pair_cap, replace=False)
        idx.sort()
        sub = pts[idx]
        vals = _values_on(u, sub) if callable(u) else _values_on(np.asarray(u)[idx], sub)
        return sub, vals, seed
    vals = _values_on(u, pts)
    return pts, vals, None


def holder_seminorm(u, alpha: float, points, pair_cap: int = PAIR_CAP_DEFAULT,
                    seed: int = 0) -> float:
    """max over distinct pairs of |u(x1) - u(x2)| / s(x1, x2)^alpha.

    ``u`` may be a callable over (n, d) points or an array aligned with the
    point set.  Point sets above ``pair_cap`` are deterministically
    subsampled with the given seed.
    """
    sub, vals, _ = _prep_pairs(u, points, alpha, pair_cap, seed)
    return _max_quotient(vals, sub, alpha, "cycloidal")


def classical_holder_seminorm(u, alpha: float, points, pair_cap: int = PAIR_CAP_DEFAULT,
                              seed: int = 0) -> float:
    """Ordinary Hölder seminorm (Euclidean metric) over the point set."""
    sub, vals, _ = _prep_pairs(u, points, alpha, pair_cap, seed)
    return _max_quotient(vals, sub, alpha, "euclidean")


def multi_indices(d: int, order: int) -> list:
    """All multi-indices beta in N^d with |beta| = order."""
    out = []
    for combo in itertools.combinations_with_replacement(range(d), order):
        beta = [0] * d
        for axis in combo:
            beta[axis] += 1
        out.append(tuple(beta))
    if order == 0:
        return [tuple([0] * d)]
    return sorted(set(out))


@dataclass
class HolderReport:
    """Itemized weighted Hölder norm over one point set."""

    alpha: float
    k: int
    sup_norm: float
    sup_norms: dict
    seminorms: dict
    c_k_alpha: float
    c_k_2alpha: float | None = None
    weighted_sup_norms: dict = field(default_factory=dict)
    weighted_seminorms: dict = field(default_factory=dict)
    point_count: int = 0
    subsample_seed: int | None = None

    @staticmethod
    def _key(beta) -> str:
        return ",".join(str(int(b)) for b in beta)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "k": self.k,
            "sup_norm": self.sup_norm,
            "sup_norms": {self._key(b): v for b, v in self.sup_norms.items()},
            "seminorms": {self._key(b): v for b, v in self.seminorms.items()},
            "c_k_alpha": self.c_k_alpha,
            "c_k_2alpha": self.c_k_2alpha,
            "weighted_sup_norms": {self._key(b): v for b, v in self.weighted_sup_norms.items()},
            "weighted_seminorms": {self._key(b): v for b, v in self.weighted_seminorms.items()},
            "point_count": self.point_count,
            "subsample_seed": self.subsample_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _derivative_values(source, beta, pts):
    if all(b == 0 for b in beta) and callable(source):
        return np.asarray(source(pts), dtype=float)
    getter = getattr(source, "derivative_values", None)
    if getter is None:
        raise ValueError(
            f"derivative D^{beta} requested but the source provides no derivative_values"
        )
    return np.asarray(getter(beta, pts), dtype=float)


def ck_alpha_norm(source, k: int, alpha: float, points,
                  pair_cap: int = PAIR_CAP_DEFAULT, seed: int = 0) -> HolderReport:
    """Weighted Hölder norm of order (k, alpha): sum over |beta| <= k of
    sup|D^beta u| + [D^beta u]_alpha over the point set.

    ``source`` must be callable on points and expose
    ``derivative_values(beta, pts)`` for 0 < |beta| <= k (analytic closures
    or grid finite differences).
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    pts = _as_points(points)
    if pts.shape[0] < 2:
        raise ValueError("need at least 2 points for the Hölder seminorms")
    sub, used_seed = _subsample(pts, pair_cap, seed)
    d = pts.shape[1]
    sups, semis = {}, {}
    total = 0.0
    for order in range(k + 1):
        for beta in multi_indices(d, order):
            vals = _derivative_values(source, beta, sub)
            sups[beta] = float(np.max(np.abs(vals)))
            semis[beta] = _max_quotient(vals, sub, alpha, "cycloidal")
            total += sups[beta] + semis[beta]
    zero = tuple([0] * d)
    return HolderReport(
        alpha=alpha, k=k, sup_norm=sups[zero], sup_norms=sups, seminorms=semis,
        c_k_alpha=total, point_count=sub.shape[0], subsample_seed=used_seed,
    )


def ck_2alpha_norm(source, k: int, alpha: float, points,
                   pair_cap: int = PAIR_CAP_DEFAULT, seed: int = 0) -> HolderReport:
    """Weighted norm of order (k, 2+alpha): the (k+1, alpha) norm plus the
    Hölder norms of the weighted top derivatives x_d * D^beta u, |beta| = k+2.
    """
    report = ck_alpha_norm(source, k + 1, alpha, points, pair_cap=pair_cap, seed=seed)
    pts = _as_points(points)
    sub, used_seed = _subsample(pts, pair_cap, seed)
    d = pts.shape[1]
    xd = sub[:, -1]
    weighted_total = 0.0
    wsups, wsemis = {}, {}
    for beta in multi_indices(d, k + 2):
        vals = xd * _derivative_values(source, beta, sub)
        wsups[beta] = float(np.max(np.abs(vals)))
        wsemis[beta] = _max_quotient(vals, sub, alpha, "cycloidal")
        weighted_total += wsups[beta] + wsemis[beta]
    report.k = k
    report.weighted_sup_norms = wsups
    report.weighted_seminorms = wsemis
    report.c_k_2alpha = report.c_k_alpha + weighted_total
    report.subsample_seed = used_seed
    return report
