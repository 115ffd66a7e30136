"""degenlab: numerical laboratory for boundary-degenerate elliptic operators.

Exact spectral solutions via confluent hypergeometric functions for
constant coefficients, sparse finite differences for variable coefficients,
weighted Hölder norms built on the cycloidal metric, and an empirical
verification harness for the a priori estimates these operators satisfy.
"""

__version__ = "0.1.0"

from .geometry import (GridFunction, PointSet, SlabGrid, cycloidal_distance,  # noqa: F401
                       half_ball_points, make_slab_grid)
from .holder import ck_2alpha_norm, ck_alpha_norm, holder_seminorm  # noqa: F401
from .kummer import gamma_complex, kummer_m, kummer_u, wronskian  # noqa: F401
from .operators import (CoefficientField, HestonParams, apply_operator,  # noqa: F401
                        heston_coefficients, isotropize, shear_coefficients)

__all__ = [
    "GridFunction", "PointSet", "SlabGrid", "cycloidal_distance",
    "half_ball_points", "make_slab_grid",
    "ck_2alpha_norm", "ck_alpha_norm", "holder_seminorm",
    "gamma_complex", "kummer_m", "kummer_u", "wronskian",
    "CoefficientField", "HestonParams", "apply_operator",
    "heston_coefficients", "isotropize", "shear_coefficients",
]
