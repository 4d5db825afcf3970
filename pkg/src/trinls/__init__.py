"""Three-component quadratic Schrodinger system on a 2D periodic surrogate grid.

Dissipative long-time dynamics, the scaled asymptotic coordinate and its
logarithmic-time profile equation, plus the diagnostics that measure decay
rates against the dissipation constants.
"""

from .model import (
    SystemParams,
    DissipationConstants,
    validate_params,
    find_kappa,
    eval_F,
    gauge_rotate,
    nu_a,
    dissipation_pairing,
    dissipation_constants,
)
from .spectral import (
    Grid2D,
    FieldState,
    transform,
    free_propagate,
    apply_M,
    apply_G,
    apply_D,
    apply_W,
    weighted_norm,
    compute_alpha,
)

__version__ = "0.1.0"
