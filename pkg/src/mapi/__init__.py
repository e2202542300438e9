"""Multiplication-avoiding power iteration and its applications."""

__version__ = "0.1.0"

from .mavp import (  # noqa: E402
    DimensionMismatchError,
    MavpMatrix,
    MavpOperator,
    OpCounter,
    l1_norm,
    l2_norm,
    mavp_dot,
    mavp_matmat,
    mavp_matvec,
    mavp_outer,
    mavp_outer_apply,
    signum,
)
from .power import (  # noqa: E402
    DegenerateIterateError,
    IterationRecord,
    IterationTrace,
    PowerIterConfig,
    alignment_error,
    diamond_fixed_point,
    initial_vector,
    mapi,
    rpi,
)
