"""Zero multiplicity toolkit for Dirichlet series.

Evaluators for zeta, Hurwitz, Dirichlet L and Davenport-Heilbronn
functions, argument-principle zero location with multiplicity
certificates, level-curve tracing with strip partitions, and numerical
checks of the conformal structure around close zero pairs.
"""

__version__ = "0.1.0"

from .errors import NumericalError, ValidationError, ZeroMultError  # noqa: F401
from .handles import (  # noqa: F401
    DavenportHeilbronn,
    DirichletL,
    HurwitzZeta,
    RiemannZeta,
    SyntheticTest,
    double_zero,
    jet,
)
from .zeros import SearchRectangle, ZeroRecord, locate_zeros  # noqa: F401
