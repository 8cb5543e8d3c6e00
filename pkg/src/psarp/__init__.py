"""Adaptive regularization for partially-separable problems with non-Lipschitz group terms."""
from .errors import (ConvergenceError, DomainError, InvalidProblemError, PsarpError,
                     RankDeficiencyError, SingularityError, UnsupportedOrderError)
from .feasible import Box, WholeSpace
from .kernels import BACKEND
from .problem import (CallbackElement, HardElement, Problem, QuadraticElement,
                      QuarticWellElement)

__version__ = "0.1.0"
