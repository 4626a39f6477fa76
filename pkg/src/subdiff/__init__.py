"""L2-1sigma finite element solvers for variable-exponent subdiffusion.

Modules
-------
temporal    graded meshes, superconvergence policies, L2-1sigma weights, kernels
quadrature  symmetric rules on the reference triangle
fem2d       P1/P2 Lagrange spaces on the unit square, assembly, projections
sparse      CSR helpers and Jacobi-preconditioned CG
solver      time stepping for the subdiffusion and mobile-immobile models
cases       manufactured test problems
study       convergence drivers and CSV output
audit       numerical check of the coefficient and kernel inequalities
"""

from .errors import (
    ConditionViolated,
    ConfigError,
    ExponentOutOfRange,
    IdentityViolation,
    InvalidParameter,
    NewtonDiverged,
    NonConvergence,
    StepFailure,
    SubdiffError,
    UnsupportedConfiguration,
)
from .solver import ProblemSpec, SchemeConfig, run, stability_certificate
from .temporal import SuperconvPolicy, VariableExponent, build_graded_mesh

__version__ = "0.1.0"
