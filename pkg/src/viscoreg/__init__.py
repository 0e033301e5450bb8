"""Viscosity-type fixed-point iterations with certified rates of asymptotic regularity."""

__version__ = "0.1.0"

from .certificates import (RateCertificate, RateInputs, derive_bounds, psi_decreasing,  # noqa: E402
                           psi_general, quant_liu_bound, theta_harmonic, verify_certificate)
from .geometry import (EUCLIDEAN, Affine as AffineSet, Ball, Box, Halfspace,  # noqa: E402
                       Intersection, NormSpec, diameter, norm, project)
from .moduli import (HarmonicSchedule, ModuliTriple, PowerSchedule, TableSchedule,  # noqa: E402
                     make_schedule, validate_moduli)
from .operators import (Affine, Contraction, LinearPSD, MatrixMap, NormalCone,  # noqa: E402
                        Projection, SubgradientSeparable, resolvent)
from .schemes import (explicit_iterate, halpern_iterate, hybrid_iterate, implicit_curve,  # noqa: E402
                      implicit_solve, mann_iterate)
from .applications import (VipProblem, check_vi_residual, resolvent_curve, vip_constants,  # noqa: E402
                           vip_contraction_factor)
from .runner import certify, compare_schemes, run_scenario  # noqa: E402
