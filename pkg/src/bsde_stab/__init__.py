"""Euler theta-schemes for BSDEs on a trinomial lattice, with stability analysis.

The numerical core needs only numpy; ``plotting`` additionally needs matplotlib.
"""

from .driver import (DRIVER_FAMILIES, Driver, abs_z_driver, atan_z_driver, check_constants,
                     constant_violations, linear_driver, make_driver)
from .errors import ImplicitSolveFailure, NumericalFailure, RootBracketFailure
from .experiments import (ConvergenceRow, ConvergenceStudy, SweepResult, VnRegionTable,
                          closed_form_y0, convergence_study, fit_loglog_slope,
                          stability_sweep, sufficient_mask, vn_region_table)
from .lattice import Lattice, build_lattice, conditional_expectation, z_expectation
from .scheme import SchemeConfig, SchemeResult, implicit_step, solve_backward
from .stability import (LinearVnInputs, RegionKind, StabilityInputs, VnRegion,
                        amplification_factor, b_inf_norm, critical_constants,
                        effective_b_norm, explicit_region, implicit_region,
                        sufficient_multidim, sufficient_unidim, vn_margin, vn_oracle,
                        vn_region, vn_stable, vn_stable_explicit, vn_stable_implicit)

__version__ = "0.1.0"
