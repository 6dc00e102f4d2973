"""Particle-based simulation and optimal control of structured populations.

The population is represented as a finite sum of weighted Dirac cohorts
whose positions and masses follow coupled ODEs, with a fresh boundary cohort
collecting newborn mass every time window.  The package provides the exact
flat (bounded-Lipschitz) metric between such discrete measures, cost
functionals with total-variation regularized piecewise-constant controls,
forward-sensitivity gradients, proximal-gradient and compass-search
optimizers, and a discretization-refinement driver, together with an
age-structured welfare-policy preset and a CLI.
"""

from .control import Control, approximate_bv, constant_control, project, total_variation
from .cost import (CostSpec, CostValue, LinearCost, QuadraticControlCost,
                   QuadraticMomentCost, SumCost, TimePolynomialCost,
                   WelfareIncomeCost, eval_running, evaluate)
from .ebt import (ConvergenceTable, Discretization, EbtState, TestFunction,
                  Trajectory, as_measure, convergence_study, init_cohorts,
                  rhs, simulate, step_window, weak_residual)
from .errors import ConfigError, NumericsError
from .measure import (DiscreteMeasure, flat_distance, flat_distance_oracle,
                      integrate, normalize, pairing_bound, total_mass,
                      zero_measure)
from .model import (AffineControlTerm, Box, ClippedAffineFn, ConstantCore,
                    ConstantFn, GaussianBumpFn, LogisticCore, ModelSpec,
                    QuadraticControlTerm, RateFunction, SamplingPlan,
                    ScalarCore, SeparableCore, TabulatedFn, eval_rate,
                    validate_spec)
from .optimizer import (OptimizationResult, OptimizerSettings,
                        RefinementCertificate, RefinementLevel, minimize,
                        prox_tv, refine, resample_control)
from .sensitivity import (check_gradient, cost_and_gradient, gradient_cost,
                          simulate_with_sensitivity)
from .welfare import welfare_model

__version__ = "0.1.0"
