"""Monte Carlo laboratory for recovering a quadratic BSDE generator from
small-horizon solutions: ``g(t, y, z) = lim (Y_t^eps - y) / eps``."""

from .engine import (PathBatch, TimeGrid, hitting_time, make_grid, phi_at_K, sample_brownian,
                     stopped_terminal)
from .errors import (AssumptionViolation, BsdeRepError, BudgetError, CFLError, ConfigError,
                     GeneratorEvaluationError, ParameterError, SingularRegressionError)
from .families import FAMILIES, make_generator
from .generators import (ComplianceReport, DomainSampler, GeneratorSpec, StochasticDominator,
                         check_h1, check_h2, check_h3, derive_envelope, truncate_qk)
from .harness import (EpsilonLadder, RepresentationProblem, RepresentationReport,
                      run_representation)
from .kernels import BACKEND
from .oracles import (linear_closed_form, nested_mc, quadratic_closed_form,
                      run_oracle_suite)
from .pde import solve_pde_1d
from .solver import BsdeSolution, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation", "BACKEND", "BsdeRepError", "BsdeSolution", "BudgetError", "CFLError",
    "ComplianceReport", "ConfigError", "DomainSampler", "EpsilonLadder", "FAMILIES",
    "GeneratorEvaluationError", "GeneratorSpec", "ParameterError", "PathBatch",
    "RepresentationProblem", "RepresentationReport", "SingularRegressionError", "SolverConfig",
    "StochasticDominator", "TimeGrid", "check_h1", "check_h2", "check_h3", "derive_envelope",
    "hitting_time", "linear_closed_form", "make_generator", "make_grid", "nested_mc", "phi_at_K",
    "quadratic_closed_form", "run_oracle_suite", "run_representation", "sample_brownian",
    "solve", "solve_pde_1d", "stopped_terminal", "truncate_qk",
]
