"""Exception hierarchy shared by all modules."""


class BsdeRepError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(BsdeRepError, ValueError):
    """An argument lies outside its admissible range."""


class GeneratorEvaluationError(BsdeRepError, ArithmeticError):
    """A generator (or growth process) returned a non-finite value."""


class AssumptionViolation(BsdeRepError):
    """Sampled (H1)/(H2) checks found counterexamples; carries the reports."""

    def __init__(self, message, reports=()):
        super().__init__(message)
        self.reports = list(reports)


class SingularRegressionError(BsdeRepError, ArithmeticError):
    """Least-squares design matrix is numerically singular."""

    def __init__(self, node, condition_number):
        super().__init__(
            f"regression at node {node} is numerically singular "
            f"(condition number {condition_number:.3e})"
        )
        self.node = node
        self.condition_number = condition_number


class CFLError(BsdeRepError):
    """Explicit finite-difference step violates the stability bound."""

    def __init__(self, required_steps, given_steps):
        super().__init__(
            f"explicit scheme unstable with {given_steps} time steps; "
            f"at least {required_steps} are required"
        )
        self.required_steps = required_steps
        self.given_steps = given_steps


class BudgetError(BsdeRepError):
    """Requested nested Monte Carlo work exceeds the configured budget."""

    def __init__(self, cost, budget):
        super().__init__(
            f"nested Monte Carlo cost {cost:.3e} kernel evaluations exceeds budget {budget:.3e}"
        )
        self.cost = cost
        self.budget = budget


class ConfigError(BsdeRepError):
    """Experiment configuration failed schema validation."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)
