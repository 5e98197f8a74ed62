"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to
process status without a lookup table.
"""


class StiffnessError(Exception):
    exit_code = 3


class DomainError(StiffnessError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ConfigurationError(StiffnessError, ValueError):
    exit_code = 2


class IncompleteGridError(ConfigurationError):
    pass


class DegenerateExcitationError(StiffnessError):
    """Angle phasor too small to form a stiffness ratio."""


class ConditioningError(StiffnessError):
    def __init__(self, message: str, condition_number: float):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class DegenerateFitError(StiffnessError):
    """Reference model residual is zero, so the F ratio is undefined."""


class NumericError(StiffnessError):
    pass


class InfeasibleDesignError(StiffnessError):
    exit_code = 4

    def __init__(self, message: str, max_phase_margin_deg: float | None = None):
        super().__init__(message)
        self.max_phase_margin_deg = max_phase_margin_deg
