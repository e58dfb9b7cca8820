"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its documented return codes without a lookup table.
"""

from __future__ import annotations


class GqteError(Exception):
    """Base class for all package errors."""

    exit_code = 4
    kind = "error"


class InputError(GqteError, ValueError):
    """Malformed or missing input (empty samples, bad files, bad tokens)."""

    exit_code = 2
    kind = "input"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(GqteError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 2
    kind = "domain"


class SingularityError(GqteError, ArithmeticError):
    """A density vanishes or a denominator collapses where it must not."""

    kind = "singular"


class NumericError(GqteError, ArithmeticError):
    """A numerical routine failed to converge."""

    kind = "numeric"


class ConvergenceError(NumericError):
    """The percentile solver did not converge for one observation."""

    kind = "convergence"

    def __init__(self, message: str, index: int):
        self.index = index
        super().__init__(f"{message} (observation index {index})")


class InfeasibleModelError(GqteError):
    """The smoothness constraint fails at the starting coefficients."""

    exit_code = 3
    kind = "infeasible"


class SelectionError(InfeasibleModelError):
    """No degrees-of-freedom candidate was feasible."""

    kind = "selection"
