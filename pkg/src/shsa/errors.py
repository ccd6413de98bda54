"""Exception hierarchy shared by all SHSA modules."""

from __future__ import annotations


class ShsaError(Exception):
    """Base class for every error raised by this package."""


class ExpressionError(ShsaError):
    """Problem in a relation expression; ``pos`` is the 0-based character offset."""

    def __init__(self, message: str, pos: int | None = None, expr: str | None = None):
        self.pos = pos
        self.expr = expr
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)


class ExpressionSyntaxError(ExpressionError):
    pass


class EvaluationError(ExpressionError):
    pass


class KnowledgeBaseError(ShsaError):
    pass


class UnknownVariableError(KnowledgeBaseError):
    def __init__(self, variable: str, context: str = ""):
        self.variable = variable
        msg = f"unknown variable {variable!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class SubstitutionError(ShsaError):
    pass


class MalformedSubstitutionError(SubstitutionError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("malformed substitution: " + "; ".join(self.violations))


class MonitorSetupError(ShsaError):
    pass


class DiagnosisError(ShsaError):
    pass


class NoFailingRunsError(DiagnosisError):
    pass


class ScenarioError(ShsaError):
    pass


class FaultInjectionError(ScenarioError):
    pass


class NumericalGuardError(ShsaError):
    """Covariance lost symmetry or positive semi-definiteness."""


class ConfigSyntaxError(ShsaError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            loc += ": "
        super().__init__(loc + message)
