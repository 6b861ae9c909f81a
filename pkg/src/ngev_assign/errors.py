"""Exception hierarchy.

Every error carries a short ``category`` string that the command line uses as
a machine-readable failure tag.
"""


class AssignmentError(Exception):
    category = "error"


class ValidationError(AssignmentError, ValueError):
    category = "validation"


class ParseError(ValidationError):
    category = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StructureError(ValidationError):
    category = "structure"


class DomainError(ValidationError):
    category = "domain"


class UnreachableError(AssignmentError):
    category = "unreachable"


class DivergenceError(AssignmentError):
    category = "divergence"


class OracleInfeasibleError(AssignmentError):
    category = "oracle_infeasible"


class StallError(AssignmentError):
    category = "stall"
