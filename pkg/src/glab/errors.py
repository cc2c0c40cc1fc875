"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` used by the command line runner so that
failures are machine readable.
"""

from __future__ import annotations


class GlabError(Exception):
    exit_code = 1
    kind = "error"


class InvalidArgument(GlabError, ValueError):
    exit_code = 2
    kind = "invalid-argument"


class StructuralError(GlabError):
    exit_code = 2
    kind = "structural-error"


class SchemaError(InvalidArgument):
    exit_code = 2
    kind = "schema-violation"


class MixingError(GlabError):
    exit_code = 3
    kind = "mixing-certification-failure"


class BudgetExceeded(GlabError):
    exit_code = 4
    kind = "memory-budget-refusal"

    def __init__(self, message: str, predicted_states: int, budget: int):
        super().__init__(message)
        self.predicted_states = predicted_states
        self.budget = budget


class EstimationError(GlabError):
    exit_code = 5
    kind = "estimation-error"


class InfimumNotAttained(EstimationError):
    exit_code = 6
    kind = "infimum-not-attained"
