"""Exception hierarchy shared across the engine."""


class RelspnError(Exception):
    """Base class for all engine errors."""


class SchemaError(RelspnError):
    """Invalid schema configuration, or data violating declared constraints."""


class DataError(RelspnError):
    """Malformed input data (CSV parse failures, key violations)."""


class QuerySyntaxError(RelspnError):
    """Query text does not parse under the supported grammar."""


class UnsupportedQueryError(RelspnError):
    """Query parses but uses a construct outside the supported subset."""


class PlanningError(RelspnError):
    """No valid execution plan exists for a query against an ensemble."""


class EmptyConditionError(RelspnError):
    """A conditional quantity was requested under a zero-probability condition."""


class ModelInvariantError(RelspnError):
    """A structural invariant of a model was violated (internal error)."""


class EnsembleFormatError(RelspnError):
    """Persisted ensemble file is corrupt, truncated, or version-incompatible."""
