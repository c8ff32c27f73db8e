"""Exception hierarchy shared by the engines, the island layer and the middleware."""


class PolystoreError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PolystoreError):
    """A query text could not be parsed; ``position`` is a 0-based character offset."""

    def __init__(self, message, position=None):
        self.message = message
        self.position = position
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class CatalogError(PolystoreError):
    """Unknown or duplicate object name."""


class SchemaError(PolystoreError):
    """A schema, row or array violates its structural invariants."""


class LoadError(PolystoreError):
    """A data file could not be loaded; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ExecutionError(PolystoreError):
    """A statement parsed but failed while running."""


class ShapeError(ExecutionError):
    """Array operands have incompatible shapes."""


class Untranslatable(PolystoreError):
    """A shim cannot express an island query in an engine's native language."""


class CastError(PolystoreError):
    """A migration between data models failed."""


class PlanError(PolystoreError):
    """A query plan is malformed or cannot be built."""


class NoViableEngine(PlanError):
    """No member engine of an island can run some part of the query."""


class PlanExecutionError(PolystoreError):
    """A plan step failed. ``step`` is the index of the failing step."""

    def __init__(self, message, plan_id=None, step=None):
        self.plan_id = plan_id
        self.step = step
        super().__init__(f"plan {plan_id} step {step}: {message}")


class PlanDivergenceError(PolystoreError):
    """Two plans of the same query returned different results."""

    def __init__(self, first, second):
        self.plans = (first, second)
        super().__init__(f"plans {first} and {second} returned different results")
