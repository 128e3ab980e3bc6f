"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A numeric argument is outside its valid domain."""


class ScenarioError(ValueError):
    """A scenario document or vehicle set is malformed."""


class DegenerateSeedError(ValueError):
    """Seed positions coincide, so the separating halfspace is undefined."""


class NumericalFailureError(RuntimeError):
    """An iterative solver produced a non-finite iterate."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration
