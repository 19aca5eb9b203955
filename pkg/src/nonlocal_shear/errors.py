"""Exception types shared across the package."""


class NonFiniteError(ArithmeticError):
    """A field or intermediate quantity contains NaN or infinity."""


class BlowupOrInstability(NonFiniteError):
    """A time step produced non-finite values.

    Carries the simulation time and step index at which the step was attempted.
    """

    def __init__(self, message, t=None, step_index=None):
        super().__init__(message)
        self.t = t
        self.step_index = step_index


class StrictModeError(RuntimeError):
    """A numerical policy warning escalated to an error in strict mode."""


class ScenarioError(ValueError):
    """A scenario file failed to load or validate.

    ``problems`` lists every violation found, not only the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ObserverError(RuntimeError):
    """An observer callback raised during a run."""
