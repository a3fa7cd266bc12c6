"""Exception types raised across the package."""


class BsenseError(Exception):
    """Base class for all package errors."""


class DomainError(BsenseError, ValueError):
    """An argument lies outside the domain of the function."""


class InfeasibleFrameError(BsenseError, ValueError):
    """Transmission time consumes the whole frame, leaving no sensing time."""


class DegenerateEvidenceError(BsenseError, ValueError):
    """A Bayesian update produced an all-zero posterior."""


class IncompleteModelError(BsenseError, KeyError):
    """A conditional belief is missing for a symbol in the prior's support."""


class DegenerateDistributionError(BsenseError, ValueError):
    """A joint distribution has a zero marginal where a positive one is needed."""


class StepSizeError(BsenseError, ValueError):
    """A finite-difference step violates the CFL condition."""


class EvaluationError(BsenseError, ArithmeticError):
    """An objective function returned a non-finite value."""


class ConfigError(BsenseError, ValueError):
    """An experiment configuration failed validation.

    ``errors`` maps each offending key to a human-readable reason.
    """

    def __init__(self, errors: dict[str, str]):
        self.errors = dict(errors)
        lines = "; ".join(f"{k}: {v}" for k, v in sorted(self.errors.items()))
        super().__init__(f"invalid configuration ({lines})")
