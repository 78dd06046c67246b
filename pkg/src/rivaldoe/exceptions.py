"""Exception types raised across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition (shape, bounds, PSD)."""


class SingularKernelError(RuntimeError):
    """The regularised Gram matrix could not be factorised even with maximum jitter."""


class SingularInformationError(RuntimeError):
    """The parameter information matrix stayed singular after ridge escalation."""


class DataGenerationError(RuntimeError):
    """A rival model returned non-finite values while generating surrogate training data."""


class CapabilityError(RuntimeError):
    """The requested operation needs a capability the model does not provide."""


class ModelEvaluationError(ArithmeticError):
    """A case-study model hit a pathological denominator or domain."""


class RenormalisationError(FloatingPointError):
    """Every model's predictive density underflowed; posteriors cannot be renormalised."""


class NumericalError(FloatingPointError):
    """A design criterion produced a non-finite intermediate value."""
