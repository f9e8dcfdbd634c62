class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConvergenceError(RuntimeError):
    """A numerical solver failed to reach its stated tolerance."""


class CapabilityError(NotImplementedError):
    """A formula needs a quantity (e.g. a derivative) that is not available."""
