"""Exception types shared across the package."""


class ParameterDomainError(ValueError):
    """A numeric parameter lies outside its admissible range."""


class RegistryMismatchError(ValueError):
    """A mode id or state does not belong to the expected registry."""


class ContractViolationError(ValueError):
    """An object violates a structural contract (e.g. a non-isometric map)."""


class CapacityError(RuntimeError):
    """The requested instance exceeds a hard computational guard."""
