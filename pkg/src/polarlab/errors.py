"""Exception types shared across the package."""


class PolarlabError(Exception):
    """Base class for all library errors."""


class ParseError(PolarlabError, ValueError):
    """Malformed input text (operation, channel, MAC or partition)."""


class SizeCapExceeded(PolarlabError):
    """An input is larger than a configured desk-scale cap."""


class NotUniformityPreserving(PolarlabError, ValueError):
    pass


class NotErgodic(PolarlabError, ValueError):
    pass


class NotAPartition(PolarlabError, ValueError):
    """A family of product sets does not form a balanced partition."""


class AmbiguousResidue(PolarlabError):
    """Two distinct residue candidates share the minimal block size."""

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


class InputTooSmall(PolarlabError, ValueError):
    pass


class PartitionMismatch(PolarlabError, ValueError):
    pass


class InputSizeMismatch(PolarlabError, ValueError):
    pass


class SizeMismatch(PolarlabError, ValueError):
    pass


class LengthNotPowerOfTwo(PolarlabError, ValueError):
    pass


class FactorizationFailed(PolarlabError):
    """A product partition does not split into per-user partitions."""

    def __init__(self, message, check=None):
        super().__init__(message)
        self.check = check


class BudgetExceeded(PolarlabError):
    """A computation would exceed its output-size budget.

    ``partial`` optionally carries whatever was finished before the limit hit.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
