"""Exception types shared across the package."""


class InputError(ValueError):
    """Rejected input: bad shapes, unknown ids, out-of-range arguments."""


class OracleError(RuntimeError):
    """The finite-difference oracle saw a non-finite loss."""


class OutOfOrderEventError(InputError):
    """An event is older than the last update of one of its endpoints."""


class InvariantError(RuntimeError):
    """A numerical invariant was violated (e.g. a non-positive intensity)."""


class SamplerExhaustedError(RuntimeError):
    """Rejection sampling could not find an admissible draw."""


class IngestionError(ValueError):
    """Corpus files are inconsistent (unknown ids, mismatched dimensions)."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or gradient."""
