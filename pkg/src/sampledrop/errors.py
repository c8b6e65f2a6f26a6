"""Exception hierarchy shared across the package.

Every error raised on purpose derives from SampledropError and carries a
short machine-parsable category used by the CLI and the HTTP service.
"""


class SampledropError(Exception):
    """Base class for all deliberate failures."""

    category = "error"


class DimensionError(SampledropError, ValueError):
    """Tensor shapes incompatible with the requested operation."""

    category = "dimension"


class ContractError(SampledropError, ValueError):
    """A documented precondition was violated by the caller."""

    category = "contract"


class DataError(SampledropError, ValueError):
    """Malformed input data: corpora, dataset files, token ids."""

    category = "data"


class StateError(SampledropError, RuntimeError):
    """Operation invalid in the object's current state."""

    category = "state"


class CheckpointError(DataError):
    """Unreadable, corrupt or version-incompatible checkpoint."""

    category = "checkpoint"


class DivergenceError(SampledropError, RuntimeError):
    """Training loss became non-finite."""

    category = "divergence"

    def __init__(self, step: int, last_finite_loss: float | None):
        self.step = step
        self.last_finite_loss = last_finite_loss
        last = "none" if last_finite_loss is None else f"{last_finite_loss:.6g}"
        super().__init__(
            f"non-finite loss at step {step}; last finite loss was {last}"
        )
