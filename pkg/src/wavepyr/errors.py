"""Exception types shared across the package.

Container errors are split into distinct classes so callers (and the CLI
exit-code mapping) can tell fault categories apart.
"""


class GeometryError(ValueError):
    """An extent/shape precondition was violated."""


class ShapeError(ValueError):
    """Operand shapes do not conform for an autodiff op."""


class ContainerError(ValueError):
    """Base class for binary container faults."""


class BadMagicError(ContainerError):
    """Leading magic bytes do not identify the expected container."""


class TruncatedPayloadError(ContainerError):
    """Container ended before the declared payload was complete."""


class VersionMismatchError(ContainerError):
    """Container format version is not supported by this build."""


class GeometryMismatchError(ContainerError):
    """Stored geometry does not match what the caller requires."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite.

    Carries the iteration index and a checkpoint (bytes) of the last
    parameter state whose loss was still finite.
    """

    def __init__(self, iteration, checkpoint):
        super().__init__(f"non-finite training loss at iteration {iteration}")
        self.iteration = iteration
        self.checkpoint = checkpoint
