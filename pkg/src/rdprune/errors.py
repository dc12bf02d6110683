"""Exception hierarchy. Each failure mode the CLI maps to an exit code gets
its own class so callers can distinguish I/O problems from infeasible
optimization inputs."""


class RDPruneError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(RDPruneError):
    """Malformed or inconsistent on-disk artifact."""


class ChecksumError(FormatError):
    """Stored checksum does not match the recomputed one."""


class UnknownLayerKindError(FormatError):
    """Manifest declares a layer kind the engine does not implement."""


class ShapeInconsistencyError(FormatError):
    """Declared tensor shape disagrees with the stored blob size."""


class EngineShapeError(RDPruneError):
    """Shape mismatch between consecutive layers during a forward pass."""

    def __init__(self, layer_index, message):
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: {message}")


class NotPrunableError(RDPruneError):
    """Operation addressed a layer that carries no prunable weights."""


class InfeasibleBudgetError(RDPruneError):
    """No combination of valid curve points can meet the pruning budget."""


class GuardSizeError(RDPruneError):
    """Instance exceeds the enumeration guard of the brute-force oracle."""
