"""Exception hierarchy shared by every subpackage."""


class FlowBenchError(Exception):
    """Base class for all errors raised by flowbench."""


class DimensionError(FlowBenchError, ValueError):
    pass


class ConfigurationError(FlowBenchError, ValueError):
    pass


class ContractError(FlowBenchError, ValueError):
    pass


class InputError(FlowBenchError, ValueError):
    pass


class EmptyInputError(InputError):
    pass


class GeometryError(FlowBenchError, ValueError):
    pass


class CapabilityError(FlowBenchError):
    """Requested operation is outside what this toolkit can generate."""


class SolverError(FlowBenchError, RuntimeError):
    pass


class SolverBlowupError(SolverError):
    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step


class IterationLimitError(SolverError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


class ContainerError(FlowBenchError, IOError):
    pass


class SchemaVersionError(ContainerError):
    pass


class MetaParseError(ContainerError):
    pass


class TruncatedFrameError(ContainerError):
    pass


class ShapeMismatchError(ContainerError):
    pass


class TrainingDivergedError(FlowBenchError, RuntimeError):
    def __init__(self, epoch, batch, lr):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}, lr {lr:.3e}")
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
