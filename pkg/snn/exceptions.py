"""Error hierarchy for the SNN engine.

Every error carries a ``category`` and an ``exit_code`` so the command line
can map failures to stable, category-coded exit statuses.
"""


class SquatError(Exception):
    category = 'engine'
    exit_code = 1


class ShapeError(SquatError, ValueError):
    category = 'shape'
    exit_code = 8


class GraphError(SquatError, RuntimeError):
    category = 'graph'
    exit_code = 9


class NumericFault(SquatError, ArithmeticError):
    category = 'numeric'
    exit_code = 5


class GridError(SquatError, ValueError):
    category = 'grid'
    exit_code = 7


class SpecError(SquatError, ValueError):
    category = 'spec'
    exit_code = 6


class CheckpointError(SquatError):
    category = 'checkpoint'
    exit_code = 4


class MagicMismatch(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedFile(CheckpointError):
    pass


class DatasetError(SquatError):
    category = 'data'
    exit_code = 3


class IdxMagicError(DatasetError):
    pass


class IdxCountMismatch(DatasetError):
    pass


class TruncatedPayload(DatasetError):
    pass


class EventFormatError(DatasetError):
    pass


class MissingDataset(DatasetError):
    pass


class TrainingDiverged(NumericFault):
    """Raised when the training loss stops being finite."""

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class HarnessError(SquatError):
    category = 'harness'
    exit_code = 10


class MissingBaseline(HarnessError):
    pass


class NoRecords(HarnessError):
    pass


class LabelError(DatasetError, ValueError):
    """A class label outside ``[0, num_classes)``."""


class StateError(SquatError, RuntimeError):
    category = 'state'
    exit_code = 12
