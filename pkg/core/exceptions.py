"""Exception types raised by the simulator, the learners and the harness."""


class MecError(Exception):
    """Base class for every error raised by the core app"""


class ConfigError(MecError):
    """A config document failed to parse or a value violates its bound"""


class InvalidActionError(MecError):
    """An allocation or power vector lies outside its admissible range"""


class ZeroRateError(MecError):
    pass


class ShapeError(MecError):
    """Array shapes disagree with a network's layer sizes"""


class LedgerMismatchError(MecError):
    """An outcome does not belong to the latest step recorded in the ledger"""


class OracleSizeError(MecError):
    pass


class TrainingAborted(MecError):
    """A loss or probability ratio went non-finite during an update

    Attributes:
        checkpoint_path: diagnostic checkpoint written before aborting (may be None)
    """

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
