"""
Exception hierarchy for the post-editing workbench.
"""
from typing import Optional


class WorkbenchError(Exception):
    """Base exception for workbench errors."""
    pass


class AlignmentError(WorkbenchError):
    """Raised when parallel files or sequences are not index-aligned."""
    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message)


class RecordError(WorkbenchError):
    """Raised when a single record (line, score, tag) is malformed."""
    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        super().__init__(message)


class ConfigurationError(WorkbenchError):
    """Raised for unknown LangIds, uncovered domains and invalid profiles."""
    pass


class DataError(WorkbenchError):
    """Raised when corpus content violates a data contract."""
    pass


class ModeError(WorkbenchError):
    """Raised when an operation is not valid in the model's current mode."""
    pass


class CheckpointError(WorkbenchError):
    """Raised when a checkpoint cannot be read, written or applied."""
    def __init__(self, message: str, path: Optional[str] = None, parameters: Optional[list] = None):
        self.path = path
        self.parameters = parameters or []
        super().__init__(message)


class TranslatorError(WorkbenchError):
    """Raised when an external translator fails on a sentence."""
    pass


class SolverError(WorkbenchError):
    """Raised when multitask gradient inputs are unusable."""
    pass


class CorpusIOError(WorkbenchError):
    """Raised when corpus files cannot be read or written."""
    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message)


class TrainingError(WorkbenchError):
    """Raised when a training stage diverges; carries the last good checkpoint."""
    def __init__(self, message: str, stage: Optional[str] = None, checkpoint: Optional[str] = None):
        self.stage = stage
        self.checkpoint = checkpoint
        super().__init__(message)
