"""Exception hierarchy.

Every failure the package raises on purpose derives from
TextureRefineError so the CLI can report it as a single line.
"""

from typing import Optional, Tuple


class TextureRefineError(Exception):
    """Base class for all package errors."""


class ContractViolation(TextureRefineError, ValueError):
    """An operation was called with inputs outside its contract."""


class NonFiniteLossError(TextureRefineError):
    """A loss term became NaN or infinite during training."""

    def __init__(self, term: str, value: float, step: int):
        self.term = term
        self.value = value
        self.step = step
        super().__init__(f"loss term '{term}' is {value} at step {step}")


class GradCheckFailure(TextureRefineError):
    """Finite-difference probing hit a non-finite function value."""

    def __init__(self, index: Optional[Tuple[int, ...]], value: float):
        self.index = index
        self.value = value
        where = "at the unperturbed input" if index is None else f"at element {index}"
        super().__init__(f"non-finite function value {value} {where}")


class DatasetError(TextureRefineError):
    """Dataset files are missing or inconsistent."""


class CheckpointError(TextureRefineError):
    """A checkpoint file is malformed or does not match the model."""
