"""Exception types shared across the package."""


class TensorWheelError(Exception):
    """Base class for all package errors."""


class ParseError(TensorWheelError, ValueError):
    """A data file line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class DuplicateKeyError(TensorWheelError, ValueError):
    """The same (i, j, k) position appeared twice; carries the offending line."""

    def __init__(self, key, line_no=None):
        self.key = key
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"duplicate position {key}{where}")


class BoundsError(TensorWheelError, IndexError):
    """An index lies outside the declared tensor dimensions."""


class DomainError(TensorWheelError, ValueError):
    """A value lies outside the domain an operation requires."""


class StateError(TensorWheelError, RuntimeError):
    """An operation was applied to an object in the wrong state."""


class ParameterError(TensorWheelError, ValueError):
    """A configuration or argument value is invalid."""


class SizeCapError(TensorWheelError, ValueError):
    """A dense materialization would exceed the configured safety cap."""


class DivergenceError(TensorWheelError, ArithmeticError):
    """Training produced a non-finite value; carries entry id and epoch."""

    def __init__(self, entry_id, epoch=None):
        self.entry_id = entry_id
        self.epoch = epoch
        super().__init__(self._format())

    def _format(self):
        where = f"entry {self.entry_id}"
        if self.epoch is not None:
            where = f"epoch {self.epoch}, {where}"
        return f"non-finite value during training ({where}); try a smaller learning rate"

    def with_epoch(self, epoch):
        return DivergenceError(self.entry_id, epoch)
