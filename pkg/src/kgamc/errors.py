"""Exception types shared across the package."""


class KgamcError(Exception):
    """Base class for all library errors."""


class UnsupportedConstellationError(KgamcError, ValueError):
    """Requested a symbol constellation for a class that has none."""


class UndefinedSnrError(KgamcError, ValueError):
    """SNR is undefined, e.g. noise added to a zero-power signal."""


class FormatError(KgamcError, ValueError):
    """A serialized container is malformed; message names the byte offset."""


class TripleParseError(KgamcError, ValueError):
    """A knowledge-graph triple file line could not be parsed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DeclarationError(KgamcError, ValueError):
    """A triple references a node that was never declared."""


class ConfigurationError(KgamcError, ValueError):
    """Inconsistent run configuration (e.g. class without an anchor node)."""


class ShapeError(KgamcError, ValueError):
    """Tensor shape mismatch; message reports both shapes."""


class CheckpointError(KgamcError, ValueError):
    """Checkpoint file is invalid or incompatible."""


class StateError(KgamcError, RuntimeError):
    """Model state does not support the requested operation."""
