"""
Exception hierarchy for holoflow.

Every error a user can trigger with bad input derives from HoloflowError,
which the command-line front end maps to exit status 1.
"""

from typing import Optional


class HoloflowError(ValueError):
    """Base class for all user-facing holoflow errors."""
    pass


class ConfigError(HoloflowError):
    """Raised when a configuration record violates its invariants."""
    pass


class SmilesParseError(HoloflowError):
    """
    Raised for SMILES strings outside the supported subset.

    Attributes:
        offset: Byte offset (0-indexed) of the offending token
        token: Text of the offending token ('' at end of input)
    """

    def __init__(self, message: str, offset: int, token: str = ""):
        self.offset = offset
        self.token = token
        shown = repr(token) if token else "end of input"
        super().__init__(f"{message} at byte {offset} ({shown})")


class GraphError(HoloflowError):
    """Raised for invalid requests against a molecular graph."""
    pass


class StructureError(HoloflowError):
    """Raised when a structure or complex state violates its invariants."""
    pass


class PDBParseError(StructureError):
    """
    Raised for malformed PDB text.

    Attributes:
        line_number: 1-indexed line of the offending record
    """

    def __init__(self, message: str, line_number: int):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class TrajectoryFormatError(HoloflowError):
    """Raised for truncated or inconsistent trajectory files."""
    pass


class GeometryError(HoloflowError):
    """Raised for mismatched or invalid point sets."""
    pass


class DegenerateAlignmentError(GeometryError):
    """Raised when a superposition problem has rank < 2."""
    pass


class PriorError(HoloflowError):
    """Raised when a prior cannot be sampled."""
    pass


class IntegrationError(HoloflowError):
    """
    Raised when trajectory integration has to stop.

    Attributes:
        step: Integer step index at which integration stopped
    """

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"step {step}: {message}")


class NetworkError(HoloflowError):
    """
    Raised for invalid network parameters or non-finite activations.

    Attributes:
        layer: Name of the offending layer, if known
    """

    def __init__(self, message: str, layer: Optional[str] = None):
        self.layer = layer
        prefix = f"layer {layer}: " if layer else ""
        super().__init__(f"{prefix}{message}")


class CheckpointError(HoloflowError):
    """Raised for unreadable parameter checkpoints."""
    pass


class EvaluationError(HoloflowError):
    """Raised for invalid metric inputs."""
    pass
