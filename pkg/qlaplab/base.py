"""Base classes for qlaplab: exceptions, protocols and shared aliases."""
from typing import (
    Any, Dict, Mapping, Optional, Protocol, Sequence, runtime_checkable
)
from typing_extensions import TypeAlias

import numpy as np
from numpy.typing import NDArray

ComplexArray: TypeAlias = NDArray[np.complex128]
RealArray: TypeAlias = NDArray[np.float64]


class QlapError(Exception):
    """Root of all qlaplab errors."""
    pass


class ConfigError(QlapError):
    """Raised when flags, config files or geometry specs are invalid."""
    pass


class GeometryError(QlapError):
    """Raised when a Kahler structure is not positive on the grid."""
    pass


class GridMismatchError(QlapError):
    """Raised when two grid functions live on different grids."""
    pass


class MissingJetError(QlapError):
    """Raised when a derivative is requested from a function without a jet."""
    pass


class CholeskyError(QlapError):
    """Raised when a Gram matrix is not positive definite."""
    pass


class LevelMismatchError(QlapError):
    """Raised when an operator is used at the wrong quantization level."""
    pass


class DenseCapError(QlapError):
    """Raised when dense assembly is requested above the configured cap."""
    pass


class NonHermitianError(QlapError):
    """Raised when a matrix expected to be Hermitian is not."""
    pass


class FitError(QlapError):
    """Raised when an expansion fit is under-determined or ill-conditioned."""
    pass


class InducedMetricError(QlapError):
    """Raised when the induced metric density is not positive."""
    pass


# Process exit codes. Acceptance checks take 3.. in suite order.
EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_FIRST_CHECK = 3


@runtime_checkable
class ArtifactBackend(Protocol):
    """Protocol class for artifact writers."""

    def initialize(self) -> None:
        """Prepare the backend (create directories, locks)."""
        ...

    def write_report(self, name: str, report: Mapping[str, Any]) -> str:
        """Persist a JSON report and return its path."""
        ...

    def write_table(
        self,
        name: str,
        columns: Mapping[str, Sequence[Any]],
        order: Optional[Sequence[str]] = None,
    ) -> str:
        """Persist a CSV table and return its path."""
        ...

    def cleanup(self) -> None:
        """Release any resources."""
        ...


def complex_to_dict(value: complex) -> Dict[str, float]:
    """JSON representation of a complex scalar."""
    value = complex(value)
    return {"re": float(value.real), "im": float(value.imag)}
