"""
qlaplab - A numerical laboratory for Berezin-Toeplitz quantization on CP^1.

Core Features:
- Fubini-Study and perturbed Kahler structures with closed-form jets
- Gram matrices, orthonormal sections, Toeplitz and Berezin transforms
- The quantized Laplacian through two independent routes
- Large-m expansion fits with order-of-convergence gates
"""

__version__ = "0.3.0"
__author__ = "qlaplab Contributors"
__license__ = "MIT"

from .base import QlapError, ConfigError
from .geometry import DictionaryFunction, KahlerStructure
from .types import GridFunction, VmOperator
from .core import QuantizationLab

# Core components only
__all__ = [
    'QuantizationLab',
    'KahlerStructure',
    'DictionaryFunction',
    'GridFunction',
    'VmOperator',
    'QlapError',
    'ConfigError',
]

# Optional components loaded if dependencies are available
try:
    from .storage import ArtifactStore
    __all__.append('ArtifactStore')
except ImportError:
    pass

try:
    from .verify import AcceptanceSuite
    __all__.append('AcceptanceSuite')
except ImportError:
    pass
