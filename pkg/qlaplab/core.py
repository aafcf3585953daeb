"""Core functionality for qlaplab: the QuantizationLab facade."""
import logging
from typing import Dict, Optional, Sequence, Union

import numpy as np

from . import asymptotics, geometry, qlaplacian, quadrature, quantization, sections
from .base import ConfigError
from .geometry import DictionaryFunction, KahlerStructure
from .sections import Level
from .types import (
    ExpansionCheck, Grid, GridFunction, InducedMetric, QlapDense, VectorField, VmOperator,
)

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

FunctionLike = Union[str, DictionaryFunction, GridFunction]

__all__ = ['QuantizationLab']


class QuantizationLab:
    """Berezin-Toeplitz laboratory for one Kahler structure on CP^1.

    Levels (grid, Gram matrix, orthonormal basis, section tables) are
    prepared on first use and cached per m, together with the induced
    metric. Operators carry their level, which selects the cache entry.
    """

    def __init__(
        self,
        K: Union[str, KahlerStructure, None] = None,
        ns: Optional[int] = None,
        ntheta: Optional[int] = None,
        workers: int = 1,
    ):
        if K is None:
            K = KahlerStructure.fubini_study()
        elif isinstance(K, str):
            K = KahlerStructure.parse(K)
        self.K = K
        self.ns = ns
        self.ntheta = ntheta
        self.workers = workers
        self._levels: Dict[int, Level] = {}
        self._metrics: Dict[int, InducedMetric] = {}
        logger.info(f"QuantizationLab ready for {K.spec} (workers={workers})")

    @classmethod
    def from_config(cls, cfg) -> "QuantizationLab":
        return cls(cfg.kahler(), cfg.ns, cfg.ntheta, cfg.workers)

    def __repr__(self):
        return f"QuantizationLab({self.K.spec!r}, levels={sorted(self._levels)})"

    # levels and caches

    def level(self, m: int) -> Level:
        if m not in self._levels:
            self._levels[m] = sections.prepare_level(self.K, m, self.ns, self.ntheta, self.workers)
        return self._levels[m]

    def peek_level(self, m: int) -> Level:
        """Cached level if present, otherwise a fresh one that is not retained."""
        if m in self._levels:
            return self._levels[m]
        return sections.prepare_level(self.K, m, self.ns, self.ntheta, self.workers)

    def clear(self) -> None:
        self._levels.clear()
        self._metrics.clear()

    def _function(self, f: FunctionLike) -> Union[DictionaryFunction, GridFunction]:
        if isinstance(f, str):
            return DictionaryFunction.parse(f)
        return f

    def _level_of(self, A: VmOperator) -> Level:
        return self.level(A.m)

    # geometry

    def grid(self, m: int) -> Grid:
        return self.level(m).grid

    def volume(self) -> float:
        return geometry.volume(self.K)

    def laplacian(self, f: FunctionLike, grid: Optional[Grid] = None) -> GridFunction:
        return geometry.laplacian(self.K, self._function(f), grid)

    def scalar_curvature(self, grid: Grid) -> GridFunction:
        return geometry.scalar_curvature(self.K, grid)

    def integrate(self, f: GridFunction) -> complex:
        return quadrature.integrate(self.K, f)

    def l2_inner(self, f: GridFunction, g: GridFunction) -> complex:
        return quadrature.l2_inner(self.K, f, g)

    # sections

    def gram(self, m: int):
        return self.level(m).gram

    def basis_change(self, m: int) -> np.ndarray:
        return self.level(m).table.basis_change

    def section_gram(self, m: int) -> np.ndarray:
        level = self.level(m)
        return sections.section_gram(self.K, level.table, self.workers)

    # quantization

    def toeplitz(self, f: FunctionLike, m: int, return_defect: bool = False):
        return quantization.toeplitz(self.level(m), self._function(f), return_defect=return_defect)

    def adjoint_symbol(self, A: VmOperator) -> GridFunction:
        return quantization.adjoint_symbol(self._level_of(A), A)

    def bergman_rho(self, m: int) -> GridFunction:
        return quantization.bergman_rho(self.level(m))

    def berezin_symbol(self, A: VmOperator) -> GridFunction:
        return quantization.berezin_symbol(self._level_of(A), A)

    def hs_inner(self, A: VmOperator, B: VmOperator) -> complex:
        return quantization.hs_inner(A, B)

    def adjoint_injectivity(self, m: int) -> float:
        return quantization.adjoint_injectivity(self.level(m))

    # quantized Laplacian

    def induced_metric(self, m: int) -> InducedMetric:
        if m not in self._metrics:
            self._metrics[m] = qlaplacian.induced_metric(self.level(m))
        return self._metrics[m]

    def e_field(self, A: VmOperator) -> VectorField:
        return qlaplacian.e_field(self._level_of(A), A, self.induced_metric(A.m))

    def dirichlet_pair(self, A: VmOperator, B: VmOperator) -> complex:
        A.require_level(B.m)
        return qlaplacian.dirichlet_pair(self._level_of(A), A, B, self.induced_metric(A.m))

    def qlap_apply_toeplitz(self, A: VmOperator) -> VmOperator:
        return qlaplacian.qlap_apply_toeplitz(self._level_of(A), A)

    def qlap_assemble_projective(self, m: int, dense_cap: int = qlaplacian.DEFAULT_DENSE_CAP) -> QlapDense:
        return qlaplacian.qlap_assemble_projective(self.level(m), dense_cap)

    def spectrum(self, Q: QlapDense, tol: float = qlaplacian.HERMITIAN_TOL) -> np.ndarray:
        return qlaplacian.spectrum(Q, tol)

    def trace_formula(self, m: int) -> float:
        return qlaplacian.trace_formula(self.level(m))

    def balanced_identity_check(self, A: VmOperator):
        return qlaplacian.balanced_identity_check(self._level_of(A), A)

    # expansions

    def expansion_check(
        self,
        target: str,
        f: Optional[FunctionLike] = None,
        m_values: Sequence[int] = asymptotics.DEFAULT_LADDER,
        holdout: Optional[int] = asymptotics.DEFAULT_HOLDOUT,
        grid: Optional[Grid] = None,
        tolerances: Optional[Sequence[float]] = None,
    ) -> ExpansionCheck:
        if f is not None:
            f = self._function(f)
            if not isinstance(f, DictionaryFunction):
                raise ConfigError("Expansion checks need a dictionary function")
        return asymptotics.expansion_check(
            self.K, target, f, m_values, holdout=holdout, grid=grid,
            tolerances=tolerances, prepare=self.peek_level,
        )

    def rho_expansion_check(self, m_values: Sequence[int] = asymptotics.DEFAULT_LADDER,
                            **kwargs) -> ExpansionCheck:
        return self.expansion_check("rho", None, m_values, **kwargs)

    def tt_expansion_check(self, f: FunctionLike, m_values: Sequence[int] = asymptotics.DEFAULT_LADDER,
                           **kwargs) -> ExpansionCheck:
        return self.expansion_check("tt", f, m_values, **kwargs)

    def qlap_expansion_check(self, f: FunctionLike, m_values: Sequence[int] = asymptotics.DEFAULT_LADDER,
                             **kwargs) -> ExpansionCheck:
        return self.expansion_check("qlap", f, m_values, **kwargs)
