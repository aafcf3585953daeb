"""Holomorphic sections H_m = H^0(CP^1, O(m)) as polynomials of degree <= m.

Monomials are ordered z^0, z^1, ..., z^m and every matrix index inherits
that order. The orthonormal basis is obtained from a Cholesky factor of
the Gram matrix, which makes it canonical given the monomial order.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.special import comb

from .base import CholeskyError, ComplexArray, RealArray
from .geometry import KahlerStructure
from .quadrature import build_grid, density_ratio, pair_matrix
from .types import GramMatrix, Grid, SectionTable

logger = logging.getLogger(__name__)


def monomial_tables(m: int, grid: Grid) -> Tuple[ComplexArray, ComplexArray]:
    """z^j and j z^(j-1), both times the half weight (1+|z|^2)^(-m/2).

    Evaluated in log form so that neither the powers nor the weight
    overflow at large m.
    """
    j = np.arange(m + 1, dtype=float)
    log_r = 0.5 * (np.log(grid.s) - np.log1p(-grid.s))
    log_half_weight = 0.5 * m * np.log1p(-grid.s)
    phase = np.exp(1j * grid.theta[:, None] * j[None, :])

    mag = np.exp(j[None, :] * log_r[:, None] + log_half_weight[:, None])
    values = mag[:, None, :] * phase[None, :, :]

    derivs = np.zeros_like(values)
    if m >= 1:
        k = j[1:]
        dmag = k[None, :] * np.exp((k - 1)[None, :] * log_r[:, None] + log_half_weight[:, None])
        derivs[..., 1:] = dmag[:, None, :] * phase[None, :, :-1]
    return values, derivs


def weight_table(K: KahlerStructure, m: int, grid: Grid) -> RealArray:
    """exp(-m eps psi); the Fubini-Study part lives in the section tables."""
    return np.exp(-m * K.weight_exponent(grid.z))


def _measure(K: KahlerStructure, m: int, grid: Grid) -> RealArray:
    return grid.weights * density_ratio(K, grid) * weight_table(K, m, grid)


def gram(K: KahlerStructure, m: int, grid: Optional[Grid] = None, workers: int = 1) -> GramMatrix:
    """Gram matrix G_jk = b_m(z^j, z^k) of the monomials.

    Raises:
        CholeskyError: If the matrix is not positive definite.
    """
    grid = grid or build_grid(m)
    K.validate(grid)
    values, _ = monomial_tables(m, grid)
    entries = pair_matrix(grid, _measure(K, m, grid), values, workers=workers)
    G = GramMatrix(m, entries)
    logger.debug(f"Gram matrix at m={m}: hermitian defect {G.hermitian_defect:.2e}")
    return G


def orthonormalize(G: GramMatrix) -> ComplexArray:
    """basis_change R^-1 with s_a = sum_j (R^-1)_ja z^j.

    R is the upper Cholesky factor of conj(G) = G^T, so that
    b_m(s_a, s_b) = delta_ab with b_m linear in its first slot.

    Raises:
        CholeskyError: If G is not positive definite.
    """
    herm = 0.5 * (G.entries + G.entries.conj().T)
    try:
        R = scipy.linalg.cholesky(herm.T, lower=False, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Cholesky failed at m={G.m}: {e}")
        raise CholeskyError(
            f"Gram matrix at level {G.m} is not positive definite; "
            "epsilon too large or grid too coarse"
        ) from e
    eye = np.eye(R.shape[0], dtype=complex)
    return scipy.linalg.solve_triangular(R, eye, lower=False)


def evaluate_table(
    K: KahlerStructure,
    m: int,
    basis_change: ComplexArray,
    grid: Grid,
) -> SectionTable:
    """Orthonormal sections and their z-derivatives on ``grid``."""
    values, derivs = monomial_tables(m, grid)
    return SectionTable(
        m=m,
        grid=grid,
        basis_change=basis_change,
        values=values @ basis_change,
        dvalues=derivs @ basis_change,
        weight=weight_table(K, m, grid),
    )


def section_gram(K: KahlerStructure, table: SectionTable, workers: int = 1) -> ComplexArray:
    """Quadrature Gram matrix b_m(s_a, s_b) of the orthonormal sections."""
    coeff = table.grid.weights * density_ratio(K, table.grid) * table.weight
    return pair_matrix(table.grid, coeff, table.values, workers=workers)


def fs_gram_diagonal(m: int) -> RealArray:
    """k!(m-k)!/(m+1)!, the Fubini-Study norms of the monomials."""
    k = np.arange(m + 1)
    return 1.0 / ((m + 1) * comb(m, k, exact=False))


@dataclass(frozen=True, eq=False)
class Level:
    """Everything needed to quantize at one level m on one grid."""
    K: KahlerStructure
    m: int
    grid: Grid
    gram: GramMatrix
    table: SectionTable
    workers: int = 1

    @property
    def dim(self) -> int:
        return self.m + 1

    @cached_property
    def measure(self) -> RealArray:
        """Quadrature weights times lambda/lambda_FS times exp(-m eps psi)."""
        return _measure(self.K, self.m, self.grid)

    @cached_property
    def density(self) -> RealArray:
        return self.K.density(self.grid.z)

    @cached_property
    def potential_jet(self):
        return self.K.potential_jet(self.grid.z)

    def with_grid(self, grid: Grid) -> SectionTable:
        """The same orthonormal basis evaluated on another grid."""
        return evaluate_table(self.K, self.m, self.table.basis_change, grid)


def prepare_level(
    K: KahlerStructure,
    m: int,
    ns: Optional[int] = None,
    ntheta: Optional[int] = None,
    workers: int = 1,
) -> Level:
    """Build grid, Gram matrix, orthonormal basis and section tables for level m."""
    grid = build_grid(m, ns, ntheta)
    G = gram(K, m, grid, workers=workers)
    basis_change = orthonormalize(G)
    table = evaluate_table(K, m, basis_change, grid)
    logger.info(f"Prepared level m={m} on {grid!r} for {K.spec}")
    return Level(K=K, m=m, grid=grid, gram=G, table=table, workers=workers)
