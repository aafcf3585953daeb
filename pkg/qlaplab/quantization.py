"""Berezin-Toeplitz quantization at a fixed level.

Conventions (orthonormal basis {s_a} of H_m, b_m linear in the first slot):

    T_m(f)_ba  = integral of f h^m(s_a, s_b) omega,  T_m(f) s_a = sum_b T_m(f)_ba s_b
    T*_m(A)(z) = sum_ab A_ba s_b(z) conj(s_a(z)) exp(-m phi(z))
    <A, B>     = tr(A B*)

so that <T_m(f), A> = <f, T*_m(A)>.
"""
import logging
from typing import Optional, Tuple, Union

import numpy as np

from .base import ComplexArray, LevelMismatchError
from .geometry import DictionaryFunction
from .quadrature import pair_matrix
from .sections import Level
from .types import GridFunction, SectionTable, VmOperator

logger = logging.getLogger(__name__)

SYMMETRIZATION_TOL = 1e-11


def hs_inner(A: VmOperator, B: VmOperator) -> complex:
    """Hilbert-Schmidt product tr(A B*)."""
    if A.m != B.m:
        raise LevelMismatchError(f"Levels {A.m} and {B.m} differ")
    return complex(np.sum(A.matrix * np.conj(B.matrix)))


def _sample(level: Level, f: Union[DictionaryFunction, GridFunction]) -> GridFunction:
    if isinstance(f, DictionaryFunction):
        return f.grid_function(level.grid)
    f.check_grid(level.grid)
    return f


def toeplitz(
    level: Level,
    f: Union[DictionaryFunction, GridFunction],
    return_defect: bool = False,
    symmetrize: Optional[bool] = None,
) -> Union[VmOperator, Tuple[VmOperator, float]]:
    """Matrix of T_m(f) = P o M(f) in the orthonormal basis.

    Real ``f`` gives a Hermitian matrix: T is replaced by (T + T*)/2 and the
    Frobenius norm of the removed anti-Hermitian part is the defect.
    ``symmetrize=None`` decides from the samples of ``f``.
    """
    sample = _sample(level, f)
    coeff = level.measure * sample.values
    # pair_matrix gives M[a, b] = sum c s_a conj(s_b) = T[b, a]
    T = pair_matrix(level.grid, coeff, level.table.values, workers=level.workers).T
    defect = 0.0
    if symmetrize is None:
        symmetrize = isinstance(f, DictionaryFunction) or sample.is_real()
    if symmetrize:
        defect = float(np.linalg.norm(T - T.conj().T))
        T = 0.5 * (T + T.conj().T)
        if defect > SYMMETRIZATION_TOL * max(1.0, float(np.linalg.norm(T))):
            logger.warning(f"Toeplitz symmetrization defect {defect:.2e} at m={level.m}")
    op = VmOperator(np.ascontiguousarray(T), level.m)
    return (op, defect) if return_defect else op


def section_sums(table: SectionTable, A: VmOperator) -> Tuple[ComplexArray, ...]:
    """F = sum A_ba s_b conj(s_a) and its jet, times (1+|z|^2)^-m.

    Returns (F, F_z, F_zb, F_zzb) on the grid of ``table``; only the first
    derivative tables of the sections are needed.
    """
    A.require_level(table.m)
    V = table.flat_values()
    D = table.flat_dvalues()
    VA = V @ A.matrix
    DA = D @ A.matrix
    shape = table.grid.shape
    F = np.sum(VA * np.conj(V), axis=1).reshape(shape)
    F_z = np.sum(DA * np.conj(V), axis=1).reshape(shape)
    F_zb = np.sum(VA * np.conj(D), axis=1).reshape(shape)
    F_zzb = np.sum(DA * np.conj(D), axis=1).reshape(shape)
    return F, F_z, F_zb, F_zzb


def adjoint_symbol(level: Level, A: VmOperator, table: Optional[SectionTable] = None) -> GridFunction:
    """T*_m(A) with its analytic jet (product rule against exp(-m phi))."""
    table = table or level.table
    A.require_level(level.m)
    F, F_z, F_zb, F_zzb = section_sums(table, A)
    if table is level.table:
        _, phi_z, lam = level.potential_jet
    else:
        _, phi_z, lam = level.K.potential_jet(table.grid.z)
    m = level.m
    phi_zb = np.conj(phi_z)
    w = table.weight
    return GridFunction(
        table.grid,
        F * w,
        dz=(F_z - m * phi_z * F) * w,
        dzb=(F_zb - m * phi_zb * F) * w,
        dzzb=(F_zzb - m * phi_zb * F_z - m * phi_z * F_zb
              + (m * m * phi_z * phi_zb - m * lam) * F) * w,
        label="adjoint_symbol",
    )


def bergman_rho(level: Level, table: Optional[SectionTable] = None) -> GridFunction:
    """Density of states rho_m = T*_m(I) with jet."""
    rho = adjoint_symbol(level, VmOperator.identity(level.m), table)
    return GridFunction(rho.grid, rho.values, rho.dz, rho.dzb, rho.dzzb, label="rho")


def quotient_jet(P, Q):
    """Jet of P/Q from the jets (value, d_z, d_zb, d_zzb) of P and Q."""
    p, pz, pzb, pzzb = P
    q, qz, qzb, qzzb = Q
    u = p / q
    u_z = (pz * q - p * qz) / q ** 2
    u_zb = (pzb * q - p * qzb) / q ** 2
    u_zzb = (pzzb / q - (pz * qzb + pzb * qz) / q ** 2
             - p * qzzb / q ** 2 + 2 * p * qz * qzb / q ** 3)
    return u, u_z, u_zb, u_zzb


def berezin_symbol(level: Level, A: VmOperator, table: Optional[SectionTable] = None) -> GridFunction:
    """u_A = T*_m(A)/rho_m with jet; the weight exp(-m phi) cancels."""
    table = table or level.table
    P = section_sums(table, A)
    Q = section_sums(table, VmOperator.identity(level.m))
    u, u_z, u_zb, u_zzb = quotient_jet(P, Q)
    return GridFunction(table.grid, u, dz=u_z, dzb=u_zb, dzzb=u_zzb, label="berezin_symbol")


def toeplitz_adjoint_composite(level: Level, f: Union[DictionaryFunction, GridFunction],
                               table: Optional[SectionTable] = None) -> GridFunction:
    """T*_m T_m(f), optionally sampled on another grid."""
    return adjoint_symbol(level, toeplitz(level, f), table)


def adjoint_injectivity(level: Level) -> float:
    """Smallest eigenvalue of the L2 Gram matrix of {T*_m(E_ab)}.

    Positive exactly when T*_m is injective.
    """
    n = level.dim
    table = level.table
    coeff = level.grid.weights * level.K.density_ratio(level.grid)

    def rows(sl):
        V = table.values[sl]
        w = table.weight[sl][..., None, None]
        block = V[..., :, None] * np.conj(V)[..., None, :] * w
        return block.reshape(V.shape[0], V.shape[1], n * n)

    G = pair_matrix(level.grid, coeff, rows, workers=level.workers)
    G = 0.5 * (G + G.conj().T)
    return float(np.linalg.eigvalsh(G)[0])
