"""The quantized Laplacian Delta_m = e_m^* o e_m on V_m = End(H_m).

Two independent routes are provided and cross-checked:

* the Toeplitz route, Delta_m(A) = T_m( (omega_m/(rho_m omega)) Delta_{g_m} u_A ),
  which never forms a dense (m+1)^2 x (m+1)^2 matrix;
* the projective route, the Hermitian form
  <Delta_m E_ab, E_cd> = integral of i d u_ab ^ dbar conj(u_cd),
  assembled densely from the Berezin symbols u_ab of the matrix units.

In the chart Delta_{g_m} v = -2 pi v_zzb / lambda_m, so the Toeplitz symbol
reduces to -2 pi (u_A)_zzb / (lambda rho_m).
"""
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from .base import DenseCapError, InducedMetricError, NonHermitianError, RealArray
from .geometry import laplacian, volume
from .quadrature import pair_matrix, weighted_sum
from .quantization import (
    adjoint_symbol, bergman_rho, berezin_symbol, section_sums, toeplitz,
)
from .sections import Level
from .types import GridFunction, InducedMetric, QlapDense, VectorField, VmOperator

logger = logging.getLogger(__name__)

DEFAULT_DENSE_CAP = 4096
KERNEL_REL_TOL = 1e-8
HERMITIAN_TOL = 1e-9


def induced_metric(level: Level) -> InducedMetric:
    """Density lambda_m of omega_m = m omega + (i/2pi) ddbar log rho_m.

    Computed as (F F_zzb - F_z F_zb)/F^2 with F the unweighted section sum,
    i.e. the pull-back of the Fubini-Study form of P(H_m).

    Raises:
        InducedMetricError: If lambda_m is not positive at every node.
    """
    F, F_z, F_zb, F_zzb = section_sums(level.table, VmOperator.identity(level.m))
    density = ((F * F_zzb - F_z * F_zb) / F ** 2).real
    if not np.all(density > 0):
        logger.error(f"Induced metric degenerates at m={level.m} for {level.K.spec}")
        raise InducedMetricError(
            f"lambda_m not positive at level {level.m} (min {float(np.min(density)):.3e})"
        )
    rho = (F * level.table.weight).real
    lam = level.density
    return InducedMetric(
        m=level.m,
        grid=level.grid,
        density=density,
        ratio_to_omega=density / lam,
        ratio_to_rho_omega=density / (lam * rho),
    )


def e_field(level: Level, A: VmOperator, metric: Optional[InducedMetric] = None) -> VectorField:
    """g_m-gradient of the Berezin symbol u_A.

    X = (2pi/lambda_m) (d_zb u_A) d_z + (2pi/lambda_m) (d_z u_A) d_zb.
    """
    metric = metric or induced_metric(level)
    u = berezin_symbol(level, A)
    scale = 2 * np.pi / metric.density
    return VectorField(level.grid, dz=scale * u.dzb, dzb=scale * u.dz, metric=metric.density)


def dirichlet_pair(level: Level, A: VmOperator, B: VmOperator,
                   metric: Optional[InducedMetric] = None) -> complex:
    """(e_m(A), e_m(B))_m = integral of g_m(e_m A, e_m B) omega_m."""
    metric = metric or induced_metric(level)
    X = e_field(level, A, metric)
    Y = e_field(level, B, metric)
    return weighted_sum(level.grid, X.pairing(Y) * metric.density / level.grid.fs_density)


def toeplitz_route_symbol(level: Level, A: VmOperator) -> GridFunction:
    """(omega_m/(rho_m omega)) Delta_{g_m}(u_A) = -2 pi (u_A)_zzb / (lambda rho_m)."""
    u = berezin_symbol(level, A)
    rho = bergman_rho(level).values.real
    values = -2 * np.pi * u.dzzb / (level.density * rho)
    return GridFunction(level.grid, values, label="qlap_symbol")


def qlap_apply_toeplitz(level: Level, A: VmOperator) -> VmOperator:
    """Delta_m(A) through the Toeplitz route; O(m^2 |grid|)."""
    A.require_level(level.m)
    return toeplitz(level, toeplitz_route_symbol(level, A), symmetrize=False)


def symbol_gradient_table(level: Level) -> np.ndarray:
    """G[.., a] with d_z u_ab = G_a conj(s_b) (half weights cancel)."""
    F, F_z, _, _ = section_sums(level.table, VmOperator.identity(level.m))
    V, D = level.table.values, level.table.dvalues
    return (D * F[..., None] - V * F_z[..., None]) / (F ** 2)[..., None]


def qlap_assemble_projective(level: Level, dense_cap: int = DEFAULT_DENSE_CAP) -> QlapDense:
    """Dense Delta_m from the form integral of i du_ab ^ dbar conj(u_cd).

    Raises:
        DenseCapError: If (m+1)^2 exceeds ``dense_cap``.
    """
    n = level.dim
    if n * n > dense_cap:
        raise DenseCapError(
            f"Dense assembly at m={level.m} needs {n * n} > {dense_cap} entries per side; "
            "use the Toeplitz apply route (qlap_apply_toeplitz) instead"
        )
    G = symbol_gradient_table(level)
    V = level.table.values
    coeff = 2 * np.pi * level.grid.weights / level.grid.fs_density

    def rows(sl):
        block = G[sl][..., :, None] * np.conj(V[sl])[..., None, :]
        return block.reshape(block.shape[0], block.shape[1], n * n)

    # P[i, j] = sum c U_i conj(U_j) = Q(E_i, E_j); the operator matrix is conj(P)
    P = pair_matrix(level.grid, coeff, rows, workers=level.workers)
    logger.info(f"Assembled dense Delta_m at m={level.m} ({n * n} x {n * n})")
    return QlapDense(np.conj(P), level.m)


def spectrum(Q: QlapDense, tol: float = HERMITIAN_TOL) -> RealArray:
    """Sorted eigenvalues of the dense Delta_m.

    Raises:
        NonHermitianError: If the Hermitian defect exceeds ``tol``.
    """
    if Q.hermitian_defect > tol:
        raise NonHermitianError(
            f"Dense Delta_m at m={Q.m} has Hermitian defect {Q.hermitian_defect:.2e}"
        )
    herm = 0.5 * (Q.matrix + Q.matrix.conj().T)
    return scipy.linalg.eigh(herm, eigvals_only=True)


def route_defect(Q: QlapDense, level: Level, A: VmOperator) -> float:
    """Frobenius gap between the dense and Toeplitz routes on A, relative to |Delta_m A|."""
    dense = Q.apply(A).matrix
    diff = float(np.linalg.norm(dense - qlap_apply_toeplitz(level, A).matrix))
    scale = float(np.linalg.norm(dense))
    return diff / scale if scale > 1e-12 else diff


def kernel_dimension(eigenvalues: RealArray, rel_tol: float = KERNEL_REL_TOL) -> int:
    """Number of eigenvalues with |lambda| <= rel_tol * max|lambda|."""
    scale = float(np.max(np.abs(eigenvalues)))
    return int(np.sum(np.abs(eigenvalues) <= rel_tol * scale))


def trace_formula(level: Level) -> float:
    """2 pi n m^n times the volume of omega."""
    n = level.K.n
    return 2 * np.pi * n * level.m ** n * volume(level.K)


def balanced_constant(level: Level) -> float:
    """m^(n-1) Vol^2 / dim(H_m)^2."""
    n = level.K.n
    return level.m ** (n - 1) * volume(level.K) ** 2 / level.dim ** 2


def balanced_identity_check(level: Level, A: VmOperator) -> Tuple[VmOperator, VmOperator, float]:
    """Compare Delta_m(A) with C T_m(Delta(T*_m A)).

    Exact when omega is m-balanced; elsewhere the defect is a diagnostic.
    The defect is relative to the operator norm of the left side, absolute
    when that side vanishes.
    """
    lhs = qlap_apply_toeplitz(level, A)
    symbol = adjoint_symbol(level, A)
    rhs_symbol = laplacian(level.K, symbol).scaled(balanced_constant(level))
    rhs = toeplitz(level, rhs_symbol, symmetrize=False)
    diff = np.linalg.norm(lhs.matrix - rhs.matrix, 2)
    scale = lhs.norm()
    defect = float(diff / scale) if scale > 1e-12 else float(diff)
    logger.debug(f"Balanced identity defect {defect:.2e} at m={level.m}")
    return lhs, rhs, defect
