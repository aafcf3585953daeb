"""Test the quantized Laplacian: induced metric, both routes, spectrum."""
import logging

import numpy as np
import pytest

from qlaplab.base import DenseCapError, NonHermitianError
from qlaplab.geometry import KahlerStructure
from qlaplab.qlaplacian import (
    balanced_constant, balanced_identity_check, dirichlet_pair, e_field, induced_metric,
    kernel_dimension, qlap_apply_toeplitz, qlap_assemble_projective, route_defect, spectrum,
    trace_formula,
)
from qlaplab.quantization import hs_inner
from qlaplab.sections import prepare_level
from qlaplab.types import QlapDense, VmOperator

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

PERTURBED = "fs+0.1*u1"


@pytest.fixture
def fs_level():
    return prepare_level(KahlerStructure.fubini_study(), 4)


@pytest.fixture
def perturbed_level():
    return prepare_level(KahlerStructure.parse(PERTURBED), 5)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


class TestInducedMetric:
    """omega_m as the pull-back of the Fubini-Study form of P(H_m)."""

    @pytest.mark.parametrize("m", [1, 4, 12])
    def test_fubini_study_scales(self, m):
        level = prepare_level(KahlerStructure.fubini_study(), m)
        metric = induced_metric(level)
        np.testing.assert_allclose(metric.ratio_to_omega, m, rtol=1e-10)
        np.testing.assert_allclose(metric.ratio_to_rho_omega, m / (m + 1), rtol=1e-10)

    @pytest.mark.parametrize("spec", ["fs", PERTURBED, "fs-0.15*u2"])
    def test_total_mass_is_degree(self, spec):
        level = prepare_level(KahlerStructure.parse(spec), 9)
        assert induced_metric(level).total_mass() == pytest.approx(9.0, rel=1e-7)


class TestDirichletForm:
    """e_m and the form (e_m A, e_m B)_m."""

    def test_identity_has_no_gradient(self, perturbed_level):
        X = e_field(perturbed_level, VmOperator.identity(5))
        assert np.max(np.abs(X.dz)) < 1e-9
        assert np.max(np.abs(X.dzb)) < 1e-9

    def test_linear(self, perturbed_level, rng):
        A = VmOperator.random(5, rng)
        B = VmOperator.random(5, rng)
        C = VmOperator(2.0 * A.matrix - 1j * B.matrix, 5)
        XA, XB, XC = (e_field(perturbed_level, op) for op in (A, B, C))
        np.testing.assert_allclose(XC.dz, 2.0 * XA.dz - 1j * XB.dz, atol=1e-9)

    def test_identity_pairs_to_zero(self, perturbed_level, rng):
        A = VmOperator.random(5, rng)
        assert abs(dirichlet_pair(perturbed_level, VmOperator.identity(5), A)) < 1e-9

    def test_conjugate_symmetric(self, perturbed_level, rng):
        A = VmOperator.random(5, rng)
        B = VmOperator.random(5, rng)
        ab = dirichlet_pair(perturbed_level, A, B)
        ba = dirichlet_pair(perturbed_level, B, A)
        assert abs(ab - np.conj(ba)) <= 1e-10 * abs(ab)
        assert dirichlet_pair(perturbed_level, A, A).real > 0

    @pytest.mark.parametrize("spec", ["fs", PERTURBED])
    def test_matches_toeplitz_route(self, spec, rng):
        level = prepare_level(KahlerStructure.parse(spec), 6)
        A = VmOperator.random(6, rng)
        B = VmOperator.random(6, rng)
        form = dirichlet_pair(level, A, B)
        via_apply = hs_inner(qlap_apply_toeplitz(level, A), B)
        assert abs(form - via_apply) <= 1e-8 * abs(form)


class TestToeplitzRoute:
    """Delta_m applied without a dense matrix."""

    def test_identity_in_kernel(self, perturbed_level):
        assert qlap_apply_toeplitz(perturbed_level, VmOperator.identity(5)).norm() <= 1e-9

    def test_star_equivariant(self, perturbed_level, rng):
        A = VmOperator.random(5, rng)
        lhs = qlap_apply_toeplitz(perturbed_level, A.adjoint()).matrix
        rhs = qlap_apply_toeplitz(perturbed_level, A).adjoint().matrix
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_hermitian_stays_hermitian(self, perturbed_level, rng):
        out = qlap_apply_toeplitz(perturbed_level, VmOperator.random(5, rng, hermitian=True))
        np.testing.assert_allclose(out.matrix, out.matrix.conj().T, atol=1e-10)


class TestProjectiveRoute:
    """Dense assembly, trace and spectrum."""

    def test_identity_row_vanishes(self, perturbed_level):
        Q = qlap_assemble_projective(perturbed_level)
        residual = Q.matrix @ VmOperator.identity(5).flatten()
        assert np.max(np.abs(residual)) <= 1e-9 * np.max(np.abs(Q.matrix))

    @pytest.mark.parametrize("spec", ["fs", PERTURBED])
    def test_routes_agree(self, spec, rng):
        level = prepare_level(KahlerStructure.parse(spec), 4)
        Q = qlap_assemble_projective(level)
        for _ in range(3):
            A = VmOperator.random(4, rng)
            dense = Q.apply(A).matrix
            toeplitz_route = qlap_apply_toeplitz(level, A).matrix
            assert np.linalg.norm(dense - toeplitz_route) <= 1e-8 * np.linalg.norm(dense)
            assert route_defect(Q, level, A) == pytest.approx(
                np.linalg.norm(dense - toeplitz_route) / np.linalg.norm(dense))

    @pytest.mark.parametrize("m", [2, 4, 6])
    def test_trace(self, m):
        level = prepare_level(KahlerStructure.fubini_study(), m)
        Q = qlap_assemble_projective(level)
        assert trace_formula(level) == pytest.approx(2 * np.pi * m)
        assert Q.trace() == pytest.approx(2 * np.pi * m, rel=1e-6)

    def test_trace_perturbed(self, perturbed_level):
        Q = qlap_assemble_projective(perturbed_level)
        assert Q.trace() == pytest.approx(trace_formula(perturbed_level), rel=1e-6)

    @pytest.mark.parametrize("spec", ["fs", PERTURBED])
    def test_spectrum(self, spec):
        level = prepare_level(KahlerStructure.parse(spec), 4)
        eigs = spectrum(qlap_assemble_projective(level))
        assert np.all(np.diff(eigs) >= 0)
        assert eigs[0] >= -1e-9 * eigs[-1]
        assert kernel_dimension(eigs) == 1

    def test_dense_cap(self, fs_level):
        with pytest.raises(DenseCapError, match="qlap_apply_toeplitz"):
            qlap_assemble_projective(fs_level, dense_cap=24)

    def test_non_hermitian(self):
        mat = np.zeros((4, 4), dtype=complex)
        mat[0, 1] = 1.0
        with pytest.raises(NonHermitianError):
            spectrum(QlapDense(mat, 1))

    def test_kernel_dimension(self):
        assert kernel_dimension(np.array([0.0, 1.0, 2.0])) == 1
        assert kernel_dimension(np.array([1e-12, 3e-11, 5.0, 9.0])) == 2


class TestBalancedIdentity:
    """Delta_m = C T_m Delta T*_m on balanced metrics."""

    def test_constant(self, fs_level):
        assert balanced_constant(fs_level) == pytest.approx(1 / 25)

    @pytest.mark.parametrize("m", [2, 5, 8])
    def test_exact_at_fubini_study(self, m, rng):
        level = prepare_level(KahlerStructure.fubini_study(), m)
        _, _, defect = balanced_identity_check(level, VmOperator.random(m, rng))
        assert defect <= 1e-8

    def test_defect_off_balanced(self, perturbed_level, rng):
        _, _, defect = balanced_identity_check(perturbed_level, VmOperator.random(5, rng))
        assert defect > 1e-6

    def test_identity_absolute(self, fs_level):
        _, rhs, defect = balanced_identity_check(fs_level, VmOperator.identity(4))
        assert defect < 1e-9
        assert rhs.norm() < 1e-9
