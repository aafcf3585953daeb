"""Test Kahler structures, dictionary functions and closed-form jets."""
import logging

import numpy as np
import pytest

from qlaplab.base import ConfigError, GeometryError, MissingJetError
from qlaplab.geometry import (
    DictionaryFunction, KahlerStructure, bilaplacian, finite_difference_jet,
    laplacian, potential_jet, scalar_curvature, volume,
)
from qlaplab.quadrature import build_grid, integrate
from qlaplab.types import GridFunction

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

POINTS = np.array([0.3 + 0.1j, -0.7 + 0.4j, 1.2 - 0.5j, 0.05j])


class TestDictionaryFunction:
    """Parsing and evaluation of functions built from u1, u2, u3."""

    def test_canonical_form(self):
        assert DictionaryFunction.parse("u1 + u1") == DictionaryFunction.parse("2*u1")
        assert DictionaryFunction.parse("u1*u2").expression == "u1*u2"

    @pytest.mark.parametrize("text", ["x", "u4", "", "u1 +* u2", "import os"])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            DictionaryFunction.parse(text)

    def test_unit_sphere(self):
        u1, u2, u3 = (DictionaryFunction.parse(u).evaluate(POINTS) for u in ("u1", "u2", "u3"))
        np.testing.assert_allclose(u1 ** 2 + u2 ** 2 + u3 ** 2, 1.0, rtol=1e-13)
        for u in (u1, u2, u3):
            assert np.max(np.abs(u.imag)) < 1e-14

    def test_north_pole(self):
        assert DictionaryFunction.parse("u1").evaluate(np.array([0j]))[0] == pytest.approx(1.0)

    def test_constant(self):
        f = DictionaryFunction.constant(2.5)
        assert f.is_constant
        grid = build_grid(1, 4, 4)
        gf = f.grid_function(grid)
        np.testing.assert_allclose(gf.values, 2.5)
        np.testing.assert_allclose(gf.dzzb, 0.0)

    def test_jet_matches_finite_differences(self):
        f = DictionaryFunction.parse("u1*u2 + u3")
        fz, fzb, fzzb = f.jet(POINTS)[1:]
        dz, dzb, dzzb = finite_difference_jet(f.evaluate, POINTS)
        np.testing.assert_allclose(fz, dz, atol=1e-6)
        np.testing.assert_allclose(fzb, dzb, atol=1e-6)
        np.testing.assert_allclose(fzzb, dzzb, atol=1e-5)


class TestKahlerStructure:
    """Geometry specs, validity bound and positivity."""

    def test_parse_fs(self):
        K = KahlerStructure.parse("fs")
        assert K.is_fubini_study
        assert K.spec == "fs"

    def test_parse_perturbed(self):
        K = KahlerStructure.parse("fs+0.1*u1")
        assert K.epsilon == pytest.approx(0.1)
        assert K.spec == "fs+0.1*u1"
        assert KahlerStructure.parse("fs-0.05*u2").epsilon == pytest.approx(-0.05)

    def test_validity_bound(self):
        with pytest.raises(ConfigError, match="validity bound"):
            KahlerStructure.parse("fs+0.9*u1")

    @pytest.mark.parametrize("spec", ["fubini", "fs+", "fs+0.1", "fs+0.1*v1"])
    def test_malformed_spec(self, spec):
        with pytest.raises(ConfigError):
            KahlerStructure.parse(spec)

    def test_direction_required(self):
        with pytest.raises(GeometryError):
            KahlerStructure(0.1, None)

    def test_non_positive_form(self):
        with pytest.raises(GeometryError):
            KahlerStructure(0.9, DictionaryFunction.parse("u1"), eps_bound=1.0)

    def test_potential_jet(self):
        K = KahlerStructure.parse("fs+0.1*u2")

        def phi(z):
            return np.log1p(np.abs(z) ** 2) + K.weight_exponent(z)

        _, phi_z, lam = potential_jet(K, POINTS)
        dz, _, dzzb = finite_difference_jet(phi, POINTS)
        np.testing.assert_allclose(phi_z, dz, atol=1e-6)
        np.testing.assert_allclose(lam, dzzb.real, atol=1e-5)

    def test_fs_density(self):
        K = KahlerStructure.fubini_study()
        grid = build_grid(3)
        np.testing.assert_allclose(K.density(grid.z), grid.fs_density, rtol=1e-12)


class TestLaplacian:
    """Positive Laplacian Delta f = -2 pi f_zzb / lambda."""

    @pytest.fixture
    def grid(self):
        return build_grid(1, 24, 24)

    def test_first_eigenvalue(self, grid):
        K = KahlerStructure.fubini_study()
        u1 = DictionaryFunction.parse("u1")
        lap = laplacian(K, u1, grid)
        np.testing.assert_allclose(lap.values, 4 * np.pi * u1.grid_function(grid).values, atol=1e-11)

    def test_second_eigenvalue(self, grid):
        K = KahlerStructure.fubini_study()
        f = DictionaryFunction.parse("u1*u2")
        lap = laplacian(K, f, grid)
        np.testing.assert_allclose(lap.values, 12 * np.pi * f.grid_function(grid).values, atol=1e-10)

    def test_bilaplacian(self, grid):
        K = KahlerStructure.fubini_study()
        u1 = DictionaryFunction.parse("u1")
        bilap = bilaplacian(K, u1, grid)
        np.testing.assert_allclose(bilap.values, 16 * np.pi ** 2 * u1.grid_function(grid).values,
                                   atol=1e-9)

    def test_grid_function_route(self, grid):
        K = KahlerStructure.parse("fs+0.1*u1")
        f = DictionaryFunction.parse("u2")
        symbolic = laplacian(K, f, grid)
        sampled = laplacian(K, f.grid_function(grid))
        np.testing.assert_allclose(sampled.values, symbolic.values, atol=1e-11)

    def test_missing_jet(self, grid):
        K = KahlerStructure.fubini_study()
        with pytest.raises(MissingJetError):
            laplacian(K, GridFunction(grid, np.ones(grid.shape, dtype=complex)))

    def test_scalar_curvature_fs(self, grid):
        scal = scalar_curvature(KahlerStructure.fubini_study(), grid)
        np.testing.assert_allclose(scal.values, 8 * np.pi, rtol=1e-12)

    @pytest.mark.parametrize("spec", ["fs+0.1*u1", "fs+0.1*u1*u2", "fs+0.15*u1*u2"])
    def test_gauss_bonnet(self, spec):
        K = KahlerStructure.parse(spec)
        fine = build_grid(1, 48, 64)
        total = integrate(K, scalar_curvature(K, fine).scaled(1 / (8 * np.pi)))
        assert total.real == pytest.approx(1.0, rel=1e-8)
        assert abs(total.imag) < 1e-12

    def test_scalar_curvature_linear_in_epsilon(self, grid):
        def deviation(eps):
            scal = scalar_curvature(KahlerStructure.parse(f"fs+{eps}*u1"), grid)
            return float(np.max(np.abs(scal.values - 8 * np.pi)))

        small, double = deviation(0.01), deviation(0.02)
        assert small > 0
        assert double / small == pytest.approx(2.0, rel=0.1)
        assert deviation(0.001) < 0.2 * small

    def test_volume(self):
        assert volume(KahlerStructure.fubini_study()) == pytest.approx(1.0, rel=1e-13)
        assert volume(KahlerStructure.parse("fs+0.1*u1")) == pytest.approx(1.0, rel=1e-10)
        assert volume(KahlerStructure.parse("fs+0.15*u1*u2")) == pytest.approx(1.0, rel=1e-8)
