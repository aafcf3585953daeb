"""Test the large-m fits and the expansion checks built on them."""
import logging

import numpy as np
import pytest

from qlaplab.asymptotics import (
    TARGET_POWERS, coefficient_columns, evaluation_grid, expansion_check, fit_powers,
    qlap_expansion_check,
    relative_sup_error, rho_expansion_check, richardson_fit, self_adjointness_defect,
    tt_expansion_check,
)
from qlaplab.base import FitError
from qlaplab.geometry import DictionaryFunction, KahlerStructure, laplacian
from qlaplab.quadrature import build_grid
from qlaplab.types import GridFunction, MSeries

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

FS = KahlerStructure.fubini_study()
PERTURBED = KahlerStructure.parse("fs+0.1*u1")
U1 = DictionaryFunction.parse("u1")


def synthetic_series(levels, terms, grid):
    """MSeries with samples sum_k c_k m**p_k for (p_k, c_k) in ``terms``."""
    series = MSeries("synthetic", grid)
    for m in levels:
        values = sum(c * float(m) ** p for p, c in terms)
        series.add(m, GridFunction(grid, np.asarray(values, dtype=complex)))
    return series


@pytest.fixture
def small_grid():
    return build_grid(1, 4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(11)


class TestRichardsonFit:
    """Per-node least squares in powers of m."""

    def test_recovers_exact_coefficients(self, small_grid, rng):
        shape = small_grid.shape
        c = [rng.standard_normal(shape) + 1j * rng.standard_normal(shape) for _ in range(4)]
        powers = (1.0, 0.0, -1.0, -2.0)
        series = synthetic_series((8, 12, 16, 24, 32), list(zip(powers, c)), small_grid)
        fit = richardson_fit(series, powers)
        for k in range(4):
            np.testing.assert_allclose(fit.coefficients[k].values, c[k], atol=1e-8)
        assert fit.sup_residual < 1e-9
        assert fit.coefficient(0.0) is fit.coefficients[1]

    def test_linear_in_data(self, small_grid, rng):
        shape = small_grid.shape
        terms = [(1.0, rng.standard_normal(shape)), (0.0, rng.standard_normal(shape)),
                 (-1.5, rng.standard_normal(shape))]
        series = synthetic_series((8, 12, 16, 24, 32), terms, small_grid)
        powers = TARGET_POWERS["tt"]
        fit = richardson_fit(series, powers)
        doubled = richardson_fit(series.scaled(2.0 - 1.0j), powers)
        for a, b in zip(fit.coefficients, doubled.coefficients):
            np.testing.assert_allclose(b.values, (2.0 - 1.0j) * a.values, atol=1e-9)

    def test_order_gate(self, small_grid):
        ones = np.ones(small_grid.shape)
        terms = [(1.0, 2 * ones), (0.0, 3 * ones), (-1.0, 5 * ones), (-2.0, 7 * ones)]
        series = synthetic_series((8, 12, 16, 24, 32, 48), terms, small_grid)
        fit = richardson_fit(series, (1.0, 0.0, -1.0), holdout=48)
        np.testing.assert_allclose(fit.coefficients[0].values, 2.0, rtol=0.05)
        assert fit.predicted_slope == -1.0
        assert fit.observed_slope == pytest.approx(-1.0, abs=0.4)
        assert fit.order_ok
        assert fit.holdout_residual is not None and fit.holdout_residual > 0

    def test_exact_series_has_no_slope(self, small_grid):
        ones = np.ones(small_grid.shape)
        series = synthetic_series((4, 6, 8, 12, 16), [(1.0, ones), (0.0, ones)], small_grid)
        fit = richardson_fit(series, TARGET_POWERS["rho"])
        assert fit.observed_slope is None
        assert fit.order_ok

    def test_fit_powers_follow_ladder(self):
        assert fit_powers("rho", 3) == (1.0, 0.0)
        assert fit_powers("qlap", 4) == (0.0, -1.0, -2.0)
        assert fit_powers("tt", 5) == TARGET_POWERS["tt"]
        assert fit_powers("tt", 9) == TARGET_POWERS["tt"]
        assert fit_powers("rho", 1) == (1.0, 0.0)

    def test_too_few_levels(self, small_grid):
        series = synthetic_series((8, 16, 32), [(0.0, np.ones(small_grid.shape))], small_grid)
        with pytest.raises(FitError, match="need at least 5"):
            richardson_fit(series, TARGET_POWERS["qlap"])

    def test_ill_conditioned(self, small_grid):
        levels = [1_000_000 + k for k in range(6)]
        series = synthetic_series(levels, [(0.0, np.ones(small_grid.shape))], small_grid)
        with pytest.raises(FitError, match="condition"):
            richardson_fit(series, TARGET_POWERS["qlap"])

    def test_holdout_must_be_sampled(self, small_grid):
        series = synthetic_series((8, 12, 16, 24, 32), [(0.0, np.ones(small_grid.shape))], small_grid)
        with pytest.raises(FitError):
            richardson_fit(series, (0.0, -1.0), holdout=64)

    def test_levels_must_increase(self, small_grid):
        series = synthetic_series((8, 12), [(0.0, np.ones(small_grid.shape))], small_grid)
        with pytest.raises(ValueError):
            series.add(10, GridFunction(small_grid, np.ones(small_grid.shape, dtype=complex)))

    def test_relative_error_absolute_on_zero(self, small_grid):
        zero = GridFunction(small_grid, np.zeros(small_grid.shape, dtype=complex))
        small = GridFunction(small_grid, np.full(small_grid.shape, 1e-3, dtype=complex))
        assert relative_sup_error(small, zero) == pytest.approx(1e-3)
        assert relative_sup_error(small.scaled(2.0), small) == pytest.approx(1.0)


class TestExpansionChecks:
    """Leading coefficients of rho_m, T*T and T* Delta_m T."""

    def test_fubini_study_rho(self):
        check = rho_expansion_check(FS, (4, 6, 8, 12, 16), holdout=24)
        assert check.errors[0] < 1e-8
        assert check.errors[1] < 1e-6
        assert check.success

    def test_fubini_study_toeplitz_composite(self):
        check = tt_expansion_check(FS, U1, (8, 12, 16, 24, 32), holdout=48)
        # b_1(u1) = -u1
        u1 = U1.grid_function(check.references[1].grid).values
        np.testing.assert_allclose(check.references[1].values, -u1, atol=1e-10)
        assert check.errors[0] < 0.02
        assert check.errors[1] < 0.05
        assert check.fit.order_ok

    def test_fubini_study_quadratic_harmonic(self):
        f = DictionaryFunction.parse("u1*u2")
        check = tt_expansion_check(FS, f, (16, 24, 32, 48, 64), holdout=None)
        # Delta f = 12 pi f, so b_1 = f - 6f
        values = f.grid_function(check.references[1].grid).values
        np.testing.assert_allclose(check.references[1].values, -5 * values, atol=1e-9)
        assert check.errors[0] < 0.02
        assert check.errors[1] < 0.05

    def test_fubini_study_qlap(self):
        check = qlap_expansion_check(FS, U1, (12, 16, 24, 32, 48), holdout=64)
        grid = check.references[0].grid
        u1 = U1.grid_function(grid).values
        np.testing.assert_allclose(check.references[0].values, 4 * np.pi * u1, atol=1e-9)
        np.testing.assert_allclose(check.references[1].values, -16 * np.pi * u1, atol=1e-8)
        assert check.errors[0] < 0.02
        assert check.errors[1] < 0.05
        assert check.success

    def test_three_level_ladder(self):
        check = rho_expansion_check(FS, (4, 6, 8), holdout=12)
        assert check.fit.powers == (1.0, 0.0)
        assert check.fit.truncation_levels == (4, 6, 8, 12)
        assert check.errors[1] < 1e-8
        assert check.success

    def test_constant_is_annihilated(self):
        check = qlap_expansion_check(FS, DictionaryFunction.constant(1.0), (4, 6, 8, 12, 16), holdout=None)
        assert max(check.errors) < 1e-6

    def test_perturbed_rho(self):
        check = rho_expansion_check(PERTURBED, (8, 12, 16, 24, 32), holdout=48)
        assert check.errors[0] < 0.02
        assert check.errors[1] < 0.02

    @pytest.mark.parametrize("spec", ["fs+0.1*u1", "fs+0.1*u2"])
    def test_perturbed_qlap_leading(self, spec):
        check = qlap_expansion_check(KahlerStructure.parse(spec), U1, (12, 16, 24, 32, 48), holdout=64)
        assert check.errors[0] < 0.02

    def test_fitted_leading_operator_self_adjoint(self):
        f = U1
        g = DictionaryFunction.parse("u1*u1 + u1")
        Pf, Pg = (qlap_expansion_check(PERTURBED, h, (12, 16, 24, 32, 48), holdout=None).fit.coefficients[0]
                  for h in (f, g))
        assert self_adjointness_defect(PERTURBED, f, g, Pf, Pg) < 0.01

    def test_constant_toeplitz_composite_is_rho(self):
        check = tt_expansion_check(FS, DictionaryFunction.constant(1.0), (4, 6, 8, 12, 16), holdout=None)
        rho = rho_expansion_check(FS, (4, 6, 8, 12, 16), holdout=None)
        for a, b in zip(check.fit.coefficients, rho.fit.coefficients):
            np.testing.assert_allclose(a.values, b.values, atol=1e-8)

    def test_target_validation(self):
        with pytest.raises(ValueError):
            expansion_check(FS, "bogus")
        with pytest.raises(ValueError, match="dictionary function"):
            expansion_check(FS, "qlap")

    def test_self_adjoint_laplacian(self):
        grid = evaluation_grid()
        f = DictionaryFunction.parse("u1*u2 + u3")
        g = DictionaryFunction.parse("u2 - u1*u1")
        defect = self_adjointness_defect(PERTURBED, f, g, laplacian(PERTURBED, f, grid),
                                         laplacian(PERTURBED, g, grid))
        assert defect < 1e-6

    def test_coefficient_columns(self):
        check = rho_expansion_check(FS, (4, 6, 8, 12, 16), holdout=None, grid=evaluation_grid(8, 8))
        columns = coefficient_columns(check)
        assert list(columns) == ["node", "s", "theta", "coef_m+1", "coef_m+0", "coef_m-1",
                                 "coef_m-2", "ref_0", "ref_1", "residual"]
        assert {len(c) for c in columns.values()} == {64}
