"""Hodge geometry of (CP^1, O(1)) in one affine chart.

The Kahler potential is phi = log(1+|z|^2) + eps*psi with h_loc = exp(-phi)
and omega = (i/2pi) lambda dz^dzbar, lambda = d_z d_zbar phi. All functions
are sympy expressions in independent symbols z, zb, so every derivative is
available in closed form and compiled once with ``sympy.lambdify``.
"""
import logging
import re
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np
import sympy as sp

from .base import ComplexArray, ConfigError, GeometryError, RealArray
from .quadrature import build_grid, integrate
from .types import Grid, GridFunction

logger = logging.getLogger(__name__)

Z, ZB = sp.symbols("z zb")
U1, U2, U3 = sp.symbols("u1 u2 u3")

# First spherical harmonics written in the chart.
DICTIONARY = {
    U1: (1 - Z * ZB) / (1 + Z * ZB),
    U2: (Z + ZB) / (1 + Z * ZB),
    U3: -sp.I * (Z - ZB) / (1 + Z * ZB),
}

DEFAULT_EPS_BOUND = 0.2
_EXPR_CHARS = re.compile(r"^[0-9u+\-*/().\s eE]+$")
_GEOMETRY_SPEC = re.compile(
    r"^\s*fs\s*(?:(?P<sign>[+-])\s*(?P<eps>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"\s*\*\s*(?P<psi>.+?))?\s*$"
)


def _closed_form(expr: sp.Expr) -> sp.Expr:
    # one quotient of expanded polynomials; denominators are powers of
    # (1 + z*zb) with positive coefficients
    return sp.cancel(sp.together(expr))


@lru_cache(maxsize=None)
def _compile(expr: sp.Expr) -> Callable:
    return sp.lambdify((Z, ZB), expr, modules="numpy", cse=True)


def _evaluate(expr: sp.Expr, z: ComplexArray) -> ComplexArray:
    z = np.asarray(z, dtype=complex)
    out = _compile(expr)(z, np.conj(z))
    return np.array(np.broadcast_to(np.asarray(out, dtype=complex), z.shape))


@dataclass(frozen=True)
class DictionaryFunction:
    """Closed-form function built from u1, u2, u3 with real coefficients.

    ``expression`` is the canonical sympy string, e.g. ``"u1*u2"``.
    """
    expression: str

    @classmethod
    def parse(cls, text: Union[str, float, int]) -> "DictionaryFunction":
        text = str(text).strip()
        if not text or not _EXPR_CHARS.match(text):
            raise ConfigError(f"Malformed dictionary expression: {text!r}")
        try:
            expr = sp.sympify(text, locals={"u1": U1, "u2": U2, "u3": U3})
        except (sp.SympifyError, SyntaxError, TypeError) as e:
            raise ConfigError(f"Malformed dictionary expression: {text!r}") from e
        unknown = expr.free_symbols - {U1, U2, U3}
        if unknown:
            names = ", ".join(sorted(str(s) for s in unknown))
            raise ConfigError(f"Unknown dictionary ids in {text!r}: {names}")
        expr = sp.nsimplify(expr, rational=True)
        return cls(sp.sstr(sp.expand(expr)))

    @classmethod
    def constant(cls, c: float = 1.0) -> "DictionaryFunction":
        return cls.parse(repr(float(c)))

    @cached_property
    def symbolic(self) -> sp.Expr:
        """Expression in the harmonics u1, u2, u3."""
        return sp.sympify(self.expression, locals={"u1": U1, "u2": U2, "u3": U3})

    @cached_property
    def chart(self) -> sp.Expr:
        """Expression in the chart symbols z, zb."""
        return _closed_form(self.symbolic.subs(DICTIONARY))

    @property
    def is_constant(self) -> bool:
        return not self.symbolic.free_symbols

    @lru_cache(maxsize=None)
    def derivative(self, nz: int = 0, nzb: int = 0) -> sp.Expr:
        expr = self.chart
        if nz:
            expr = sp.diff(expr, Z, nz)
        if nzb:
            expr = sp.diff(expr, ZB, nzb)
        return _closed_form(expr) if (nz or nzb) else expr

    def evaluate(self, z: ComplexArray, nz: int = 0, nzb: int = 0) -> ComplexArray:
        return _evaluate(self.derivative(nz, nzb), z)

    def jet(self, z: ComplexArray) -> Tuple[ComplexArray, ComplexArray, ComplexArray, ComplexArray]:
        """(f, f_z, f_zb, f_zzb) at chart points."""
        return (self.evaluate(z), self.evaluate(z, 1, 0),
                self.evaluate(z, 0, 1), self.evaluate(z, 1, 1))

    def grid_function(self, grid: Grid) -> GridFunction:
        f, fz, fzb, fzzb = self.jet(grid.z)
        return GridFunction(grid, f, dz=fz, dzb=fzb, dzzb=fzzb, label=self.expression)

    def __str__(self):
        return self.expression


@dataclass(frozen=True)
class KahlerStructure:
    """Perturbed Fubini-Study structure phi = log(1+|z|^2) + eps*psi."""
    epsilon: float = 0.0
    psi: Optional[DictionaryFunction] = None
    eps_bound: float = DEFAULT_EPS_BOUND

    n = 1  # complex dimension

    def __post_init__(self):
        if self.psi is None and self.epsilon != 0.0:
            raise GeometryError("A nonzero epsilon needs a perturbation direction psi")
        if abs(self.epsilon) > self.eps_bound:
            raise GeometryError(
                f"epsilon {self.epsilon} exceeds validity bound {self.eps_bound}"
            )
        self._validate_positivity()

    @classmethod
    def fubini_study(cls) -> "KahlerStructure":
        return cls()

    @classmethod
    def parse(cls, spec: str, eps_bound: float = DEFAULT_EPS_BOUND) -> "KahlerStructure":
        """Parse ``fs`` or ``fs+<eps>*<dict-expr>``."""
        match = _GEOMETRY_SPEC.match(spec or "")
        if not match:
            raise ConfigError(f"Malformed geometry spec: {spec!r}")
        if match.group("eps") is None:
            return cls(eps_bound=eps_bound)
        eps = float(match.group("eps"))
        if match.group("sign") == "-":
            eps = -eps
        if abs(eps) > eps_bound:
            raise ConfigError(f"epsilon {eps} exceeds validity bound {eps_bound}")
        psi = DictionaryFunction.parse(match.group("psi"))
        if eps == 0.0:
            return cls(eps_bound=eps_bound)
        try:
            return cls(eps, psi, eps_bound)
        except GeometryError as e:
            raise ConfigError(str(e)) from e

    @property
    def is_fubini_study(self) -> bool:
        return self.psi is None or self.epsilon == 0.0

    @property
    def spec(self) -> str:
        if self.is_fubini_study:
            return "fs"
        sign = "-" if self.epsilon < 0 else "+"
        psi = self.psi.expression
        if any(op in psi for op in "+-"):
            psi = f"({psi})"
        return f"fs{sign}{abs(self.epsilon)!r}*{psi}"

    @cached_property
    def _eps(self) -> sp.Expr:
        return sp.nsimplify(self.epsilon, rational=True)

    @cached_property
    def potential(self) -> sp.Expr:
        phi = sp.log(1 + Z * ZB)
        if not self.is_fubini_study:
            phi = phi + self._eps * self.psi.chart
        return phi

    @cached_property
    def density_expr(self) -> sp.Expr:
        lam = 1 / (1 + Z * ZB) ** 2
        if not self.is_fubini_study:
            lam = lam + self._eps * self.psi.derivative(1, 1)
        return _closed_form(lam)

    @cached_property
    def scalar_curvature_expr(self) -> sp.Expr:
        lam = self.density_expr
        lz, lzb = sp.diff(lam, Z), sp.diff(lam, ZB)
        lzzb = sp.diff(lam, Z, ZB)
        # scal = -(4 pi / lambda) (log lambda)_zzb
        return _closed_form(-4 * sp.pi * (lam * lzzb - lz * lzb) / lam ** 3)

    def laplacian_expr(self, f: sp.Expr) -> sp.Expr:
        return _closed_form(-2 * sp.pi * sp.diff(f, Z, ZB) / self.density_expr)

    def weight_exponent(self, z: ComplexArray) -> RealArray:
        """eps*psi at chart points (zero for Fubini-Study)."""
        if self.is_fubini_study:
            return np.zeros(np.shape(z))
        return (self.epsilon * self.psi.evaluate(z)).real

    def potential_jet(self, z: ComplexArray) -> Tuple[RealArray, ComplexArray, RealArray]:
        z = np.asarray(z, dtype=complex)
        r2 = np.abs(z) ** 2
        phi = np.log1p(r2)
        phi_z = np.conj(z) / (1.0 + r2)
        if not self.is_fubini_study:
            phi = phi + self.weight_exponent(z)
            phi_z = phi_z + self.epsilon * self.psi.evaluate(z, 1, 0)
        return phi, phi_z, self.density(z)

    def density(self, z: ComplexArray) -> RealArray:
        return _evaluate(self.density_expr, z).real

    def density_ratio(self, grid: Grid) -> RealArray:
        """lambda / lambda_FS on the grid nodes."""
        if self.is_fubini_study:
            return np.ones(grid.shape)
        return self.density(grid.z) / grid.fs_density

    def validate(self, grid: Grid) -> None:
        lam = self.density(grid.z)
        if not np.all(lam > 0):
            raise GeometryError(
                f"Kahler density not positive on {grid!r} for {self.spec} "
                f"(min {float(np.min(lam)):.3e})"
            )

    def _validate_positivity(self) -> None:
        if self.is_fubini_study:
            return
        s, _ = np.polynomial.legendre.leggauss(48)
        s = 0.5 * (s + 1.0)
        theta = 2 * np.pi * np.arange(64) / 64
        z = np.sqrt(s / (1 - s))[:, None] * np.exp(1j * theta)[None, :]
        lam = self.density(z) * (1 + np.abs(z) ** 2) ** 2
        if not np.all(lam > 0):
            raise GeometryError(f"Kahler form of {self.spec} is not positive")


def potential_jet(K: KahlerStructure, z: ComplexArray) -> Tuple[RealArray, ComplexArray, RealArray]:
    """(phi, phi_z, phi_zzb) at chart points; phi_zzb is the density lambda."""
    return K.potential_jet(z)


def laplacian(
    K: KahlerStructure,
    f: Union[DictionaryFunction, GridFunction],
    grid: Optional[Grid] = None,
) -> GridFunction:
    """Positive Laplacian Delta f = -2 pi f_zzb / lambda."""
    if isinstance(f, DictionaryFunction):
        if grid is None:
            raise ValueError("A grid is required to sample a dictionary function")
        expr = K.laplacian_expr(f.chart)
        values = _evaluate(expr, grid.z)
        return GridFunction(grid, values, label=f"laplacian({f.expression})")
    f.require_jet()
    lam = K.density(f.grid.z)
    return GridFunction(f.grid, -2 * np.pi * f.dzzb / lam, label=f"laplacian({f.label})")


def bilaplacian(K: KahlerStructure, f: DictionaryFunction, grid: Grid) -> GridFunction:
    """Delta^2 f in closed form."""
    expr = K.laplacian_expr(K.laplacian_expr(f.chart))
    return GridFunction(grid, _evaluate(expr, grid.z), label=f"bilaplacian({f.expression})")


def scalar_curvature(K: KahlerStructure, grid: Grid) -> GridFunction:
    """scal = -(4 pi/lambda) (log lambda)_zzb; identically 8 pi at Fubini-Study."""
    K.validate(grid)
    values = _evaluate(K.scalar_curvature_expr, grid.z).real
    return GridFunction(grid, values.astype(complex), label="scal")


def volume(K: KahlerStructure, grid: Optional[Grid] = None) -> float:
    """Integral of omega over CP^1."""
    grid = grid or build_grid(1, 48, 64)
    ones = GridFunction(grid, np.ones(grid.shape, dtype=complex), label="1")
    return float(integrate(K, ones).real)


def finite_difference_jet(
    func: Callable[[ComplexArray], ComplexArray],
    z: ComplexArray,
    h: float = 1e-4,
) -> Tuple[ComplexArray, ComplexArray, ComplexArray]:
    """Central-difference (f_z, f_zb, f_zzb); a cross-check only."""
    z = np.asarray(z, dtype=complex)
    fx = (func(z + h) - func(z - h)) / (2 * h)
    fy = (func(z + 1j * h) - func(z - 1j * h)) / (2 * h)
    lap = (func(z + h) + func(z - h) + func(z + 1j * h) + func(z - 1j * h) - 4 * func(z)) / h ** 2
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy), 0.25 * lap
