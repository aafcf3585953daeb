"""Core data containers for qlaplab."""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .base import (
    ComplexArray, GridMismatchError, LevelMismatchError, MissingJetError,
    RealArray,
)


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor-product quadrature grid on the affine chart of CP^1.

    Radial nodes are Gauss-Legendre nodes in s = |z|^2/(1+|z|^2) on (0, 1),
    azimuthal nodes are equispaced. Under this substitution the
    Fubini-Study measure is (1/2pi) ds dtheta, so ``weights`` sum to one.
    """
    ns: int
    ntheta: int
    s: RealArray
    s_weights: RealArray
    theta: RealArray

    @property
    def key(self) -> Tuple[int, int]:
        return (self.ns, self.ntheta)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ns, self.ntheta)

    @property
    def size(self) -> int:
        return self.ns * self.ntheta

    @property
    def weights(self) -> RealArray:
        return np.repeat(self.s_weights[:, None] / self.ntheta, self.ntheta, axis=1)

    @property
    def r2(self) -> RealArray:
        """|z|^2 at every node."""
        return np.repeat((self.s / (1.0 - self.s))[:, None], self.ntheta, axis=1)

    @property
    def z(self) -> ComplexArray:
        r = np.sqrt(self.s / (1.0 - self.s))
        return r[:, None] * np.exp(1j * self.theta)[None, :]

    @property
    def fs_density(self) -> RealArray:
        """Fubini-Study density (1+|z|^2)^-2 = (1-s)^2."""
        return np.repeat(((1.0 - self.s) ** 2)[:, None], self.ntheta, axis=1)

    def same_as(self, other: "Grid") -> bool:
        return self.key == other.key

    def to_dict(self) -> Dict[str, Any]:
        return {"ns": self.ns, "ntheta": self.ntheta, "nodes": self.size}

    def __repr__(self):
        return f"Grid(ns={self.ns}, ntheta={self.ntheta})"


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples on a grid, optionally with the jet (d_z, d_zbar, d_z d_zbar)."""
    grid: Grid
    values: ComplexArray
    dz: Optional[ComplexArray] = None
    dzb: Optional[ComplexArray] = None
    dzzb: Optional[ComplexArray] = None
    label: str = ""

    def __post_init__(self):
        for name in ("values", "dz", "dzb", "dzzb"):
            table = getattr(self, name)
            if table is not None and np.shape(table) != self.grid.shape:
                raise GridMismatchError(
                    f"{name} has shape {np.shape(table)}, grid expects {self.grid.shape}"
                )

    @property
    def has_jet(self) -> bool:
        return self.dz is not None and self.dzb is not None and self.dzzb is not None

    def require_jet(self) -> None:
        if not self.has_jet:
            raise MissingJetError(
                f"Grid function '{self.label or 'unnamed'}' carries no derivative data"
            )

    def check_grid(self, grid: Grid) -> None:
        if not self.grid.same_as(grid):
            raise GridMismatchError(f"{self.grid!r} does not match {grid!r}")

    def conj(self) -> "GridFunction":
        """Complex conjugate; d_z of conj(f) is conj(d_zbar f)."""
        if not self.has_jet:
            return GridFunction(self.grid, np.conj(self.values), label=self.label)
        return GridFunction(
            self.grid,
            np.conj(self.values),
            dz=np.conj(self.dzb),
            dzb=np.conj(self.dz),
            dzzb=np.conj(self.dzzb),
            label=self.label,
        )

    def scaled(self, c: complex) -> "GridFunction":
        jet = {}
        if self.has_jet:
            jet = {"dz": c * self.dz, "dzb": c * self.dzb, "dzzb": c * self.dzzb}
        return GridFunction(self.grid, c * self.values, label=self.label, **jet)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def is_real(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, self.sup_norm())
        return float(np.max(np.abs(self.values.imag))) <= tol * scale


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Gram matrix G_jk = b_m(z^j, z^k) of the monomial basis at level m."""
    m: int
    entries: ComplexArray

    @property
    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def to_dict(self) -> Dict[str, Any]:
        return {"m": self.m, "size": int(self.entries.shape[0]),
                "hermitian_defect": self.hermitian_defect}


@dataclass(frozen=True, eq=False)
class SectionTable:
    """Orthonormal sections of H_m on a grid.

    ``values`` and ``dvalues`` carry the Fubini-Study half weight
    (1+|z|^2)^(-m/2) so that large levels stay within floating range;
    ``weight`` holds the remaining factor exp(-m eps psi). Consequently
    h^m(s_a, s_b)(z) = values[.., a] * conj(values[.., b]) * weight.
    """
    m: int
    grid: Grid
    basis_change: ComplexArray
    values: ComplexArray
    dvalues: ComplexArray
    weight: RealArray

    @property
    def dim(self) -> int:
        return self.m + 1

    def flat_values(self) -> ComplexArray:
        return self.values.reshape(-1, self.dim)

    def flat_dvalues(self) -> ComplexArray:
        return self.dvalues.reshape(-1, self.dim)


@dataclass(frozen=True, eq=False)
class VmOperator:
    """Element of V_m = End(H_m) in the orthonormal basis {s_alpha}."""
    matrix: ComplexArray
    m: int

    def __post_init__(self):
        n = self.m + 1
        if np.shape(self.matrix) != (n, n):
            raise LevelMismatchError(
                f"Matrix of shape {np.shape(self.matrix)} is not an operator at level {self.m}"
            )

    @property
    def dim(self) -> int:
        return self.m + 1

    def adjoint(self) -> "VmOperator":
        return VmOperator(self.matrix.conj().T.copy(), self.m)

    def flatten(self) -> ComplexArray:
        """Coordinates in the E_ab basis, row-major (index a*(m+1)+b)."""
        return self.matrix.reshape(-1)

    def norm(self) -> float:
        """Operator (spectral) norm."""
        return float(np.linalg.norm(self.matrix, 2))

    def require_level(self, m: int) -> None:
        if self.m != m:
            raise LevelMismatchError(f"Operator at level {self.m} used at level {m}")

    @classmethod
    def identity(cls, m: int) -> "VmOperator":
        return cls(np.eye(m + 1, dtype=complex), m)

    @classmethod
    def from_flat(cls, vec: ComplexArray, m: int) -> "VmOperator":
        return cls(np.asarray(vec, dtype=complex).reshape(m + 1, m + 1), m)

    @classmethod
    def random(cls, m: int, rng: np.random.Generator, hermitian: bool = False) -> "VmOperator":
        n = m + 1
        mat = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        if hermitian:
            mat = 0.5 * (mat + mat.conj().T)
        return cls(mat, m)


@dataclass(frozen=True, eq=False)
class InducedMetric:
    """Density of omega_m = m omega + (i/2pi) ddbar log rho_m in the chart."""
    m: int
    grid: Grid
    density: RealArray
    ratio_to_omega: RealArray
    ratio_to_rho_omega: RealArray

    def total_mass(self) -> float:
        """Integral of omega_m."""
        inner = np.sum(self.density / self.grid.fs_density, axis=1) / self.grid.ntheta
        return float(np.sum(self.grid.s_weights * inner))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Real tangent vector field X = a d_z + b d_zbar on the grid.

    ``metric`` is the induced density lambda_m; the Hermitian pairing is
    g_m(X, Y) = lambda_m/(4 pi) (a_X conj(a_Y) + b_X conj(b_Y)).
    """
    grid: Grid
    dz: ComplexArray
    dzb: ComplexArray
    metric: RealArray

    def pairing(self, other: "VectorField") -> ComplexArray:
        return self.metric / (4.0 * np.pi) * (
            self.dz * np.conj(other.dz) + self.dzb * np.conj(other.dzb)
        )


@dataclass(frozen=True, eq=False)
class QlapDense:
    """Dense matrix of Delta_m on V_m flattened in the E_ab basis."""
    matrix: ComplexArray
    m: int

    @property
    def hermitian_defect(self) -> float:
        scale = max(float(np.max(np.abs(self.matrix))), 1e-300)
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) / scale

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def apply(self, A) -> "VmOperator":
        A.require_level(self.m)
        return VmOperator.from_flat(self.matrix @ A.flatten(), self.m)


@dataclass
class MSeries:
    """An m-indexed family of grid functions on a common evaluation grid."""
    label: str
    grid: Grid
    m_values: List[int] = field(default_factory=list)
    samples: List[GridFunction] = field(default_factory=list)

    def add(self, m: int, sample: GridFunction) -> None:
        sample.check_grid(self.grid)
        if self.m_values and m <= self.m_values[-1]:
            raise ValueError(f"Levels must increase, got {m} after {self.m_values[-1]}")
        self.m_values.append(int(m))
        self.samples.append(sample)

    def stacked(self) -> ComplexArray:
        """Samples as an array of shape (levels, nodes)."""
        return np.stack([s.values.reshape(-1) for s in self.samples])

    def scaled(self, c: complex) -> "MSeries":
        return MSeries(self.label, self.grid, list(self.m_values),
                       [s.scaled(c) for s in self.samples])


@dataclass(frozen=True, eq=False)
class CoefficientFit:
    """Per-node least-squares fit of an MSeries against powers of m."""
    label: str
    powers: Tuple[float, ...]
    coefficients: Tuple[GridFunction, ...]
    residual: RealArray
    sup_residual: float
    condition: float
    truncation_levels: Tuple[int, ...] = ()
    truncation_errors: Tuple[float, ...] = ()
    observed_slope: Optional[float] = None
    predicted_slope: Optional[float] = None
    holdout_residual: Optional[float] = None

    def coefficient(self, power: float) -> GridFunction:
        return self.coefficients[self.powers.index(power)]

    @property
    def order_ok(self) -> bool:
        if self.observed_slope is None:
            # truncation error below the exactness floor at every level
            return True
        return abs(self.observed_slope - self.predicted_slope) <= 0.4

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "powers": list(self.powers),
            "sup_residual": self.sup_residual,
            "condition": self.condition,
            "truncation_levels": list(self.truncation_levels),
            "truncation_errors": list(self.truncation_errors),
            "observed_slope": self.observed_slope,
            "predicted_slope": self.predicted_slope,
            "holdout_residual": self.holdout_residual,
            "order_ok": self.order_ok,
        }


@dataclass(frozen=True, eq=False)
class ExpansionCheck:
    """A fit together with the closed-form references of its leading terms."""
    fit: CoefficientFit
    references: Tuple[GridFunction, ...]
    errors: Tuple[float, ...]
    tolerances: Tuple[float, ...] = ()

    @property
    def success(self) -> bool:
        if not self.tolerances:
            return True
        return all(e <= t for e, t in zip(self.errors, self.tolerances)) and self.fit.order_ok

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fit": self.fit.to_dict(),
            "errors": list(self.errors),
            "tolerances": list(self.tolerances),
            "success": self.success,
        }