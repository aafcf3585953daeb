"""Tensor-product quadrature adapted to the Fubini-Study measure.

With s = |z|^2/(1+|z|^2) the Fubini-Study area form becomes (1/2pi) ds dtheta,
so Gauss-Legendre in s times the trapezoidal rule in theta integrates every
h^m-weighted pairing of sections at level m exactly.
"""
import logging
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Optional, Union

import numpy as np
import numpy.polynomial.legendre as lege
from joblib import Parallel, delayed

from .base import RealArray
from .types import Grid, GridFunction

if TYPE_CHECKING:
    from .geometry import KahlerStructure

logger = logging.getLogger(__name__)

# radial/azimuthal margin on top of the exactness requirement
NODE_MARGIN = 16
# radial rows per assembly chunk
ROW_CHUNK = 8


def auto_sizes(m: int):
    """Default (Ns, Ntheta) for level m."""
    return 2 * m + NODE_MARGIN, 4 * m + NODE_MARGIN


@lru_cache(maxsize=64)
def build_grid(m: int, ns: Optional[int] = None, ntheta: Optional[int] = None) -> Grid:
    """Build the quadrature grid for level ``m``.

    Args:
        m: Quantization level (>= 1).
        ns: Radial node count, ``None`` for the auto policy 2m+16.
        ntheta: Azimuthal node count, ``None`` for the auto policy 4m+16.

    Returns:
        Grid: immutable grid whose weights sum to one.

    Raises:
        ValueError: If m < 1 or a size is not positive.
    """
    if m < 1:
        raise ValueError(f"Level must be >= 1, got {m}")
    auto_ns, auto_nt = auto_sizes(m)
    ns = auto_ns if ns is None else int(ns)
    ntheta = auto_nt if ntheta is None else int(ntheta)
    if ns <= 0 or ntheta <= 0:
        raise ValueError(f"Grid sizes must be positive, got ns={ns}, ntheta={ntheta}")

    x, w = lege.leggauss(ns)
    s = 0.5 * (x + 1.0)
    theta = 2.0 * np.pi * np.arange(ntheta) / ntheta
    grid = Grid(ns=ns, ntheta=ntheta, s=s, s_weights=0.5 * w, theta=theta)
    logger.debug(f"Built {grid!r} for level {m}")
    return grid


@lru_cache(maxsize=64)
def density_ratio(K: "KahlerStructure", grid: Grid) -> RealArray:
    """lambda/lambda_FS on the nodes of ``grid``."""
    return K.density_ratio(grid)


def weighted_sum(grid: Grid, table: np.ndarray) -> complex:
    """Sum of ``table`` against the grid weights.

    Azimuthal sums first (inner, pairwise), then the radial Gauss-Legendre
    sum; the order is fixed so results are reproducible.
    """
    inner = np.sum(table, axis=1) / grid.ntheta
    return complex(np.sum(grid.s_weights * inner))


def pair_matrix(
    grid: Grid,
    coeff: np.ndarray,
    left: Union[np.ndarray, Callable[[slice], np.ndarray]],
    right: Union[np.ndarray, Callable[[slice], np.ndarray], None] = None,
    workers: int = 1,
) -> np.ndarray:
    """Matrix M[a, b] = sum_n coeff_n left[n, a] conj(right[n, b]).

    ``left``/``right`` are tables of shape (ns, ntheta, k) or callables
    returning the rows of such a table for a radial slice. Radial rows are
    split into fixed chunks of ROW_CHUNK and the chunk partials are added
    in order, so the result does not depend on ``workers``.
    """
    right = left if right is None else right
    chunks = [slice(i, min(i + ROW_CHUNK, grid.ns)) for i in range(0, grid.ns, ROW_CHUNK)]

    def rows(table, sl):
        block = table(sl) if callable(table) else table[sl]
        return block.reshape(-1, block.shape[-1])

    def partial(sl):
        x = rows(left, sl)
        y = x if right is left else rows(right, sl)
        c = coeff[sl].reshape(-1)
        return (x * c[:, None]).T @ np.conj(y)

    if workers == 1:
        parts = [partial(sl) for sl in chunks]
    else:
        parts = Parallel(n_jobs=workers, prefer="threads")(delayed(partial)(sl) for sl in chunks)
    out = parts[0].copy()
    for p in parts[1:]:
        out += p
    logger.debug(f"Assembled {out.shape} pair matrix over {len(chunks)} chunks")
    return out


def integrate(K: "KahlerStructure", f: GridFunction, grid: Optional[Grid] = None) -> complex:
    """Integral of f against omega (the perturbed area form)."""
    if grid is not None:
        f.check_grid(grid)
    return weighted_sum(f.grid, f.values * density_ratio(K, f.grid))


def l2_inner(K: "KahlerStructure", f: GridFunction, g: GridFunction) -> complex:
    """<f, g> = integral of f conj(g) omega."""
    g.check_grid(f.grid)
    return weighted_sum(f.grid, f.values * np.conj(g.values) * density_ratio(K, f.grid))


def constant(grid: Grid, c: complex = 1.0) -> GridFunction:
    """The constant function c with its (zero) jet."""
    zero = np.zeros(grid.shape, dtype=complex)
    return GridFunction(grid, np.full(grid.shape, c, dtype=complex),
                        dz=zero, dzb=zero.copy(), dzzb=zero.copy(), label=repr(c))
