"""Curve containers, penalized smoothing, mean estimation and functional PCA."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .basis import (
    BasisSystem,
    CoefVector,
    DegenerateBasisError,
    Grid,
    default_grid,
)

__all__ = [
    "CurvePanel",
    "Fpca",
    "FunctionalSample",
    "fpca",
    "gcv_lambda",
    "mean_function",
    "smooth_panel",
]

#: candidate smoothing parameters searched by generalized cross-validation
LAMBDA_LADDER = np.logspace(-8, 2, 21)
#: eigenvalues below this fraction of the largest are treated as zero rank
RANK_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class CurvePanel:
    """Discrete observations of ``n`` curves on a common grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[0] < 1 or v.shape[1] != len(self.grid):
            raise ValueError(f"values must have shape (n, {len(self.grid)}) with n >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """``n`` curves stored as coefficients in a shared basis.

    Curves that are only known on the grid use a nodal basis, in which case
    the coefficients are the grid values.
    """

    basis: BasisSystem
    coefs: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coefs, dtype=float))
        if c.shape[1] != self.basis.size:
            raise ValueError(f"coefficient matrix needs {self.basis.size} columns, got {c.shape[1]}")
        object.__setattr__(self, "coefs", c)

    @classmethod
    def from_values(cls, values: np.ndarray, grid: Optional[Grid] = None) -> "FunctionalSample":
        grid = default_grid() if grid is None else grid
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(BasisSystem.nodal(grid), values)

    @property
    def n(self) -> int:
        return self.coefs.shape[0]

    @property
    def grid(self) -> Grid:
        return self.basis.grid

    @property
    def values(self) -> np.ndarray:
        """Curves evaluated on the grid, ``n x len(grid)``."""
        cached = self.__dict__.get("_values")
        if cached is None:
            cached = self.coefs @ self.basis.eval
            cached.flags.writeable = False
            object.__setattr__(self, "_values", cached)
        return cached

    def subset(self, idx) -> "FunctionalSample":
        return FunctionalSample(self.basis, self.coefs[idx])

    def curve(self, i: int) -> CoefVector:
        return CoefVector(self.basis, self.coefs[i])

    def inner_products(self, funcs: np.ndarray) -> np.ndarray:
        """Matrix of quadrature inner products with the rows of ``funcs``."""
        funcs = np.atleast_2d(funcs)
        return (self.values * self.grid.weights) @ funcs.T


def _smoother_system(design: np.ndarray, penalty: np.ndarray, lam: float):
    lhs = design.T @ design + lam * penalty
    try:
        factor = scipy.linalg.cho_factor(lhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateBasisError(
            f"penalized normal equations are singular at lambda={lam:g}"
        ) from exc
    return factor


def gcv_lambda(
    raw: CurvePanel, basis: BasisSystem, ladder: Sequence[float] = LAMBDA_LADDER
) -> float:
    """Smoothing parameter minimizing the pooled generalized cross-validation score."""
    design = basis.evaluate(raw.grid.points).T
    penalty = basis.penalty(2)
    m = design.shape[0]
    best, best_score = None, np.inf
    for lam in ladder:
        try:
            factor = _smoother_system(design, penalty, lam)
        except DegenerateBasisError:
            continue
        coefs = scipy.linalg.cho_solve(factor, design.T @ raw.values.T)
        rss = np.sum((raw.values.T - design @ coefs) ** 2)
        df = np.trace(scipy.linalg.cho_solve(factor, design.T @ design))
        if df >= m - 1e-8:
            continue
        score = m * rss / (raw.n * (m - df) ** 2)
        if score < best_score:
            best, best_score = float(lam), score
    if best is None:
        raise DegenerateBasisError("no smoothing parameter on the ladder gives a valid fit")
    return best


def smooth_panel(
    raw: CurvePanel, basis: BasisSystem, lam: Optional[float] = None
) -> FunctionalSample:
    """Penalized least-squares fit of every curve in ``raw`` to ``basis``.

    Each curve minimizes the residual sum of squares at the raw observation
    points plus ``lam`` times the integrated squared second derivative. The
    penalty is computed by quadrature on the basis' own (working) grid. When
    ``lam`` is None it is chosen by :func:`gcv_lambda`.
    """
    if len(raw.grid) < basis.size and not lam:
        raise DegenerateBasisError(
            f"{len(raw.grid)} observation points cannot determine {basis.size} coefficients"
        )
    if lam is None:
        lam = gcv_lambda(raw, basis)
    if lam < 0:
        raise ValueError("smoothing parameter must be nonnegative")
    design = basis.evaluate(raw.grid.points).T
    factor = _smoother_system(design, basis.penalty(2) if lam else 0.0, lam)
    coefs = scipy.linalg.cho_solve(factor, design.T @ raw.values.T).T
    return FunctionalSample(basis, coefs)


def mean_function(fs: FunctionalSample) -> CoefVector:
    """Pointwise sample mean, computed on the coefficients."""
    if fs.n < 1:
        raise ValueError("need at least one curve")
    return CoefVector(fs.basis, fs.coefs.mean(axis=0))


@dataclass(frozen=True, eq=False)
class Fpca:
    """Result of a functional principal component analysis.

    Attributes
    ----------
    mean : CoefVector
        Sample mean in the input basis.
    eigenfunctions : BasisSystem
        Empirical basis of the retained components, orthonormal under the grid
        quadrature.
    eigenvalues : ndarray
        Retained eigenvalues, descending.
    scores : ndarray
        ``n x k`` centered scores.
    all_eigenvalues : ndarray
        Full clamped spectrum, used for variance accounting.
    """

    mean: CoefVector
    eigenfunctions: BasisSystem
    eigenvalues: np.ndarray
    scores: np.ndarray
    all_eigenvalues: np.ndarray

    @property
    def k(self) -> int:
        return self.eigenvalues.size

    @property
    def rank(self) -> int:
        return numerical_rank(self.all_eigenvalues)

    def explained(self) -> np.ndarray:
        """Cumulative fraction of variance explained by the first j components."""
        total = self.all_eigenvalues.sum()
        return np.cumsum(self.eigenvalues) / total if total > 0 else np.ones(self.k)

    def truncate(self, k: int) -> "Fpca":
        if not 1 <= k <= self.k:
            raise ValueError(f"cannot keep {k} of {self.k} components")
        ef = BasisSystem.empirical(self.eigenfunctions.eval[:k], self.eigenfunctions.grid)
        return Fpca(self.mean, ef, self.eigenvalues[:k], self.scores[:, :k], self.all_eigenvalues)

    def reconstruct(self) -> np.ndarray:
        """Grid values of the curves rebuilt from the retained components."""
        return self.mean.values() + self.scores @ self.eigenfunctions.eval


def numerical_rank(eigenvalues: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if eigenvalues.size == 0 or eigenvalues[0] <= 0:
        return 0
    return int(np.sum(eigenvalues > rtol * eigenvalues[0]))


def _grid_covariance_eigen(fs: FunctionalSample):
    w = fs.grid.weights
    sw = np.sqrt(w)
    centered = fs.values - fs.values.mean(axis=0)
    scaled = centered * sw
    cov = scaled.T @ scaled / (fs.n - 1)
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    # deterministic sign: the largest-magnitude entry of each eigenvector is positive
    signs = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(evecs.shape[1])])
    signs[signs == 0] = 1.0
    evecs = evecs * signs
    return evals, (evecs / sw[:, None]).T, centered


def fpca(fs: FunctionalSample, k: Union[int, float] = 0.99, clip: bool = False) -> Fpca:
    """Eigendecomposition of the sample covariance operator.

    The covariance is discretized on the grid and symmetrized with the square
    roots of the quadrature weights, so the basis the curves are stored in does
    not matter. ``k`` is either a number of components or, when a float in
    (0, 1), the smallest fraction of total variance to explain. With
    ``clip=True`` a ``k`` above the available rank is lowered instead of
    rejected.
    """
    if fs.n < 2:
        raise ValueError("functional PCA needs at least two curves")
    evals, efuncs, centered = _grid_covariance_eigen(fs)
    rank = numerical_rank(evals)
    limit = min(fs.n - 1, fs.basis.size, rank)
    if isinstance(k, (float, np.floating)) and 0 < k < 1:
        if rank == 0:
            raise ValueError("sample has zero variance")
        frac = np.cumsum(evals) / evals.sum()
        k = int(np.searchsorted(frac, k - 1e-12) + 1)
        k = min(k, limit)
    k = int(k)
    if clip:
        k = min(k, limit)
    if k < 1:
        raise ValueError("number of components must be positive")
    if k > limit:
        raise ValueError(f"requested {k} components but only {limit} are available")
    basis = BasisSystem.empirical(efuncs[:k], fs.grid)
    scores = (centered * fs.grid.weights) @ efuncs[:k].T
    return Fpca(mean_function(fs), basis, evals[:k], scores, evals)
