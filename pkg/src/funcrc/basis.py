"""Basis systems on [0, 1] and the quadrature that backs every integral.

All functional objects in the package live on a :class:`Grid`: an ordered set
of points in [0, 1] together with normalized quadrature weights, so that
``sum(w * f)`` approximates the integral of ``f`` over the unit interval.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg
from scipy.interpolate import BSpline

__all__ = [
    "BasisKind",
    "BasisSystem",
    "CoefVector",
    "DegenerateBasisError",
    "Grid",
    "GridMismatchError",
    "QuadratureRule",
    "default_grid",
    "expand",
    "inner_product",
    "make_basis",
    "make_grid",
]

DEFAULT_GRID_SIZE = 101
DEFAULT_SPLINE_ORDER = 4


class GridMismatchError(ValueError):
    """Two functional objects were defined on different grids."""


class DegenerateBasisError(np.linalg.LinAlgError):
    """Gram or normal-equations matrix is singular for the requested basis."""


class QuadratureRule(str, enum.Enum):
    TRAPEZOID = "trapezoid"
    SIMPSON = "simpson"


class BasisKind(str, enum.Enum):
    FOURIER = "fourier"
    BSPLINE = "bspline"
    MONOMIAL = "monomial"
    EMPIRICAL = "empirical"


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered evaluation points on [0, 1] with quadrature weights summing to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        wts = np.ascontiguousarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.shape != wts.shape:
            raise ValueError("points and weights must be 1-d arrays of equal length")
        if pts.size < 2 or np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if abs(pts[0]) > 1e-12 or abs(pts[-1] - 1.0) > 1e-12:
            raise ValueError("grid must start at 0 and end at 1")
        if np.any(wts <= 0) or abs(wts.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        pts.flags.writeable = False
        wts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.points.tobytes(), self.weights.tobytes()))

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate grid samples over [0, 1] along the last axis."""
        return np.asarray(values) @ self.weights

    def check_same(self, other: "Grid"):
        if self != other:
            raise GridMismatchError("objects are defined on different grids")


def make_grid(m: int = DEFAULT_GRID_SIZE, rule: Union[str, QuadratureRule] = "trapezoid") -> Grid:
    """Uniform grid of ``m`` points on [0, 1] with composite quadrature weights.

    Parameters
    ----------
    m : int
        Number of points, at least 3. Must be odd for Simpson's rule.
    rule : {"trapezoid", "simpson"}
        Composite quadrature rule.
    """
    rule = QuadratureRule(rule)
    if m < 3:
        raise ValueError("a grid needs at least 3 points")
    points = np.linspace(0.0, 1.0, m)
    if rule is QuadratureRule.TRAPEZOID:
        weights = np.ones(m)
        weights[[0, -1]] = 0.5
    else:
        if m % 2 == 0:
            raise ValueError("Simpson's rule needs an odd number of points")
        weights = np.ones(m)
        weights[1:-1:2] = 4.0
        weights[2:-1:2] = 2.0
    weights = weights / weights.sum()
    return Grid(points, weights)


_DEFAULT_GRID: Optional[Grid] = None


def default_grid() -> Grid:
    """The package-wide 101-point trapezoid grid."""
    global _DEFAULT_GRID
    if _DEFAULT_GRID is None:
        _DEFAULT_GRID = make_grid(DEFAULT_GRID_SIZE)
    return _DEFAULT_GRID


def _fourier(t, size, deriv=0):
    out = np.empty((size, t.size))
    out[0] = 1.0 if deriv == 0 else 0.0
    for j in range(1, size):
        freq = 2.0 * np.pi * ((j + 1) // 2)
        scale = np.sqrt(2.0) * freq**deriv
        # d/dt cycles sin -> cos -> -sin -> -cos
        phase = (0.0 if j % 2 == 1 else np.pi / 2) + deriv * np.pi / 2
        out[j] = scale * np.sin(freq * t + phase)
    return out


def _monomial(t, size, deriv=0):
    out = np.zeros((size, t.size))
    for j in range(deriv, size):
        coef = np.prod(np.arange(j - deriv + 1, j + 1, dtype=float))
        out[j] = coef * t ** (j - deriv)
    return out


def _bspline_knots(size, order):
    n_interior = size - order
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    return np.concatenate([np.zeros(order), interior, np.ones(order)])


def _bspline(t, size, order, knots, deriv=0):
    if np.any((t < 0.0) | (t > 1.0)):
        raise ValueError("B-splines are only defined on [0, 1]")
    out = np.empty((size, t.size))
    for j in range(size):
        c = np.zeros(size)
        c[j] = 1.0
        # closed right end: extrapolation only ever touches t == 1
        out[j] = BSpline(knots, c, order - 1, extrapolate=True)(t, nu=deriv)
    return out


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """A finite family of functions on [0, 1], bound to a grid.

    ``eval`` holds the basis values as a ``size x len(grid)`` matrix. Analytic
    kinds (Fourier, B-spline, monomial) can also be evaluated off-grid and
    differentiated; empirical bases are only known on their grid.
    """

    kind: BasisKind
    size: int
    grid: Grid
    eval: np.ndarray
    order: Optional[int] = None
    knots: Optional[np.ndarray] = None
    _gram: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        ev = np.asarray(self.eval, dtype=float)
        if ev.shape != (self.size, len(self.grid)):
            raise ValueError(f"eval must have shape ({self.size}, {len(self.grid)})")
        if not np.all(np.isfinite(ev)):
            raise ValueError("basis values must be finite")
        ev.flags.writeable = False
        object.__setattr__(self, "eval", ev)

    @classmethod
    def empirical(cls, values: np.ndarray, grid: Grid) -> "BasisSystem":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(BasisKind.EMPIRICAL, values.shape[0], grid, values.copy())

    @classmethod
    def nodal(cls, grid: Grid) -> "BasisSystem":
        """Identity basis: coefficients are the grid values themselves."""
        return cls.empirical(np.eye(len(grid)), grid)

    def evaluate(self, t, deriv: int = 0) -> np.ndarray:
        """Evaluate the basis (or a derivative) at arbitrary points in [0, 1]."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind is BasisKind.FOURIER:
            return _fourier(t, self.size, deriv)
        if self.kind is BasisKind.MONOMIAL:
            return _monomial(t, self.size, deriv)
        if self.kind is BasisKind.BSPLINE:
            return _bspline(t, self.size, self.order, self.knots, deriv)
        if deriv == 0 and t.shape == self.grid.points.shape and np.array_equal(t, self.grid.points):
            return np.array(self.eval)
        raise ValueError("empirical bases can only be evaluated on their own grid")

    def on(self, grid: Grid) -> "BasisSystem":
        """The same analytic basis re-bound to another grid."""
        if grid == self.grid:
            return self
        if self.kind is BasisKind.EMPIRICAL:
            raise ValueError("empirical bases cannot be moved to another grid")
        return BasisSystem(self.kind, self.size, grid, self.evaluate(grid.points), self.order, self.knots)

    def gram(self) -> np.ndarray:
        """Quadrature Gram matrix of inner products between basis functions."""
        if self._gram is None:
            g = (self.eval * self.grid.weights) @ self.eval.T
            object.__setattr__(self, "_gram", 0.5 * (g + g.T))
        return self._gram

    def penalty(self, deriv: int = 2) -> np.ndarray:
        """Roughness penalty matrix, the integral of products of ``deriv``-th derivatives."""
        d = self.evaluate(self.grid.points, deriv=deriv)
        r = (d * self.grid.weights) @ d.T
        return 0.5 * (r + r.T)

    @property
    def is_orthonormal(self) -> bool:
        return self.kind is BasisKind.FOURIER

    def same_as(self, other: "BasisSystem") -> bool:
        return (
            self is other
            or (
                self.kind is other.kind
                and self.size == other.size
                and self.grid == other.grid
                and np.array_equal(self.eval, other.eval)
            )
        )


def make_basis(
    kind: Union[str, BasisKind],
    size: int,
    grid: Optional[Grid] = None,
    order: int = DEFAULT_SPLINE_ORDER,
) -> BasisSystem:
    """Build a Fourier, B-spline or monomial basis evaluated on ``grid``.

    The Fourier system is ``1, sqrt(2) sin(2 pi t), sqrt(2) cos(2 pi t),
    sqrt(2) sin(4 pi t), ...`` and is orthonormal on [0, 1]. B-splines of the
    given ``order`` (4 = cubic) use equispaced interior knots.
    """
    kind = BasisKind(kind)
    grid = default_grid() if grid is None else grid
    if size < 1:
        raise ValueError("basis size must be positive")
    if kind is BasisKind.EMPIRICAL:
        raise ValueError("empirical bases are built from data, use BasisSystem.empirical")
    if kind is BasisKind.BSPLINE:
        if order < 1 or size < order:
            raise ValueError(f"a B-spline basis of order {order} needs at least {order} functions")
        knots = _bspline_knots(size, order)
        ev = _bspline(grid.points, size, order, knots)
        return BasisSystem(kind, size, grid, ev, order, knots)
    if kind is BasisKind.FOURIER:
        return BasisSystem(kind, size, grid, _fourier(grid.points, size))
    return BasisSystem(kind, size, grid, _monomial(grid.points, size))


@dataclass(frozen=True, eq=False)
class CoefVector:
    """Coefficients of a single function in a basis."""

    basis: BasisSystem
    coefs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefs, dtype=float).reshape(-1)
        if c.size != self.basis.size:
            raise ValueError(f"expected {self.basis.size} coefficients, got {c.size}")
        object.__setattr__(self, "coefs", c)

    @property
    def grid(self) -> Grid:
        return self.basis.grid

    def values(self) -> np.ndarray:
        """The function sampled on the basis grid."""
        return self.coefs @ self.basis.eval

    def __call__(self, t) -> np.ndarray:
        return self.coefs @ self.basis.evaluate(t)


FunctionLike = Union[CoefVector, np.ndarray]


def _as_grid_values(f: FunctionLike, grid: Grid) -> np.ndarray:
    if isinstance(f, CoefVector):
        f.grid.check_same(grid)
        return f.values()
    arr = np.asarray(f, dtype=float)
    if arr.shape[-1] != len(grid):
        raise GridMismatchError(f"samples have length {arr.shape[-1]}, grid has {len(grid)} points")
    return arr


def inner_product(f: FunctionLike, g: FunctionLike, grid: Optional[Grid] = None) -> float:
    """Quadrature approximation of the L2 inner product on [0, 1]."""
    if grid is None:
        for obj in (f, g):
            if isinstance(obj, CoefVector):
                grid = obj.grid
                break
        else:
            raise ValueError("a grid is required for raw samples")
    fv = _as_grid_values(f, grid)
    gv = _as_grid_values(g, grid)
    return float(np.sum(grid.weights * fv * gv))


def project_coefs(samples: np.ndarray, basis: BasisSystem) -> np.ndarray:
    """Least-squares coefficients of one or many sampled functions in ``basis``.

    Rows of ``samples`` are functions on ``basis.grid``. Orthonormal bases use
    plain inner products; otherwise the quadrature Gram system is solved by
    Cholesky factorization.
    """
    samples = np.asarray(samples, dtype=float)
    rhs = (samples * basis.grid.weights) @ basis.eval.T
    if basis.is_orthonormal:
        return rhs
    try:
        factor = scipy.linalg.cho_factor(basis.gram())
    except np.linalg.LinAlgError as exc:
        raise DegenerateBasisError("Gram matrix is not positive definite on this grid") from exc
    return scipy.linalg.cho_solve(factor, rhs.T).T


def expand(samples: FunctionLike, basis: BasisSystem, grid: Optional[Grid] = None) -> CoefVector:
    """Expand a grid-sampled function in ``basis``."""
    grid = basis.grid if grid is None else grid
    basis.grid.check_same(grid)
    values = _as_grid_values(samples, grid)
    if values.ndim != 1:
        raise ValueError("expand takes a single function; use project_coefs for panels")
    return CoefVector(basis, project_coefs(values, basis))
