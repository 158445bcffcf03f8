"""Data-generating mechanisms for the simulation study.

Randomness comes from numpy's counter-based Philox generator. Replicate ``r``
of a run seeded with ``seed`` draws from the stream keyed by
``SeedSequence(seed, spawn_key=(r,))``, so replicates can be produced in any
order or in parallel and still be identical.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .basis import CoefVector, Grid, make_basis, make_grid
from .funcdata import CurvePanel, FunctionalSample

__all__ = [
    "KernelFactorizationError",
    "ScenarioConfig",
    "SimulatedDataset",
    "estimation_error",
    "generate_scenario",
    "replicate_rng",
    "sample_brownian",
    "sample_gp_sqexp",
    "sqexp_kernel",
]

DEFAULT_SEED = 20200617
GP_JITTER = 1e-10


class KernelFactorizationError(np.linalg.LinAlgError):
    pass


def replicate_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Independent Philox stream for one replicate of a seeded run."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation scenario.

    ``sigma`` is the variance scale of the squared-exponential measurement
    error kernel and ``l`` its length-scale; ``delta`` multiplies the signal in
    the response and ``sigma_e`` is the response-noise variance. ``sigma_u`` is
    the variance at ``t = 1`` of the Brownian model error in ``X``.
    """

    n: int = 500
    k0: int = 5
    q0: int = 3
    p0: int = 3
    sigma: float = 0.1
    l: float = 0.05
    delta: float = 1.0
    sigma_e: float = 0.1
    replicates: int = 100
    seed: int = DEFAULT_SEED
    grid_size: int = 101
    sigma_u: float = 0.01

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.l <= 0:
            raise ValueError("length-scale l must be positive")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if self.sigma_e < 0 or self.sigma_u < 0:
            raise ValueError("sigma_e and sigma_u must be nonnegative")
        if min(self.k0, self.q0, self.p0) < 1:
            raise ValueError("basis dimensions must be positive")
        if self.grid_size < 3:
            raise ValueError("grid_size must be at least 3")

    @property
    def grid(self) -> Grid:
        return make_grid(self.grid_size)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            if key in values:
                raise ValueError(f"line {lineno}: duplicate config key {key!r}")
            try:
                values[key] = int(raw) if types[key] in ("int", int) else float(raw)
            except ValueError:
                raise ValueError(f"line {lineno}: bad value {raw!r} for {key}") from None
        return cls(**values)

    def save(self, path: Union[str, Path]):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScenarioConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    Y: np.ndarray
    W: FunctionalSample
    Z: FunctionalSample
    X: FunctionalSample
    true_beta: CoefVector
    true_theta: CoefVector

    @property
    def grid(self) -> Grid:
        return self.Z.grid


def sqexp_kernel(points: np.ndarray, sigma: float, l: float) -> np.ndarray:
    diff = points[:, None] - points[None, :]
    return sigma * np.exp(-(diff**2) / (2.0 * l**2))


def sample_gp_sqexp(
    n: int, sigma: float, l: float, grid: Grid, rng: np.random.Generator
) -> CurvePanel:
    """Mean-zero Gaussian paths with covariance ``sigma * exp(-(s-t)^2 / (2 l^2))``.

    Paths are exact on the grid: the kernel matrix (plus a ``1e-10`` diagonal
    jitter) is Cholesky-factorized and applied to standard normal draws.
    """
    if sigma < 0 or l <= 0:
        raise ValueError("need sigma >= 0 and l > 0")
    m = len(grid)
    if sigma == 0:
        return CurvePanel(grid, np.zeros((n, m)))
    kernel = sqexp_kernel(grid.points, sigma, l) + GP_JITTER * np.eye(m)
    try:
        chol = np.linalg.cholesky(kernel)
    except np.linalg.LinAlgError as exc:
        raise KernelFactorizationError(
            f"kernel matrix (sigma={sigma}, l={l}) is not positive definite after jitter"
        ) from exc
    return CurvePanel(grid, rng.standard_normal((n, m)) @ chol.T)


def sample_brownian(n: int, grid: Grid, rng: np.random.Generator) -> CurvePanel:
    """Standard Brownian motion paths started at zero, by cumulated increments."""
    dt = np.diff(grid.points)
    increments = rng.standard_normal((n, dt.size)) * np.sqrt(dt)
    paths = np.zeros((n, len(grid)))
    np.cumsum(increments, axis=1, out=paths[:, 1:])
    return CurvePanel(grid, paths)


def true_theta(cfg: ScenarioConfig, grid: Optional[Grid] = None) -> CoefVector:
    basis = make_basis("monomial", cfg.q0, grid or cfg.grid)
    return CoefVector(basis, np.arange(1, cfg.q0 + 1) / cfg.q0)


def true_beta(cfg: ScenarioConfig, grid: Optional[Grid] = None) -> CoefVector:
    basis = make_basis("fourier", cfg.p0, grid or cfg.grid)
    return CoefVector(basis, 1.0 / np.arange(1, cfg.p0 + 1))


def generate_scenario(
    cfg: ScenarioConfig, rng: Union[np.random.Generator, int, None] = None
) -> SimulatedDataset:
    """Draw one dataset.

    The instrument is a cubic B-spline curve with ``k0`` standard normal
    coefficients, ``X = theta * Z + sqrt(sigma_u) B`` with standard Brownian ``B``, ``W = X + U`` with
    squared-exponential Gaussian ``U``, and
    ``Y = delta * int beta X + e`` with ``e ~ N(0, sigma_e)``.
    An integer ``rng`` selects that replicate's stream of ``cfg.seed``.
    """
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = replicate_rng(cfg.seed, 0 if rng is None else int(rng))
    grid = cfg.grid
    z_basis = make_basis("bspline", cfg.k0, grid)
    theta = true_theta(cfg, grid)
    beta = true_beta(cfg, grid)

    z_coefs = rng.standard_normal((cfg.n, cfg.k0))
    Z = FunctionalSample(z_basis, z_coefs)
    bm = sample_brownian(cfg.n, grid, rng).values
    x_vals = theta.values() * Z.values + np.sqrt(cfg.sigma_u) * bm
    u_vals = sample_gp_sqexp(cfg.n, cfg.sigma, cfg.l, grid, rng).values
    w_vals = x_vals + u_vals
    e = rng.standard_normal(cfg.n) * np.sqrt(cfg.sigma_e)
    Y = cfg.delta * grid.integrate(x_vals * beta.values()) + e

    return SimulatedDataset(
        Y=Y,
        W=FunctionalSample.from_values(w_vals, grid),
        Z=Z,
        X=FunctionalSample.from_values(x_vals, grid),
        true_beta=beta,
        true_theta=theta,
    )


def estimation_error(estimate: CoefVector, truth: CoefVector, grid: Optional[Grid] = None) -> float:
    """Integrated squared difference between two functions on a shared grid."""
    grid = truth.grid if grid is None else grid
    estimate.grid.check_same(grid)
    truth.grid.check_same(grid)
    diff = estimate.values() - truth.values()
    return float(grid.integrate(diff**2))
