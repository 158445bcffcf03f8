"""Step 2: scalar-on-function regression on the calibrated regressors.

The coefficient function is expanded in the leading eigenfunctions of the
calibrated regressors' covariance, the design row for subject ``i`` is
``(1, <V_i, psi_1>, ..., <V_i, psi_p>)``, and the coefficients come from
ordinary least squares. The naive estimator ignores measurement error and
regresses on Fourier coefficients of the observed proxy instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .basis import BasisSystem, CoefVector, make_basis
from .calibrate import CVResult, IllConditionedError, MAX_CONDITION, kfold_indices, pick_best
from .funcdata import FunctionalSample, fpca

__all__ = [
    "DEFAULT_P_CANDIDATES",
    "RegressionFit",
    "cross_validate_p",
    "fit_calibrated",
    "fit_naive",
    "predict",
]

DEFAULT_P_CANDIDATES = tuple(range(2, 11))
DEFAULT_VARIANCE_THRESHOLD = 0.99


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """Fitted scalar-on-function regression.

    ``gamma_hat`` is the scaled design cross-product
    ``sum_i D_i D_i' / (n var(Y))`` where ``D`` (``design_scores``) carries a
    leading column of ones. ``method`` is ``"calibrated"`` or ``"naive"``.
    """

    beta0: float
    beta_basis: BasisSystem
    beta_coefs: CoefVector
    p: int
    gamma_hat: np.ndarray
    design_scores: np.ndarray
    y_var: float
    residuals: np.ndarray
    method: str = "calibrated"

    @property
    def n(self) -> int:
        return self.design_scores.shape[0]

    @property
    def coef_vector(self) -> np.ndarray:
        """All ``p + 1`` coefficients, intercept first."""
        return np.concatenate([[self.beta0], self.beta_coefs.coefs])

    def beta_values(self) -> np.ndarray:
        return self.beta_coefs.values()

    def scores_for(self, curves: FunctionalSample) -> np.ndarray:
        curves.grid.check_same(self.beta_basis.grid)
        return curves.inner_products(self.beta_basis.eval)


def _least_squares(y: np.ndarray, design: np.ndarray, what: str):
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 0 or (sv[0] / sv[-1]) ** 2 > MAX_CONDITION:
        raise IllConditionedError(f"{what} design matrix is singular or ill-conditioned")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def _assemble(Y, design, basis, p, method) -> RegressionFit:
    coef = _least_squares(Y, design, method)
    n = Y.size
    y_var = float(np.var(Y, ddof=1)) if n > 1 else 0.0
    cross = design.T @ design
    cross = 0.5 * (cross + cross.T)
    gamma = cross / (n * y_var) if y_var > 0 else np.full_like(cross, np.nan)
    resid = Y - design @ coef
    return RegressionFit(
        beta0=float(coef[0]),
        beta_basis=basis,
        beta_coefs=CoefVector(basis, coef[1:]),
        p=p,
        gamma_hat=gamma,
        design_scores=design,
        y_var=y_var,
        residuals=resid,
        method=method,
    )


def _check_response(Y, n):
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if Y.size != n:
        raise ValueError(f"response has {Y.size} entries for {n} curves")
    if not np.all(np.isfinite(Y)):
        raise ValueError("response contains non-finite values")
    return Y


def fit_calibrated(
    Y: np.ndarray,
    vhat: FunctionalSample,
    p: Union[int, float] = DEFAULT_VARIANCE_THRESHOLD,
) -> RegressionFit:
    """Regress ``Y`` on FPCA scores of the calibrated regressors.

    ``p`` is a number of components or a variance fraction in (0, 1).
    """
    Y = _check_response(Y, vhat.n)
    pca = fpca(vhat, p)
    if pca.k + 1 > vhat.n:
        raise ValueError("need p + 1 <= n")
    basis = pca.eigenfunctions
    design = np.column_stack([np.ones(vhat.n), vhat.inner_products(basis.eval)])
    return _assemble(Y, design, basis, pca.k, "calibrated")


def fourier_scores(W: FunctionalSample, p: int) -> tuple:
    basis = make_basis("fourier", p, W.grid)
    return basis, W.inner_products(basis.eval)


def fit_naive(Y: np.ndarray, W: FunctionalSample, p: int) -> RegressionFit:
    """Least squares of ``Y`` on an intercept and the first ``p`` Fourier coefficients of ``W``."""
    Y = _check_response(Y, W.n)
    if p < 1 or p + 1 > W.n:
        raise ValueError("need 1 <= p and p + 1 <= n")
    basis, scores = fourier_scores(W, int(p))
    design = np.column_stack([np.ones(W.n), scores])
    return _assemble(Y, design, basis, int(p), "naive")


def predict(fit: RegressionFit, curves: FunctionalSample) -> np.ndarray:
    """Predicted responses ``beta0 + sum_j beta_j <V, psi_j>`` for new curves."""
    return fit.beta0 + fit.scores_for(curves) @ fit.beta_coefs.coefs


def cross_validate_p(
    Y: np.ndarray,
    vhat: FunctionalSample,
    candidate_ps: Sequence[int] = DEFAULT_P_CANDIDATES,
    folds: int = 5,
    rng: Optional[np.random.Generator] = None,
    method: str = "calibrated",
    min_variance: Optional[float] = None,
) -> CVResult:
    """Choose the truncation ``p`` by K-fold held-out squared prediction error.

    For the calibrated method the eigenfunctions are re-estimated on each
    training fold. Candidates above the numerical rank of the regressors are
    dropped; if none survive, the largest admissible ``p`` is used. With
    ``min_variance`` set, candidates smaller than the number of components
    needed to explain that fraction of variance are dropped as well.
    """
    Y = _check_response(Y, vhat.n)
    candidates = sorted(set(int(p) for p in candidate_ps))
    if not candidates or candidates[0] < 1:
        raise ValueError("candidate truncations must be positive")
    if len(candidates) == 1:
        return CVResult(candidates[0], {candidates[0]: float("nan")})
    rng = np.random.default_rng(0) if rng is None else rng
    parts = kfold_indices(vhat.n, folds, rng)

    n_train = vhat.n - max(part.size for part in parts)
    floor = 1
    if method == "calibrated":
        full = fpca(vhat, 1)
        limit = min(full.rank, n_train - 2, vhat.basis.size)
        if min_variance is not None:
            floor = min(fpca(vhat, min_variance, clip=True).k, limit)
    elif method == "naive":
        limit = n_train - 2
    else:
        raise ValueError(f"unknown method {method!r}")
    admissible = [p for p in candidates if floor <= p <= limit]
    if not admissible:
        admissible = [max(floor, min(limit, candidates[0]))]
    top = max(admissible)

    errors = {p: 0.0 for p in admissible}
    if method == "naive":
        _, all_scores = fourier_scores(vhat, top)
    else:
        weighted = vhat.values * vhat.grid.weights
    for test in parts:
        train = np.setdiff1d(np.arange(vhat.n), test)
        if method == "calibrated":
            psi = fpca(vhat.subset(train), top, clip=True).eigenfunctions.eval
            s_train, s_test = weighted[train] @ psi.T, weighted[test] @ psi.T
        else:
            s_train, s_test = all_scores[train], all_scores[test]
        for p in admissible:
            k = min(p, s_train.shape[1])
            d_train = np.column_stack([np.ones(train.size), s_train[:, :k]])
            d_test = np.column_stack([np.ones(test.size), s_test[:, :k]])
            coef = _least_squares(Y[train], d_train, method)
            errors[p] += float(np.sum((Y[test] - d_test @ coef) ** 2))
    scores = {p: e / vhat.n for p, e in errors.items()}
    return CVResult(pick_best(scores), scores)
