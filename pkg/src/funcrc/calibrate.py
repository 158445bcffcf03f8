"""Step 1: estimate how the instrument relates to the true covariate.

The concurrent model ``E[W(t) | Z] = theta(t) Z(t)`` is fit by least squares
with ``theta`` expanded in a finite basis; the fitted ``theta`` times each
instrument curve gives the calibrated regressors used in step 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import scipy.linalg

from .basis import BasisSystem, CoefVector, make_basis
from .funcdata import FunctionalSample

__all__ = [
    "CVResult",
    "CalibrationFit",
    "IllConditionedError",
    "KernelFit",
    "cross_validate_q",
    "fit_concurrent",
    "fit_kernel",
    "kfold_indices",
]

MAX_CONDITION = 1e12


class IllConditionedError(np.linalg.LinAlgError):
    """A normal-equations matrix is singular or numerically close to it."""


def solve_spd(matrix: np.ndarray, rhs: np.ndarray, what: str = "system") -> np.ndarray:
    """Cholesky solve after checking the condition number against ``MAX_CONDITION``."""
    matrix = 0.5 * (matrix + matrix.T)
    evals = np.linalg.eigvalsh(matrix)
    if not np.all(np.isfinite(evals)) or evals[0] <= 0 or evals[-1] / evals[0] > MAX_CONDITION:
        cond = np.inf if evals[0] <= 0 else evals[-1] / evals[0]
        raise IllConditionedError(f"{what} is singular or ill-conditioned (condition number {cond:.3g})")
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(matrix), rhs)


def _check_pair(W: FunctionalSample, Z: FunctionalSample):
    W.grid.check_same(Z.grid)
    if W.n != Z.n:
        raise ValueError(f"W has {W.n} curves but Z has {Z.n}")


@dataclass(frozen=True, eq=False)
class CalibrationFit:
    """Concurrent step-1 fit.

    ``gram`` is ``n^-1 sum_i int Z_i^2 phi phi'`` and ``objective`` the mean
    over subjects of ``int (W_i - theta Z_i)^2``.
    """

    theta_basis: BasisSystem
    theta_coefs: CoefVector
    vhat: FunctionalSample
    gram: np.ndarray
    objective: float

    @property
    def q(self) -> int:
        return self.theta_basis.size

    def theta_values(self) -> np.ndarray:
        return self.theta_coefs.values()

    def calibrate(self, Z: FunctionalSample) -> FunctionalSample:
        """Calibrated regressors for new instrument curves."""
        return _product_sample(self.theta_values(), Z)


def _product_sample(theta_vals: np.ndarray, Z: FunctionalSample) -> FunctionalSample:
    # theta * Z_i = sum_j z_ij (theta * phi_zj): reuse Z's coefficients exactly
    basis = BasisSystem.empirical(Z.basis.eval * theta_vals, Z.grid)
    return FunctionalSample(basis, Z.coefs)


def concurrent_moments(W: FunctionalSample, Z: FunctionalSample, theta_basis: BasisSystem):
    """Averaged normal-equation pieces: the Gram matrix and ``n^-1 sum int W Z phi``."""
    w = Z.grid.weights
    zv = Z.values
    z2 = np.einsum("ij,ij->j", zv, zv) / Z.n
    wz = np.einsum("ij,ij->j", W.values, zv) / Z.n
    phi = theta_basis.eval
    gram = (phi * (w * z2)) @ phi.T
    rhs = phi @ (w * wz)
    return 0.5 * (gram + gram.T), rhs


def estimating_equation(W, Z, theta_basis, theta_c) -> np.ndarray:
    """``S(theta)`` summed over subjects; zero at the least-squares solution."""
    gram, rhs = concurrent_moments(W, Z, theta_basis)
    return W.n * (rhs - gram @ np.asarray(theta_c))


def fit_concurrent(
    W: FunctionalSample, Z: FunctionalSample, theta_basis: BasisSystem
) -> CalibrationFit:
    """Least-squares fit of ``W_i(t) ~ theta(t) Z_i(t)`` with ``theta`` in ``theta_basis``."""
    _check_pair(W, Z)
    theta_basis = theta_basis.on(Z.grid)
    gram, rhs = concurrent_moments(W, Z, theta_basis)
    coefs = solve_spd(gram, rhs, "instrument Gram matrix")
    theta = CoefVector(theta_basis, coefs)
    vhat = _product_sample(theta.values(), Z)
    resid = W.values - vhat.values
    objective = float(np.mean(Z.grid.integrate(resid**2)))
    return CalibrationFit(theta_basis, theta, vhat, gram, objective)


@dataclass(frozen=True, eq=False)
class KernelFit:
    """Integral-kernel step-1 fit ``X(t) = int alpha(s, t) Z(s) ds``.

    ``alpha_coefs[k, m]`` multiplies ``phi_k(t) psi_m(s)``.
    """

    alpha_coefs: np.ndarray
    phi: BasisSystem
    psi: BasisSystem
    vhat: FunctionalSample
    objective: float

    def calibrate(self, Z: FunctionalSample) -> FunctionalSample:
        zeta = Z.inner_products(self.psi.eval)
        return FunctionalSample(self.phi, zeta @ self.alpha_coefs.T)


def fit_kernel(
    W: FunctionalSample, Z: FunctionalSample, phi: BasisSystem, psi: BasisSystem
) -> KernelFit:
    """Least-squares fit of the integral-kernel calibration model.

    With ``zeta_im = <Z_i, psi_m>`` the design is ``g_i(t) = phi(t) kron zeta_i``
    and the normal equations factor as ``(sum_i zeta_i zeta_i') kron Gram(phi)``,
    so ``alpha = Gram(phi)^-1 B (sum_i zeta_i zeta_i')^-1`` with
    ``B_km = sum_i <W_i, phi_k> zeta_im``.
    """
    _check_pair(W, Z)
    phi, psi = phi.on(Z.grid), psi.on(Z.grid)
    if phi.size * psi.size > Z.n:
        raise ValueError("need K*M <= n")
    zeta = Z.inner_products(psi.eval)
    w_phi = W.inner_products(phi.eval)
    s_zeta = zeta.T @ zeta
    cross = w_phi.T @ zeta
    left = solve_spd(phi.gram(), cross, "phi Gram matrix")
    alpha = solve_spd(s_zeta, left.T, "instrument score matrix").T
    vhat = FunctionalSample(phi, zeta @ alpha.T)
    resid = W.values - vhat.values
    objective = float(np.mean(Z.grid.integrate(resid**2)))
    return KernelFit(alpha, phi, psi, vhat, objective)


def kfold_indices(n: int, folds: int, rng: np.random.Generator):
    """Random subject-level partition into ``folds`` nearly equal groups."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"cannot split {n} subjects into {folds} folds")
    perm = rng.permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


@dataclass(frozen=True)
class CVResult:
    best: int
    scores: Dict[int, float]


def pick_best(scores: Dict[int, float]) -> int:
    # exact ties go to the smaller candidate
    return min(scores, key=lambda c: (scores[c], c))


def cross_validate_q(
    W: FunctionalSample,
    Z: FunctionalSample,
    candidate_qs: Sequence[int] = (4, 6, 8, 10),
    folds: int = 5,
    rng: Optional[np.random.Generator] = None,
    kind: str = "bspline",
) -> CVResult:
    """Choose the size of the ``theta`` basis by K-fold cross-validation.

    The score for each ``q`` is the held-out mean of ``int (W_i - theta Z_i)^2``.
    """
    _check_pair(W, Z)
    candidate_qs = sorted(set(int(q) for q in candidate_qs))
    if len(candidate_qs) == 1:
        return CVResult(candidate_qs[0], {candidate_qs[0]: float("nan")})
    rng = np.random.default_rng(0) if rng is None else rng
    parts = kfold_indices(Z.n, folds, rng)
    w = Z.grid.weights
    zv, wv = Z.values, W.values
    z2 = zv * zv
    wz = wv * zv
    totals = {q: 0.0 for q in candidate_qs}
    bases = {q: make_basis(kind, q, Z.grid) for q in candidate_qs}
    z2_all, wz_all = z2.sum(0), wz.sum(0)
    for test in parts:
        n_train = Z.n - test.size
        z2_tr = (z2_all - z2[test].sum(0)) / n_train
        wz_tr = (wz_all - wz[test].sum(0)) / n_train
        for q, basis in bases.items():
            phi = basis.eval
            gram = (phi * (w * z2_tr)) @ phi.T
            theta = phi.T @ solve_spd(gram, phi @ (w * wz_tr), "instrument Gram matrix")
            resid = wv[test] - theta * zv[test]
            totals[q] += float(np.sum(resid**2 @ w))
    scores = {q: s / Z.n for q, s in totals.items()}
    return CVResult(pick_best(scores), scores)
