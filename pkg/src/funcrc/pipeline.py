"""End-to-end analysis of observed panels: preprocessing, both steps, tests, band.

This is what ``funcrc fit`` runs. It is kept free of file handling so a fit
on in-memory data and a fit on the same data read back from CSV go through
identical arithmetic.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .basis import make_basis, make_grid
from .calibrate import cross_validate_q, fit_concurrent
from .funcdata import CurvePanel, FunctionalSample, gcv_lambda, smooth_panel
from .inference import confidence_band, test_calibrated, test_naive
from .panel import (
    CurveTable,
    PanelError,
    ResponseTable,
    align_subjects,
    observation_grid,
    rescale_times,
    standardization_constant,
)
from .regress import DEFAULT_P_CANDIDATES, cross_validate_p, fit_calibrated, fit_naive
from .simgen import DEFAULT_SEED, replicate_rng

__all__ = [
    "FitOptions",
    "RunReport",
    "analyze",
    "prepare_curves",
    "residualize",
    "run_fit",
]


@dataclass(frozen=True)
class FitOptions:
    """Settings of one analysis run.

    ``smoothing_lambda=None`` selects the roughness penalty by GCV for each of
    ``W`` and ``Z``. With ``smooth=False`` the observation times must already
    be the working grid and the raw values are used as they are.
    """

    q_candidates: Tuple[int, ...] = (4, 6, 8, 10)
    p_candidates: Tuple[int, ...] = DEFAULT_P_CANDIDATES
    folds: int = 5
    alpha: float = 0.05
    grid_size: int = 101
    smooth: bool = True
    smoothing_basis: int = 15
    smoothing_lambda: Optional[float] = None
    standardize: bool = False
    log_response: bool = False
    min_variance: Optional[float] = 0.999
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "q_candidates", tuple(int(q) for q in self.q_candidates))
        object.__setattr__(self, "p_candidates", tuple(int(p) for p in self.p_candidates))
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")

    def to_dict(self) -> Dict:
        return {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, d: Dict) -> "FitOptions":
        return cls(**d)


def _plain(value):
    return list(value) if isinstance(value, tuple) else value


@dataclass
class RunReport:
    """Everything a fit produced, in plain Python types.

    The text form has one ``key=value`` line per field with the value in
    JSON; floats are written with enough digits to read back exactly.
    """

    config: Dict
    seed: int
    n: int
    covariates: List[str]
    standardization: Dict[str, float]
    smoothing_lambda: Dict[str, Optional[float]]
    q: int
    p: int
    p_naive: int
    cv_q: List[List[float]]
    cv_p: List[List[float]]
    grid: List[float]
    theta: List[float]
    beta0: float
    beta_coefs: List[float]
    beta: List[float]
    band_lower: List[float]
    band_upper: List[float]
    test_calibrated: Dict
    test_naive: Dict
    timing_seconds: float = 0.0

    def to_text(self) -> str:
        lines = [f"{f.name}={json.dumps(getattr(self, f.name))}" for f in dataclasses.fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunReport":
        known = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            key, sep, raw = line.partition("=")
            if not sep or key not in known:
                raise ValueError(f"report line {lineno}: unrecognized entry {key!r}")
            values[key] = json.loads(raw)
        missing = known - set(values) - {"timing_seconds"}
        if missing:
            raise ValueError(f"report lacks {', '.join(sorted(missing))}")
        return cls(**values)

    def same_fit(self, other: "RunReport") -> bool:
        """Equal in every field except wall-clock timing."""
        a = dataclasses.replace(self, timing_seconds=0.0).to_text()
        b = dataclasses.replace(other, timing_seconds=0.0).to_text()
        return a == b


def residualize(y: np.ndarray, covariates: np.ndarray) -> np.ndarray:
    """Residuals of ``y`` after least squares on an intercept and the covariates."""
    y = np.asarray(y, dtype=float)
    cov = np.asarray(covariates, dtype=float).reshape(y.size, -1)
    design = np.column_stack([np.ones(y.size), cov])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise PanelError(
            f"covariate matrix (with intercept) is rank deficient: rank "
            f"{np.linalg.matrix_rank(design)} < {design.shape[1]} columns"
        )
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ coef


def prepare_curves(table: CurveTable, opts: FitOptions) -> Tuple[FunctionalSample, float, Optional[float]]:
    """Rescale time to [0, 1], optionally standardize, and map onto the working grid.

    Returns the sample, the standardization constant (1 when off) and the
    smoothing parameter used (None without smoothing).
    """
    points = rescale_times(table.times)
    const = standardization_constant(table.values) if opts.standardize else 1.0
    values = table.values / const
    working = make_grid(opts.grid_size)
    if not opts.smooth:
        if points.size != len(working) or np.max(np.abs(points - working.points)) > 1e-9:
            raise PanelError(
                f"{table.source}: without smoothing the {points.size} observation times must "
                f"be the {len(working)}-point working grid"
            )
        return FunctionalSample.from_values(values, working), const, None
    raw = CurvePanel(observation_grid(points), values)
    size = min(opts.smoothing_basis, points.size)
    basis = make_basis("bspline", size, working)
    lam = opts.smoothing_lambda if opts.smoothing_lambda is not None else gcv_lambda(raw, basis)
    return smooth_panel(raw, basis, lam), const, lam


def analyze(
    W: FunctionalSample,
    Z: FunctionalSample,
    y: np.ndarray,
    opts: FitOptions = FitOptions(),
):
    """Cross-validate ``q`` and ``p``, fit both steps and the naive benchmark, test, band.

    Returns a dict of the fitted objects. ``y`` should already be residualized.
    """
    rng = replicate_rng(opts.seed, 0)
    cv_q = cross_validate_q(W, Z, opts.q_candidates, opts.folds, rng)
    calib = fit_concurrent(W, Z, make_basis("bspline", cv_q.best, W.grid))
    cv_p = cross_validate_p(
        y, calib.vhat, opts.p_candidates, opts.folds, rng, min_variance=opts.min_variance
    )
    prop = fit_calibrated(y, calib.vhat, cv_p.best)
    cv_naive = cross_validate_p(y, W, opts.p_candidates, opts.folds, rng, method="naive")
    naive = fit_naive(y, W, cv_naive.best)
    return {
        "cv_q": cv_q,
        "cv_p": cv_p,
        "cv_naive": cv_naive,
        "calibration": calib,
        "calibrated": prop,
        "naive": naive,
        "test_calibrated": test_calibrated(prop),
        "test_naive": test_naive(naive),
        "band": confidence_band(prop, opts.alpha),
    }


def _test_dict(result) -> Dict:
    return {"statistic": result.statistic, "p_value": result.p_value, "p": result.p_used}


def _floats(a) -> List[float]:
    return [float(x) for x in np.asarray(a).ravel()]


def run_fit(
    w_table: CurveTable,
    z_table: CurveTable,
    response: ResponseTable,
    opts: FitOptions = FitOptions(),
) -> RunReport:
    """The full ``fit`` pipeline on ingested tables."""
    start = time.perf_counter()
    subjects = align_subjects(w_table, z_table, response)
    w_table = w_table.reorder(subjects)
    z_table = z_table.reorder(subjects)
    response = response.reorder(subjects)

    y = response.y
    if opts.log_response:
        if np.any(y <= 0):
            raise PanelError(f"{response.source}: --log-response needs a positive response")
        y = np.log(y)
    y = residualize(y, response.covariates)

    W, w_const, w_lam = prepare_curves(w_table, opts)
    Z, z_const, z_lam = prepare_curves(z_table, opts)
    out = analyze(W, Z, y, opts)
    prop, band = out["calibrated"], out["band"]
    return RunReport(
        config=opts.to_dict(),
        seed=opts.seed,
        n=len(subjects),
        covariates=list(response.covariate_names),
        standardization={"W": w_const, "Z": z_const},
        smoothing_lambda={"W": w_lam, "Z": z_lam},
        q=out["calibration"].q,
        p=prop.p,
        p_naive=out["naive"].p,
        cv_q=[[k, v] for k, v in sorted(out["cv_q"].scores.items())],
        cv_p=[[k, v] for k, v in sorted(out["cv_p"].scores.items())],
        grid=_floats(W.grid.points),
        theta=_floats(out["calibration"].theta_values()),
        beta0=prop.beta0,
        beta_coefs=_floats(prop.beta_coefs.coefs),
        beta=_floats(prop.beta_values()),
        band_lower=_floats(band.lower),
        band_upper=_floats(band.upper),
        test_calibrated=_test_dict(out["test_calibrated"]),
        test_naive=_test_dict(out["test_naive"]),
        timing_seconds=time.perf_counter() - start,
    )
