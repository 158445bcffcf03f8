"""Synthetic accelerometer-style dataset shipped with the package.

It mimics a study in which hourly activity is recorded by an error-prone
device (``W``) and by a second, independent device used as the instrument
(``Z``), alongside body-mass index and two pre-encoded covariates (age in
years and a 0/1 sex indicator). Values are on the scale of raw activity
counts, so ``--standardize`` matters. The files under ``funcrc/data`` are
exactly what :func:`make_activity_panel` returns for the shipped seed.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .basis import make_basis, make_grid
from .panel import CurveTable, ResponseTable, write_curves, write_response
from .simgen import replicate_rng, sample_gp_sqexp

__all__ = ["ACTIVITY_SEED", "activity_files", "make_activity_panel", "write_activity_panel"]

ACTIVITY_SEED = 5112
ACTIVITY_SUBJECTS = 400
COUNT_SCALE = 400.0
HOURS = np.arange(24.0)


def make_activity_panel(
    n: int = ACTIVITY_SUBJECTS, seed: int = ACTIVITY_SEED, effect: float = 0.08
) -> Tuple[CurveTable, CurveTable, ResponseTable]:
    """Generate the activity panel.

    True activity is ``X = theta Z + small noise`` on a 24-hour grid; the
    recorded proxy adds a smooth Gaussian error with large variance. Log BMI
    depends on age, sex and ``effect * int beta (X - mean X)``.
    """
    rng = replicate_rng(seed, 0)
    t = HOURS / HOURS[-1]
    dense = make_grid(101)
    # instrument: a daily rhythm plus subject-specific smooth deviations
    rhythm = 1.0 + 0.8 * np.sin(np.pi * t) ** 2
    spline = make_basis("bspline", 6, dense).evaluate(t)
    Z = rhythm + 0.6 * rng.standard_normal((n, 6)) @ spline
    theta = 0.8 + 0.4 * t
    X = theta * Z + 0.05 * rng.standard_normal((n, t.size))
    err_grid = make_grid(t.size)
    U = sample_gp_sqexp(n, 1.0, 0.15, err_grid, rng).values
    W = X + U

    beta = np.sqrt(2.0) * np.sin(2 * np.pi * t) + np.cos(2 * np.pi * t) * np.sqrt(2.0)
    weights = err_grid.weights
    signal = (X - X.mean(axis=0)) @ (beta * weights)
    age = np.round(rng.uniform(20, 80, n))
    male = (rng.uniform(size=n) < 0.5).astype(float)
    log_bmi = 3.2 + 0.003 * age + 0.02 * male + effect * signal + 0.12 * rng.standard_normal(n)

    subjects = tuple(f"P{i:04d}" for i in range(n))
    w_tab = CurveTable(subjects, HOURS.copy(), np.round(COUNT_SCALE * W, 3), "W.csv")
    z_tab = CurveTable(subjects, HOURS.copy(), np.round(COUNT_SCALE * Z, 3), "Z.csv")
    resp = ResponseTable(
        subjects,
        np.round(np.exp(log_bmi), 4),
        np.column_stack([age, male]),
        ("age", "male"),
        "response.csv",
    )
    return w_tab, z_tab, resp


def write_activity_panel(out: Path, **kwargs) -> Dict[str, Path]:
    """Write the generated tables as ``W.csv``, ``Z.csv`` and ``response.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    w_tab, z_tab, resp = make_activity_panel(**kwargs)
    paths = {"W": out / "W.csv", "Z": out / "Z.csv", "response": out / "response.csv"}
    write_curves(paths["W"], w_tab.subjects, w_tab.times, w_tab.values)
    write_curves(paths["Z"], z_tab.subjects, z_tab.times, z_tab.values)
    write_response(paths["response"], resp.subjects, resp.y, resp.covariates, resp.covariate_names)
    return paths


def activity_files() -> Dict[str, Path]:
    """Paths of the shipped copies of the activity panel."""
    root = resources.files("funcrc") / "data" / "activity"
    return {key: Path(str(root / f"{key}.csv")) for key in ("W", "Z", "response")}
