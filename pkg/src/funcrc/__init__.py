"""Instrumental-variable regression calibration for scalar-on-function regression.

The observed curve ``W = X + U`` is an error-prone proxy of the regressor
``X``. An instrument curve ``Z`` related to ``X`` through the concurrent model
``X(t) = theta(t) Z(t) + error`` lets the regressor be replaced by its
calibrated version ``theta-hat(t) Z(t)`` before the scalar response is
regressed on it.
"""

from .basis import BasisSystem, CoefVector, Grid, default_grid, expand, inner_product, make_basis, make_grid
from .calibrate import CalibrationFit, cross_validate_q, fit_concurrent, fit_kernel
from .funcdata import CurvePanel, Fpca, FunctionalSample, fpca, smooth_panel
from .inference import ConfidenceBand, TestResult, confidence_band, test_calibrated, test_naive
from .regress import RegressionFit, cross_validate_p, fit_calibrated, fit_naive, predict
from .simgen import ScenarioConfig, generate_scenario, replicate_rng

__version__ = "0.1.0"

__all__ = [
    "BasisSystem",
    "CalibrationFit",
    "CoefVector",
    "ConfidenceBand",
    "CurvePanel",
    "Fpca",
    "FunctionalSample",
    "Grid",
    "RegressionFit",
    "ScenarioConfig",
    "TestResult",
    "confidence_band",
    "cross_validate_p",
    "cross_validate_q",
    "default_grid",
    "expand",
    "fit_calibrated",
    "fit_concurrent",
    "fit_kernel",
    "fit_naive",
    "fpca",
    "generate_scenario",
    "inner_product",
    "make_basis",
    "make_grid",
    "predict",
    "replicate_rng",
    "smooth_panel",
    "test_calibrated",
    "test_naive",
]
