"""Monte Carlo replicate runner shared by the CLI and the acceptance suite."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .basis import CoefVector, make_basis
from .calibrate import cross_validate_q, fit_concurrent
from .inference import test_calibrated, test_naive
from .regress import DEFAULT_P_CANDIDATES, cross_validate_p, fit_calibrated, fit_naive
from .simgen import ScenarioConfig, estimation_error, generate_scenario, replicate_rng

__all__ = [
    "HarnessOptions",
    "REPLICATE_COLUMNS",
    "run_replicate",
    "run_scenario",
    "summarize",
]

REPLICATE_COLUMNS = [
    "replicate",
    "theta_err",
    "prop_err",
    "naive_err",
    "q_chosen",
    "p_chosen",
    "p_naive",
    "T_hat",
    "T_w",
    "p_value_prop",
    "p_value_naive",
    "reject_prop",
    "reject_naive",
]


@dataclass(frozen=True)
class HarnessOptions:
    q_candidates: Sequence[int] = (4, 6, 8, 10)
    p_candidates: Sequence[int] = DEFAULT_P_CANDIDATES
    folds: int = 5
    alpha: float = 0.05
    # smallest calibrated truncation must explain this share of the regressors' variance
    min_variance: Optional[float] = 0.999
    # naive truncation: "cv" picks it by cross-validation, "match" reuses the calibrated p
    naive_p: str = "cv"


def run_replicate(cfg: ScenarioConfig, replicate: int, opts: HarnessOptions = HarnessOptions()) -> Dict:
    """Generate one dataset, run both estimators and both tests."""
    rng = replicate_rng(cfg.seed, replicate)
    data = generate_scenario(cfg, rng)
    grid = data.grid

    q = cross_validate_q(data.W, data.Z, opts.q_candidates, opts.folds, rng).best
    calib = fit_concurrent(data.W, data.Z, make_basis("bspline", q, grid))
    p = cross_validate_p(
        data.Y, calib.vhat, opts.p_candidates, opts.folds, rng, min_variance=opts.min_variance
    ).best
    prop = fit_calibrated(data.Y, calib.vhat, p)

    if opts.naive_p == "match":
        p_naive = prop.p
    else:
        p_naive = cross_validate_p(data.Y, data.W, opts.p_candidates, opts.folds, rng, method="naive").best
    naive = fit_naive(data.Y, data.W, p_naive)

    t_prop = test_calibrated(prop)
    t_naive = test_naive(naive)
    # theta-hat and theta-tilde live in different bases; compare on the grid
    theta_err = float(grid.integrate((calib.theta_values() - data.true_theta.values()) ** 2))
    return {
        "replicate": replicate,
        "theta_err": theta_err,
        "prop_err": estimation_error(prop.beta_coefs, data.true_beta),
        "naive_err": estimation_error(naive.beta_coefs, data.true_beta),
        "q_chosen": q,
        "p_chosen": prop.p,
        "p_naive": p_naive,
        "T_hat": t_prop.statistic,
        "T_w": t_naive.statistic,
        "p_value_prop": t_prop.p_value,
        "p_value_naive": t_naive.p_value,
        "reject_prop": int(t_prop.rejects(opts.alpha)),
        "reject_naive": int(t_naive.rejects(opts.alpha)),
    }


def run_scenario(
    cfg: ScenarioConfig,
    opts: HarnessOptions = HarnessOptions(),
    replicates: Optional[Iterable[int]] = None,
    jobs: int = 1,
) -> List[Dict]:
    """All replicates of a scenario, in replicate order regardless of ``jobs``."""
    reps = list(range(cfg.replicates) if replicates is None else replicates)
    if jobs <= 1:
        return [run_replicate(cfg, r, opts) for r in reps]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_replicate, [cfg] * len(reps), reps, [opts] * len(reps)))


def summarize(cfg: ScenarioConfig, rows: Sequence[Dict]) -> Dict:
    """Table-style aggregate: means, variances and rejection rates."""
    def col(name):
        return np.array([r[name] for r in rows], dtype=float)

    ddof = 1 if len(rows) > 1 else 0
    out = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg) if f.name != "replicates"}
    out["replicates"] = len(rows)
    for name in ("theta_err", "prop_err", "naive_err"):
        out[f"{name}_mean"] = float(col(name).mean())
        out[f"{name}_median"] = float(np.median(col(name)))
        out[f"{name}_var"] = float(col(name).var(ddof=ddof))
    out["q_bar"] = float(col("q_chosen").mean())
    out["p_bar"] = float(col("p_chosen").mean())
    out["p_naive_bar"] = float(col("p_naive").mean())
    out["power_prop"] = float(col("reject_prop").mean())
    out["power_naive"] = float(col("reject_naive").mean())
    return out
