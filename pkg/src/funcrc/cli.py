"""Command-line driver: ``funcrc simulate | fit | convergence``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .experiments import REPLICATE_COLUMNS, HarnessOptions, run_scenario, summarize
from .panel import PanelError, read_curves, read_response, write_curves, write_response
from .pipeline import FitOptions, RunReport, run_fit
from .regress import DEFAULT_P_CANDIDATES
from .simgen import DEFAULT_SEED, ScenarioConfig, generate_scenario, replicate_rng

log = logging.getLogger("funcrc")

CONVERGENCE_COLUMNS = [
    "dim",
    "n",
    "replicates",
    "prop_err_mean",
    "prop_err_median",
    "prop_err_se",
    "naive_err_mean",
    "naive_err_median",
    "theta_err_mean",
    "theta_err_median",
]


def _int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("list must hold positive integers")
    return values


def _write_table(path: Path, columns: Sequence[str], rows: Sequence[Dict]):
    with path.open("w", newline="", encoding="utf-8") as handle:
        out = csv.DictWriter(handle, fieldnames=list(columns), extrasaction="ignore")
        out.writeheader()
        for row in rows:
            out.writerow({k: _cell(v) for k, v in row.items()})


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable ({exc.strerror})") from None
    return out


def _load_config(args) -> ScenarioConfig:
    if args.config and not Path(args.config).is_file():
        raise OSError(f"config file {args.config} does not exist")
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.grid_size is not None:
        changes["grid_size"] = args.grid_size
    if getattr(args, "replicates", None) is not None:
        changes["replicates"] = args.replicates
    return cfg.replace(**changes) if changes else cfg


def _harness(args) -> HarnessOptions:
    return HarnessOptions(folds=args.folds, alpha=args.alpha, naive_p=args.naive_p)


def export_panel(cfg: ScenarioConfig, out: Path, replicate: int = 0):
    """Write one simulated replicate as the three CSV files ``fit`` reads."""
    data = generate_scenario(cfg, replicate_rng(cfg.seed, replicate))
    subjects = [f"s{i:05d}" for i in range(cfg.n)]
    times = data.grid.points
    write_curves(out / "W.csv", subjects, times, data.W.values)
    write_curves(out / "Z.csv", subjects, times, data.Z.values)
    write_response(out / "response.csv", subjects, data.Y)
    return data


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args.out)
    rows = run_scenario(cfg, _harness(args), jobs=args.jobs)
    _write_table(out / "replicates.csv", REPLICATE_COLUMNS, rows)
    summary = summarize(cfg, rows)
    _write_table(out / "summary.csv", list(summary), [summary])
    cfg.save(out / "config.txt")
    if args.export_panel:
        export_panel(cfg, out)
    print(
        f"{len(rows)} replicates: prop_err={summary['prop_err_mean']:.4g} "
        f"naive_err={summary['naive_err_mean']:.4g} "
        f"rejection(calibrated)={summary['power_prop']:.3f} "
        f"rejection(naive)={summary['power_naive']:.3f} -> {out}"
    )
    return 0


def convergence_table(
    base: ScenarioConfig,
    dims: Sequence[int],
    ns: Sequence[int],
    opts: HarnessOptions = HarnessOptions(),
    jobs: int = 1,
) -> List[Dict]:
    """Mean and median errors for each (dim, n) with ``p0 = q0 = dim``."""
    rows = []
    for dim in dims:
        for n in ns:
            cfg = base.replace(n=n, p0=dim, q0=dim)
            reps = run_scenario(cfg, opts, jobs=jobs)
            errs = np.array([r["prop_err"] for r in reps])
            s = summarize(cfg, reps)
            se = float(errs.std(ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else float("nan")
            rows.append(
                {
                    "dim": dim,
                    "n": n,
                    "replicates": len(reps),
                    "prop_err_mean": s["prop_err_mean"],
                    "prop_err_median": s["prop_err_median"],
                    "prop_err_se": se,
                    "naive_err_mean": s["naive_err_mean"],
                    "naive_err_median": s["naive_err_median"],
                    "theta_err_mean": s["theta_err_mean"],
                    "theta_err_median": s["theta_err_median"],
                }
            )
            log.info("dim=%d n=%d median error %.4g", dim, n, s["prop_err_median"])
    return rows


def cmd_convergence(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args.out)
    rows = convergence_table(cfg, args.dims, args.ns, _harness(args), jobs=args.jobs)
    _write_table(out / "convergence.csv", CONVERGENCE_COLUMNS, rows)
    for row in rows:
        print(f"dim={row['dim']} n={row['n']} median={row['prop_err_median']:.4g}")
    return 0


def cmd_fit(args) -> int:
    opts = FitOptions(
        q_candidates=tuple(args.q_candidates),
        p_candidates=tuple(args.p_candidates),
        folds=args.folds,
        alpha=args.alpha,
        grid_size=args.grid_size or 101,
        smooth=not args.no_smooth,
        smoothing_basis=args.smoothing_basis,
        smoothing_lambda=args.smoothing_lambda,
        standardize=args.standardize,
        log_response=args.log_response,
        seed=DEFAULT_SEED if args.seed is None else args.seed,
    )
    report = run_fit(read_curves(args.W), read_curves(args.Z), read_response(args.response), opts)
    out = _out_dir(args.out)
    write_report(report, out)
    tc, tn = report.test_calibrated, report.test_naive
    print(
        f"n={report.n} q={report.q} p={report.p}: calibrated T={tc['statistic']:.3f} "
        f"(p-value {tc['p_value']:.4g}); naive T={tn['statistic']:.3f} "
        f"(p-value {tn['p_value']:.4g}) -> {out}"
    )
    return 0


def write_report(report: RunReport, out: Path):
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    rows = [
        {"t": t, "beta": b, "lower": lo, "upper": hi, "theta": th}
        for t, b, lo, hi, th in zip(
            report.grid, report.beta, report.band_lower, report.band_upper, report.theta
        )
    ]
    _write_table(out / "beta.csv", ["t", "beta", "lower", "upper", "theta"], rows)
    cv_rows = [{"parameter": "q", "value": k, "score": v} for k, v in report.cv_q]
    cv_rows += [{"parameter": "p", "value": k, "score": v} for k, v in report.cv_p]
    _write_table(out / "cv.csv", ["parameter", "value", "score"], cv_rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="funcrc",
        description="Instrumental-variable regression calibration for scalar-on-function regression.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory (created if needed)")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    common.add_argument("--folds", type=int, default=5, help="cross-validation folds (default 5)")
    common.add_argument("--grid-size", type=int, default=None, help="working grid points (default 101)")

    sim_common = argparse.ArgumentParser(add_help=False)
    sim_common.add_argument("--config", help="scenario file of key=value lines")
    sim_common.add_argument("--replicates", type=int, default=None, help="override the config")
    sim_common.add_argument("--jobs", type=int, default=1, help="worker processes")
    sim_common.add_argument(
        "--naive-p",
        choices=("cv", "match"),
        default="cv",
        help="naive truncation: cross-validated or equal to the calibrated p",
    )

    sim = sub.add_parser("simulate", parents=[common, sim_common], help="run a Monte Carlo scenario")
    sim.add_argument(
        "--export-panel",
        action="store_true",
        help="also write replicate 0 as W.csv, Z.csv and response.csv",
    )
    sim.set_defaults(func=cmd_simulate)

    conv = sub.add_parser("convergence", parents=[common, sim_common], help="error versus n table")
    conv.add_argument("--dims", type=_int_list, default=[3, 5, 7], help="comma-separated p0 = q0 values")
    conv.add_argument("--ns", type=_int_list, default=[500, 1000, 3000], help="comma-separated sample sizes")
    conv.set_defaults(func=cmd_convergence)

    fit = sub.add_parser("fit", parents=[common], help="analyze observed panels")
    fit.add_argument("--W", required=True, help="long-format CSV of the error-prone curves")
    fit.add_argument("--Z", required=True, help="long-format CSV of the instrument curves")
    fit.add_argument("--response", required=True, help="CSV with subject_id, y and covariates")
    fit.add_argument("--q-candidates", type=_int_list, default=[4, 6, 8, 10])
    fit.add_argument("--p-candidates", type=_int_list, default=list(DEFAULT_P_CANDIDATES))
    fit.add_argument("--smoothing-lambda", type=float, default=None, help="fixed penalty (default: GCV)")
    fit.add_argument("--smoothing-basis", type=int, default=15, help="B-spline smoother size")
    fit.add_argument("--no-smooth", action="store_true", help="curves are already on the working grid")
    fit.add_argument("--standardize", action="store_true", help="divide each curve file by a power of ten")
    fit.add_argument("--log-response", action="store_true", help="analyze log(y)")
    fit.set_defaults(func=cmd_fit)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (PanelError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"funcrc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
