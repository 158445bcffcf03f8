"""Long-format CSV ingestion and export for curve panels and scalar responses.

A curve file has the header ``subject_id,t,value`` and one row per
observation. A response file has ``subject_id,y`` followed by any number of
numeric covariate columns. Encoding categorical covariates is left to the
caller; every covariate column must already be numeric.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .basis import Grid, make_grid

__all__ = [
    "PanelError",
    "CurveTable",
    "ResponseTable",
    "align_subjects",
    "observation_grid",
    "read_curves",
    "read_response",
    "rescale_times",
    "standardization_constant",
    "write_curves",
    "write_response",
]

PathLike = Union[str, Path]


class PanelError(ValueError):
    """Malformed or inconsistent input files. The message names file and line."""


@dataclass(frozen=True, eq=False)
class CurveTable:
    """Curves observed at a common set of time points.

    ``values[i, j]`` is subject ``subjects[i]`` at ``times[j]``.
    """

    subjects: Tuple[str, ...]
    times: np.ndarray
    values: np.ndarray
    source: str = ""

    def reorder(self, subjects: Sequence[str]) -> "CurveTable":
        pos = {s: i for i, s in enumerate(self.subjects)}
        idx = [pos[s] for s in subjects]
        return CurveTable(tuple(subjects), self.times, self.values[idx], self.source)


@dataclass(frozen=True, eq=False)
class ResponseTable:
    subjects: Tuple[str, ...]
    y: np.ndarray
    covariates: np.ndarray
    covariate_names: Tuple[str, ...] = field(default_factory=tuple)
    source: str = ""

    def reorder(self, subjects: Sequence[str]) -> "ResponseTable":
        pos = {s: i for i, s in enumerate(self.subjects)}
        idx = [pos[s] for s in subjects]
        return ResponseTable(
            tuple(subjects), self.y[idx], self.covariates[idx], self.covariate_names, self.source
        )


def _number(raw: str, where: str, column: str) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise PanelError(f"{where}: column {column!r} is not numeric: {raw!r}") from None
    if not math.isfinite(value):
        raise PanelError(f"{where}: column {column!r} is not finite: {raw!r}")
    return value


def _rows(path: PathLike, required: Sequence[str]):
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise PanelError(f"{path}: cannot open ({exc.strerror})") from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise PanelError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise PanelError(f"{path}: header lacks column(s) {', '.join(missing)}")
        if len(set(header)) != len(header):
            raise PanelError(f"{path}: header repeats a column name")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise PanelError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                )
            yield header, f"{path}:{lineno}", dict(zip(header, (c.strip() for c in row)))


def read_curves(path: PathLike) -> CurveTable:
    """Read a long-format ``subject_id,t,value`` file.

    Every subject must be observed at the same sorted set of times, once per
    time point.
    """
    per_subject: Dict[str, Dict[float, float]] = {}
    for _, where, rec in _rows(path, ("subject_id", "t", "value")):
        sid = rec["subject_id"]
        if not sid:
            raise PanelError(f"{where}: empty subject_id")
        t = _number(rec["t"], where, "t")
        v = _number(rec["value"], where, "value")
        obs = per_subject.setdefault(sid, {})
        if t in obs:
            raise PanelError(f"{where}: duplicate observation for subject {sid!r} at t={t!r}")
        obs[t] = v
    if not per_subject:
        raise PanelError(f"{path}: no observations")

    subjects = tuple(per_subject)
    times = np.array(sorted(per_subject[subjects[0]]))
    for sid in subjects[1:]:
        mine = np.array(sorted(per_subject[sid]))
        if mine.shape != times.shape or np.any(mine != times):
            raise PanelError(
                f"{path}: subject {sid!r} is observed at {mine.size} time points that differ "
                f"from those of subject {subjects[0]!r} ({times.size} points)"
            )
    if times.size < 3:
        raise PanelError(f"{path}: need at least 3 time points per subject")
    values = np.array([[per_subject[s][t] for t in times] for s in subjects])
    return CurveTable(subjects, times, values, str(path))


def read_response(path: PathLike) -> ResponseTable:
    """Read ``subject_id,y[,covariate...]``; all extra columns are covariates."""
    ys, covs, subjects, names = [], [], [], None
    seen = set()
    for header, where, rec in _rows(path, ("subject_id", "y")):
        if names is None:
            names = tuple(c for c in header if c not in ("subject_id", "y"))
        sid = rec["subject_id"]
        if not sid:
            raise PanelError(f"{where}: empty subject_id")
        if sid in seen:
            raise PanelError(f"{where}: duplicate subject {sid!r}")
        seen.add(sid)
        subjects.append(sid)
        ys.append(_number(rec["y"], where, "y"))
        covs.append([_number(rec[c], where, c) for c in names])
    if not subjects:
        raise PanelError(f"{path}: no observations")
    cov = np.array(covs, dtype=float).reshape(len(subjects), len(names))
    return ResponseTable(tuple(subjects), np.array(ys), cov, names, str(path))


def align_subjects(*tables) -> Tuple[str, ...]:
    """Common subject order (that of the first table); any mismatch is an error."""
    reference = tables[0]
    ref_set = set(reference.subjects)
    for other in tables[1:]:
        other_set = set(other.subjects)
        if other_set != ref_set:
            missing = sorted(ref_set - other_set)
            extra = sorted(other_set - ref_set)
            parts = []
            if missing:
                parts.append(f"missing {_preview(missing)}")
            if extra:
                parts.append(f"not in {reference.source or 'first file'}: {_preview(extra)}")
            raise PanelError(f"{other.source or 'input'}: subject mismatch, " + "; ".join(parts))
    return reference.subjects


def _preview(items: List[str], limit: int = 5) -> str:
    shown = ", ".join(repr(s) for s in items[:limit])
    return shown + (f" and {len(items) - limit} more" if len(items) > limit else "")


def standardization_constant(values: np.ndarray) -> float:
    """Smallest power of ten strictly greater than the largest absolute value."""
    top = float(np.max(np.abs(values)))
    if top == 0:
        return 1.0
    const = 10.0 ** math.ceil(math.log10(top))
    if const <= top:
        const *= 10.0
    return const


def rescale_times(times: np.ndarray) -> np.ndarray:
    """Affine map of the observation times onto [0, 1]."""
    lo, hi = float(times[0]), float(times[-1])
    if hi <= lo:
        raise PanelError("observation times must span a positive interval")
    out = (times - lo) / (hi - lo)
    out[0], out[-1] = 0.0, 1.0
    return out


def observation_grid(points: np.ndarray) -> Grid:
    """Trapezoid grid on (possibly irregular) points spanning [0, 1].

    Equispaced points give exactly the grid of :func:`make_grid`.
    """
    points = np.asarray(points, dtype=float)
    uniform = make_grid(points.size)
    if np.array_equal(points, uniform.points):
        return uniform
    gaps = np.diff(points)
    weights = np.zeros(points.size)
    weights[:-1] += gaps / 2
    weights[1:] += gaps / 2
    return Grid(points, weights / weights.sum())


def write_curves(path: PathLike, subjects: Sequence[str], times: np.ndarray, values: np.ndarray):
    """Write a long-format curve file; floats use ``repr`` so they read back exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        out = csv.writer(handle)
        out.writerow(["subject_id", "t", "value"])
        for sid, row in zip(subjects, values):
            for t, v in zip(times, row):
                out.writerow([sid, repr(float(t)), repr(float(v))])


def write_response(
    path: PathLike,
    subjects: Sequence[str],
    y: np.ndarray,
    covariates: np.ndarray = None,
    names: Sequence[str] = (),
):
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        out = csv.writer(handle)
        out.writerow(["subject_id", "y", *names])
        cov = np.zeros((len(subjects), 0)) if covariates is None else np.asarray(covariates)
        for sid, yi, ci in zip(subjects, y, cov):
            out.writerow([sid, repr(float(yi)), *(repr(float(c)) for c in ci)])
