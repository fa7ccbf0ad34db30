#!/usr/bin/env python3
"""
Result serialization for FieldPlan
Metrics table, per-field heatmap matrices, peak-tracking traces, tract-variable
trajectories and a JSON summary, all written with fixed-format floats so reruns are byte-identical
"""

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from orchestrator import ExperimentResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9f"
# nine significant digits, so small memory activations survive
HEATMAP_FORMAT = "%.8e"
METRICS_COLUMNS = ("trial_label", "peak_position", "threshold_onset", "shift_from_baseline")
METRICS_FILE = "metrics.csv"
SUMMARY_FILE = "summary.json"


@dataclass
class MetricsRow:
    trial_label: str
    peak_position: Optional[float]
    threshold_onset: Optional[float]
    shift_from_baseline: Optional[float]


@dataclass
class ResultBundle:
    metrics: List[MetricsRow]
    # (trial index, trial label, field id) -> (steps+1, n_points) matrix
    heatmaps: Dict[Tuple[int, str, str], np.ndarray] = field(default_factory=dict)
    # (trial index, trial label) -> (t, x_tv) columns
    trajectories: Dict[Tuple[int, str], np.ndarray] = field(default_factory=dict)
    # (trial index, trial label) -> (t, target, valid) columns
    peaks: Dict[Tuple[int, str], np.ndarray] = field(default_factory=dict)
    summary: Optional[Dict[str, Any]] = None


def format_float(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return FLOAT_FORMAT % value


def _rounded(value: Optional[float]) -> Optional[float]:
    if value is None or math.isnan(value):
        return None
    return float(FLOAT_FORMAT % value)


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", label)


def build_bundle(result: ExperimentResult, outputs: Sequence[str] = ("metrics",),
                 scenario_name: str = "scenario", integrator: str = "euler") -> ResultBundle:
    metrics = [
        MetricsRow(t.label, t.peak_position, t.threshold_onset, result.shift_from_baseline(t))
        for t in result.trials
    ]
    bundle = ResultBundle(metrics=metrics)

    if "heatmaps" in outputs:
        for i, trial in enumerate(result.trials):
            if trial.field_history is None:
                continue
            for name in sorted(trial.field_history):
                bundle.heatmaps[(i, trial.label, name)] = trial.field_history[name]
        if not bundle.heatmaps:
            logger.warning("heatmaps requested but no field history was recorded (use --record-history)")

    if "trajectories" in outputs:
        for i, trial in enumerate(result.trials):
            if trial.tract_trajectory is None:
                continue
            t = np.arange(trial.tract_trajectory.shape[0]) * result.dt
            bundle.trajectories[(i, trial.label)] = np.column_stack([t, trial.tract_trajectory])

    if "peaks" in outputs:
        for i, trial in enumerate(result.trials):
            trace = trial.peak_trace
            bundle.peaks[(i, trial.label)] = np.column_stack([trace.times, trace.values, trace.valid])

    if "summary" in outputs:
        bundle.summary = {
            "scenario": scenario_name,
            "seed": result.seed,
            "dt": result.dt,
            "integrator": integrator,
            "trials": [
                {
                    "label": t.label,
                    "role": t.role,
                    "peak_position": _rounded(t.peak_position),
                    "threshold_onset": _rounded(t.threshold_onset),
                    "shift_from_baseline": _rounded(result.shift_from_baseline(t)),
                    "final_x_tv": None if t.tract_trajectory is None else _rounded(float(t.tract_trajectory[-1])),
                    "plateau_error": None if t.plateau_error is None else str(t.plateau_error),
                }
                for t in result.trials
            ],
            "baseline": result.baseline.label,
            "washout": result.washout.label,
            "shift": _rounded(result.shift),
            "mean_shadow_peak": _rounded(result.mean_shadow_peak),
            "convergence": {label: _rounded(v) for label, v in result.convergence.items()},
        }
    return bundle


def write_metrics(rows: Sequence[MetricsRow], path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([row.trial_label, format_float(row.peak_position),
                             format_float(row.threshold_onset), format_float(row.shift_from_baseline)])
    return path


def write_matrix(matrix: np.ndarray, path: Path, header: str = "",
                 fmt: Union[str, Sequence[str]] = FLOAT_FORMAT) -> Path:
    np.savetxt(path, matrix, fmt=fmt, delimiter=",", header=header, comments="")
    return path


def write_results(bundle: ResultBundle, out_dir: Union[str, Path]) -> List[Path]:
    """Write every part of the bundle under out_dir and return the paths written"""
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written.append(write_metrics(bundle.metrics, out_dir / METRICS_FILE))
        for (i, label, name), matrix in sorted(bundle.heatmaps.items()):
            path = out_dir / f"heatmap_{i:02d}_{_safe_name(label)}_{_safe_name(name)}.csv"
            written.append(write_matrix(matrix, path, fmt=HEATMAP_FORMAT))
        for (i, label), columns in sorted(bundle.trajectories.items()):
            path = out_dir / f"trajectory_{i:02d}_{_safe_name(label)}.csv"
            written.append(write_matrix(columns, path, header="t,x_tv"))
        for (i, label), columns in sorted(bundle.peaks.items()):
            path = out_dir / f"peaks_{i:02d}_{_safe_name(label)}.csv"
            written.append(write_matrix(columns, path, header="t,target,valid",
                                        fmt=(FLOAT_FORMAT, FLOAT_FORMAT, "%d")))
        if bundle.summary is not None:
            path = out_dir / SUMMARY_FILE
            with open(path, "w", encoding="utf-8") as f:
                json.dump(bundle.summary, f, indent=2, sort_keys=True)
                f.write("\n")
            written.append(path)
    except OSError as e:
        raise OSError(e.errno, f"cannot write results: {e.strerror}", e.filename) from e
    logger.info(f"Wrote {len(written)} file(s) to {out_dir}")
    return written
