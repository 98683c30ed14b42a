"""Keypoint-error evaluation and aggregation.

Errors are Euclidean distances in millimeters (voxel offsets scaled by
spacing). Two aggregations are reported because cases carry different
keypoint counts: the case mean averages per-case means, the keypoint mean
averages the pooled errors. Standard deviations are population (divide by N)
for both; the report flags that choice and whether box percentiles were
computed in voxels or millimeters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .volume import KeypointSet


@dataclass(frozen=True, eq=False)
class CaseErrors:
    """Per-keypoint errors (mm) for one image pair."""

    case_id: str
    errors: np.ndarray

    def __post_init__(self):
        errs = np.asarray(self.errors, dtype=np.float64).ravel()
        if errs.size == 0:
            raise ValueError(f"case {self.case_id!r} has no errors")
        if not np.isfinite(errs).all() or (errs < 0).any():
            raise ValueError(f"case {self.case_id!r} has negative or non-finite errors")
        object.__setattr__(self, "errors", errs)


@dataclass(frozen=True)
class MetricsReport:
    case_mean: float
    case_std: float
    keypoint_mean: float
    keypoint_std: float
    n_cases: int
    n_keypoints: int
    per_case: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "case_mean_mm": self.case_mean,
            "case_std_mm": self.case_std,
            "keypoint_mean_mm": self.keypoint_mean,
            "keypoint_std_mm": self.keypoint_std,
            "n_cases": self.n_cases,
            "n_keypoints": self.n_keypoints,
            "per_case": self.per_case,
            "std_definition": "population",
            "config": self.config,
        }


def keypoint_errors(pred: KeypointSet, gt: KeypointSet, spacing) -> np.ndarray:
    """Per-point ||(pred - gt) * spacing||_2 in millimeters."""
    if len(pred) != len(gt):
        raise ValueError(f"keypoint counts differ: {len(pred)} predicted vs {len(gt)} ground truth")
    if pred.frame != gt.frame:
        raise ValueError(f"keypoint frames differ: {pred.frame!r} vs {gt.frame!r}")
    spacing = np.asarray(spacing, dtype=np.float64)
    if spacing.shape != (3,) or (spacing <= 0).any():
        raise ValueError(f"spacing must be three positive values, got {spacing!r}")
    delta = (pred.points - gt.points) * spacing[None, :]
    return np.sqrt(np.einsum("ij,ij->i", delta, delta))


def aggregate(cases, config: dict | None = None) -> MetricsReport:
    """Both aggregation schemes over a list of CaseErrors."""
    cases = list(cases)
    if not cases:
        raise ValueError("at least one case is required")
    case_means = np.array([float(c.errors.mean()) for c in cases])
    pooled = np.concatenate([c.errors for c in cases])
    per_case = [
        {"case_id": c.case_id, "n_keypoints": int(c.errors.size), "mean_mm": float(c.errors.mean())}
        for c in cases
    ]
    return MetricsReport(
        case_mean=float(case_means.mean()),
        case_std=float(case_means.std()),
        keypoint_mean=float(pooled.mean()),
        keypoint_std=float(pooled.std()),
        n_cases=len(cases),
        n_keypoints=int(pooled.size),
        per_case=per_case,
        config=dict(config or {}),
    )


def nearest_rank_percentile(values, pct: float) -> float:
    """Smallest value whose rank is at least ceil(pct/100 * N)."""
    values = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if values.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0 < pct <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {pct}")
    rank = max(1, math.ceil(pct / 100.0 * values.size))
    return float(values[rank - 1])


def box_from_percentile(displacements, pct: float = 95.0, mode: str = "per-axis"):
    """Half-widths (voxels) from source-to-target displacement vectors.

    ``per-axis`` takes the percentile of each component's absolute value
    (an axis-aligned box); ``radius`` takes the percentile of the Euclidean
    norms and uses it for all three axes.
    """
    disp = np.asarray(displacements, dtype=np.float64)
    if disp.ndim != 2 or disp.shape[1] != 3 or disp.shape[0] == 0:
        raise ValueError(f"displacements must be a non-empty (N, 3) array, got shape {disp.shape}")
    if mode == "per-axis":
        return tuple(
            int(math.ceil(nearest_rank_percentile(np.abs(disp[:, axis]), pct)))
            for axis in range(3)
        )
    if mode == "radius":
        norms = np.sqrt(np.einsum("ij,ij->i", disp, disp))
        r = int(math.ceil(nearest_rank_percentile(norms, pct)))
        return (r, r, r)
    raise ValueError(f"unknown box mode {mode!r} (expected 'per-axis' or 'radius')")


def _label_sort_key(label: str):
    try:
        return (0, tuple(int(ch) for ch in label))
    except ValueError:
        return (1, tuple(label))


@dataclass(frozen=True)
class SweepTable:
    """Heatmap of keypoint mean error over level subsets (rows) x timesteps."""

    level_labels: list[str]
    t_values: list[int]
    errors: np.ndarray  # (rows, cols), NaN for missing cells

    def cell(self, label: str, t: int) -> float:
        return float(self.errors[self.level_labels.index(label), self.t_values.index(t)])

    def to_csv(self) -> str:
        lines = ["levels," + ",".join(f"t={t}" for t in self.t_values)]
        for i, label in enumerate(self.level_labels):
            cells = [
                "" if math.isnan(v) else repr(float(v)) for v in self.errors[i]
            ]
            lines.append(label + "," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "level_labels": self.level_labels,
            "t_values": self.t_values,
            "keypoint_mean_mm": [
                [None if math.isnan(v) else float(v) for v in row] for row in self.errors
            ],
        }


def sweep_aggregate(results) -> SweepTable:
    """Arrange (t, level_label) -> MetricsReport results into a heatmap table.

    Rows are level-subset labels like "0" or "012" sorted ascending as digit
    tuples; columns are timesteps ascending; cells are keypoint mean errors.
    """
    results = dict(results)
    if not results:
        raise ValueError("sweep produced no results")
    labels = sorted({label for _, label in results}, key=_label_sort_key)
    ts = sorted({int(t) for t, _ in results})
    grid = np.full((len(labels), len(ts)), np.nan)
    for (t, label), report in results.items():
        grid[labels.index(label), ts.index(int(t))] = report.keypoint_mean
    return SweepTable(level_labels=labels, t_values=ts, errors=grid)
