"""Privacy and utility metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def mae(original_total: float, masked_total: float) -> float:
    """Relative absolute error of a masked period total against the true total."""
    if original_total == 0:
        raise ValueError("undefined relative error")
    return abs(original_total - masked_total) / abs(original_total)


def pearson_corr(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    if a.shape[0] < 2:
        raise ValueError("need at least two points")
    da = a - a.mean()
    db = b - b.mean()
    ssa = float(np.dot(da, da))
    ssb = float(np.dot(db, db))
    if ssa == 0 or ssb == 0:
        raise ValueError("degenerate series")
    r = float(np.dot(da, db)) / np.sqrt(ssa * ssb)
    return float(np.clip(r, -1.0, 1.0))


@dataclass
class MetricBundle:
    """Per-experiment summary; scalar fields are arithmetic means over runs."""

    mae_energy: float
    mae_bill: float
    corr_masked_vs_original: float
    leak_fraction: float
    per_run: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.mae_energy < 0 or self.mae_bill < 0:
            raise ValueError("relative MAE must be non-negative")
        if abs(self.corr_masked_vs_original) > 1:
            raise ValueError("correlation outside [-1, 1]")

    @classmethod
    def average(cls, runs: list[dict]) -> "MetricBundle":
        if not runs:
            raise ValueError("no runs to average")
        keys = ("mae_energy", "mae_bill", "corr_masked_vs_original", "leak_fraction")
        means = {k: float(np.mean([r[k] for r in runs])) for k in keys}
        return cls(**means, per_run=[dict(r) for r in runs])

    def to_dict(self) -> dict:
        return {
            "mae_energy": self.mae_energy,
            "mae_bill": self.mae_bill,
            "corr_masked_vs_original": self.corr_masked_vs_original,
            "leak_fraction": self.leak_fraction,
            "per_run": self.per_run,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricBundle":
        return cls(
            mae_energy=data["mae_energy"],
            mae_bill=data["mae_bill"],
            corr_masked_vs_original=data["corr_masked_vs_original"],
            leak_fraction=data["leak_fraction"],
            per_run=list(data.get("per_run", [])),
        )
