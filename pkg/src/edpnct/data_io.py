"""Energy traces: CSV ingestion, synthetic households, report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from edpnct import rng as rngmod

INSTANTS_PER_DAY = 144
GRANULARITY_MINUTES = 10

LOAD_COLUMNS = ["instant", "masked_sum", "reported_noise", "recovered_load", "masters_missing"]
BILL_COLUMNS = ["meter_id", "period", "masked_total", "base", "surcharge", "correction", "total"]
ATTACK_COLUMNS = ["attack", "param", "meter_id", "metric", "value"]


@dataclass
class EnergyTrace:
    """N x T matrix of non-negative kWh readings, one row per meter."""

    values: np.ndarray
    meter_ids: list[int] = field(default_factory=list)
    granularity: int = GRANULARITY_MINUTES

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("malformed trace")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("invalid reading")
        if not self.meter_ids:
            self.meter_ids = list(range(self.values.shape[0]))
        if len(self.meter_ids) != self.values.shape[0]:
            raise ValueError("malformed trace")

    @property
    def n_meters(self) -> int:
        return self.values.shape[0]

    @property
    def n_instants(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SynthProfileSpec:
    """Shape of one synthetic household; amplitudes in kWh per 10-minute slot."""

    base_load: float = 0.04
    morning_peak: float = 0.12
    morning_hour: float = 7.5
    evening_peak: float = 0.25
    evening_hour: float = 19.0
    weekend_factor: float = 1.15
    jitter: float = 0.0
    # short high-power appliance bursts (kettle, shower, oven)
    event_rate: float = 0.0
    event_kwh: float = 0.0

    def __post_init__(self):
        amplitudes = (self.base_load, self.morning_peak, self.evening_peak, self.event_kwh)
        if min(amplitudes) < 0 or self.weekend_factor < 0 or self.event_rate < 0:
            raise ValueError("amplitudes must be non-negative")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")


def draw_profile_spec(rng: np.random.Generator) -> SynthProfileSpec:
    return SynthProfileSpec(
        base_load=rng.uniform(0.02, 0.06),
        morning_peak=rng.uniform(0.04, 0.20),
        morning_hour=rng.normal(7.5, 0.75),
        evening_peak=rng.uniform(0.10, 0.35),
        evening_hour=rng.normal(19.0, 1.0),
        weekend_factor=rng.uniform(1.0, 1.3),
        jitter=rng.uniform(0.1, 0.5),
        event_rate=rng.uniform(0.5, 3.0),
        event_kwh=rng.uniform(0.3, 1.5),
    )


def daily_shape(spec: SynthProfileSpec) -> np.ndarray:
    hours = (np.arange(INSTANTS_PER_DAY) + 0.5) / 6.0
    return (
        spec.base_load
        + spec.morning_peak * np.exp(-0.5 * (hours - spec.morning_hour) ** 2)
        + spec.evening_peak * np.exp(-0.5 * ((hours - spec.evening_hour) / 1.5) ** 2)
    )


def synth_profile(spec: SynthProfileSpec, n_days: int, rng: np.random.Generator) -> np.ndarray:
    day = daily_shape(spec)
    weekday = np.arange(n_days) % 7
    factors = np.where(weekday >= 5, spec.weekend_factor, 1.0)
    profile = (factors[:, None] * day[None, :]).ravel()
    if spec.jitter > 0:
        profile = profile * (1.0 + spec.jitter * rng.uniform(-1.0, 1.0, size=profile.shape))
    if spec.event_rate > 0 and spec.event_kwh > 0:
        n_events = rng.poisson(spec.event_rate * n_days)
        slots = rng.integers(0, profile.shape[0], size=n_events)
        np.add.at(profile, slots, spec.event_kwh * rng.uniform(0.5, 1.0, size=n_events))
    return profile


def synth_trace(n_meters: int, n_days: int, seed: int, spec: SynthProfileSpec | None = None) -> EnergyTrace:
    """Synthetic area of ``n_meters`` households, 144 readings per day.

    Each meter draws its own :class:`SynthProfileSpec` unless ``spec`` pins one
    for all. Deterministic in ``seed``.
    """
    if n_meters < 1 or n_days < 1:
        raise ValueError("need at least one meter and one day")
    source = rngmod.RandomSource(seed)
    rows = []
    for i in range(n_meters):
        gen = source.stream(rngmod.SYNTH, i)
        rows.append(synth_profile(spec or draw_profile_spec(gen), n_days, gen))
    return EnergyTrace(np.vstack(rows))


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _data_rows(handle) -> Iterable[list[str]]:
    for row in csv.reader(handle):
        if not row or row[0].startswith("#"):
            continue
        yield row


def write_trace(trace: EnergyTrace, path, seed: int | None = None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["meter_id", *(f"t{k}" for k in range(trace.n_instants))])
        for mid, row in zip(trace.meter_ids, trace.values):
            w.writerow([mid, *map(_fmt, row)])
    return path


def load_trace(path) -> EnergyTrace:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trace file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(_data_rows(fh))
    if not rows or rows[0][0] != "meter_id":
        raise ValueError("malformed trace: missing meter_id header")
    width = len(rows[0]) - 1
    ids, values = [], []
    for row in rows[1:]:
        if len(row) - 1 != width:
            raise ValueError("malformed trace")
        ids.append(int(row[0]))
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError:
            raise ValueError("malformed trace") from None
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ValueError("invalid reading")
        values.append(vals)
    if not values:
        raise ValueError("malformed trace: no meters")
    return EnergyTrace(np.array(values), meter_ids=ids)


def _write_csv(path: Path, columns: list[str], rows: Iterable[Iterable], seed: int | None) -> Path:
    with path.open("w", newline="") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict[str, str]]:
    """Rows of a report CSV as dicts, skipping ``#`` comment lines."""
    with Path(path).open(newline="") as fh:
        rows = list(_data_rows(fh))
    if not rows:
        return []
    header, *body = rows
    return [dict(zip(header, r)) for r in body]


def write_reports(
    out_dir,
    loads=(),
    bills=(),
    attacks=(),
    metrics=None,
    seed: int | None = None,
) -> dict[str, Path]:
    """Write load.csv, bills.csv, attacks.csv and metrics.json into ``out_dir``.

    ``attacks`` items are ``(attack, param, meter_id, metric, value)`` tuples or
    objects with those attributes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "load": _write_csv(
            out / "load.csv",
            LOAD_COLUMNS,
            (
                (r.instant, r.masked_sum, r.reported_noise_sum, r.recovered_load, r.masters_missing)
                for r in loads
            ),
            seed,
        ),
        "bills": _write_csv(
            out / "bills.csv",
            BILL_COLUMNS,
            (
                (
                    b.meter_id,
                    b.period,
                    b.masked_total,
                    b.base_bill,
                    b.surcharge_bill,
                    b.error_correction_applied,
                    b.total_bill,
                )
                for b in bills
            ),
            seed,
        ),
        "attacks": _write_csv(out / "attacks.csv", ATTACK_COLUMNS, (_attack_row(a) for a in attacks), seed),
    }
    doc = metrics.to_dict() if hasattr(metrics, "to_dict") else dict(metrics or {})
    if seed is not None:
        doc = {"seed": seed, **doc}
    metrics_path = out / "metrics.json"
    metrics_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    paths["metrics"] = metrics_path
    return paths


def _attack_row(item) -> tuple:
    if isinstance(item, (tuple, list)):
        return tuple(item)
    return (item.attack, item.param, item.meter_id, item.metric, item.value)
