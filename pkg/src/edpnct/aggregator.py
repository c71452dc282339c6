"""Untrusted aggregator: area load recovery and surcharge-aware billing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class Tariff:
    unit_price: float = 10.0
    surcharge_price: float = 20.0
    max_allowed_units: float = 5500.0

    def __post_init__(self):
        if min(self.unit_price, self.surcharge_price, self.max_allowed_units) <= 0:
            raise ValueError("tariff values must be strictly positive")
        if self.surcharge_price < self.unit_price:
            raise ValueError("surcharge_price must be at least unit_price")

    def price(self, units: float) -> float:
        """Bill for ``units`` kWh with no correction; negative usage bills as 0."""
        if units <= 0:
            return 0.0
        if units >= self.max_allowed_units:
            return (
                self.max_allowed_units * self.unit_price
                + (units - self.max_allowed_units) * self.surcharge_price
            )
        return units * self.unit_price


@dataclass(frozen=True)
class LoadReport:
    instant: int
    masked_sum: float
    reported_noise_sum: float
    recovered_load: float
    masters_missing: int


@dataclass(frozen=True)
class BillStatement:
    meter_id: int
    period: int
    masked_total: float
    base_bill: float
    surcharge_bill: float
    error_correction_applied: float
    total_bill: float
    surcharge_units: float
    # currency owed back on the next bill when masked_total < 0 (negative credit)
    carried_forward: float = 0.0


@dataclass(frozen=True)
class ErrorReport:
    meter_id: int
    period: int
    error_kwh: float
    surcharge_units: float


def aggregate_load(instant: int, masked_readings, master_reports: Sequence[float | None]) -> LoadReport:
    """Area load at one instant: sum of masked readings minus the reported noise.

    ``master_reports`` has one entry per selected master; ``None`` marks a
    report that never arrived.
    """
    masked = np.asarray(masked_readings, dtype=float)
    if masked.size == 0:
        raise ValueError("at least one masked reading required")
    received = [r for r in master_reports if r is not None and not np.isnan(r)]
    masked_sum = float(masked.sum())
    noise_sum = float(sum(received))
    return LoadReport(
        instant=instant,
        masked_sum=masked_sum,
        reported_noise_sum=noise_sum,
        recovered_load=masked_sum - noise_sum,
        masters_missing=len(master_reports) - len(received),
    )


def compute_bill(
    meter_id: int,
    masked_readings,
    tariff: Tariff,
    prev_error: float = 0.0,
    period: int = 0,
    period_instants: int | None = None,
) -> BillStatement:
    """Bill one meter for one billing period from its masked readings.

    ``prev_error`` (currency) is subtracted whichever band the bill falls in.
    """
    readings = np.asarray(masked_readings, dtype=float)
    if period_instants is not None and readings.shape[0] != period_instants:
        raise ValueError("partial billing period")
    total = float(readings.sum())

    carried = 0.0
    if total >= tariff.max_allowed_units:
        surcharge_units = total - tariff.max_allowed_units
        base = tariff.max_allowed_units * tariff.unit_price
        surcharge = surcharge_units * tariff.surcharge_price
    elif total >= 0:
        surcharge_units = 0.0
        base = total * tariff.unit_price
        surcharge = 0.0
    else:
        surcharge_units = 0.0
        base = surcharge = 0.0
        carried = total * tariff.unit_price
    return BillStatement(
        meter_id=meter_id,
        period=period,
        masked_total=total,
        base_bill=base,
        surcharge_bill=surcharge,
        error_correction_applied=float(prev_error),
        total_bill=base + surcharge - prev_error,
        surcharge_units=surcharge_units,
        carried_forward=carried,
    )


def price_error(error_kwh: float, surcharge_units: float, tariff: Tariff) -> float:
    """Currency value of a reported kWh error.

    The part inside the surcharge band is priced at the surcharge rate, any
    excess at the unit rate. Sign follows ``error_kwh``.
    """
    magnitude = abs(error_kwh)
    in_band = min(magnitude, max(surcharge_units, 0.0))
    value = in_band * tariff.surcharge_price + (magnitude - in_band) * tariff.unit_price
    return value if error_kwh >= 0 else -value


def settle_error(
    reports: Iterable[ErrorReport],
    tariff: Tariff,
    carried: Mapping[int, float] | None = None,
) -> dict[int, float]:
    """Per-meter currency corrections to subtract from the next bill."""
    seen: set[tuple[int, int]] = set()
    corrections: dict[int, float] = dict(carried or {})
    for rep in reports:
        key = (rep.meter_id, rep.period)
        if key in seen:
            raise ValueError("duplicate error report")
        seen.add(key)
        corrections[rep.meter_id] = corrections.get(rep.meter_id, 0.0) + price_error(
            rep.error_kwh, rep.surcharge_units, tariff
        )
    return corrections
