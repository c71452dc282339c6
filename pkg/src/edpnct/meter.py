"""Smart meter side of the noise-cancellation protocol.

A meter adds fresh noise at every instant and subtracts, FIFO, the noise it
added during the previous cancellation period. The net noise of each instant
is split into one share per master of that instant.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from edpnct.noise import PrivacyParams, sample_meter_noise, split_noise


class PeriodModel(enum.IntEnum):
    """Cancellation period, valued in 10-minute instants."""

    HOURLY = 6
    DAILY = 144
    WEEKLY = 1008

    @classmethod
    def parse(cls, value) -> "PeriodModel":
        if isinstance(value, str) and not value.isdigit():
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown period model {value!r}") from None
        return cls(int(value))


@dataclass
class MeterState:
    meter_id: int
    period_model: PeriodModel = PeriodModel.HOURLY
    queue_current: deque = field(default_factory=deque)
    queue_previous: deque = field(default_factory=deque)
    # net noise accumulated over the billing period in progress
    billing_noise: float = 0.0
    residual_noise_last_period: float = 0.0
    reported_error_prev_bill: float = 0.0
    step_in_period: int = 0

    @property
    def instants_per_period(self) -> int:
        return int(self.period_model)

    def close_billing_period(self) -> float:
        """Freeze the billing-period noise sum as the residual to report on."""
        self.residual_noise_last_period = self.billing_noise
        self.billing_noise = 0.0
        return self.residual_noise_last_period


@dataclass(frozen=True)
class MaskedReading:
    meter_id: int
    instant: int
    value: float


@dataclass(frozen=True)
class NoiseShareMessage:
    from_meter: int
    to_master: int
    instant: int
    share: float


@dataclass(frozen=True)
class MeterRandom:
    """The two generators a meter draws from: its noise and its share blinds."""

    noise: np.random.Generator
    split: np.random.Generator


def meter_step(
    state: MeterState,
    x_t: float,
    masters: Sequence[int],
    params: PrivacyParams,
    rng: MeterRandom,
    instant: int = 0,
    noise: float | None = None,
):
    """Advance one meter by one instant.

    Returns ``(MaskedReading, shares, state)``. ``shares`` holds one message per
    master, in the order of ``masters``; the one addressed to the meter itself
    (when it is a master) is kept rather than sent, but still returned so the
    caller can account for it. ``noise`` overrides the drawn value (replay).
    """
    if x_t < 0:
        raise ValueError("consumption cannot be negative")
    if not masters:
        raise ValueError("at least one master required")
    if len(set(masters)) != len(masters):
        raise ValueError("masters must be distinct")

    n_t = sample_meter_noise(params, rng.noise) if noise is None else float(noise)
    state.queue_current.append(n_t)
    nc_prev = state.queue_previous.popleft() if state.queue_previous else 0.0
    net = n_t - nc_prev
    reading = MaskedReading(state.meter_id, instant, x_t + n_t - nc_prev)

    shares = split_noise(net, len(masters), rng.split, params.scale)
    messages = [
        NoiseShareMessage(state.meter_id, master, instant, share)
        for master, share in zip(masters, shares)
    ]
    state.billing_noise += net

    state.step_in_period += 1
    if state.step_in_period == state.instants_per_period:
        state.queue_previous = state.queue_current
        state.queue_current = deque()
        state.step_in_period = 0
    return reading, messages, state


def master_collect(master_id: int, shares: Iterable[NoiseShareMessage], own_share: float = 0.0) -> float:
    """Sum of member shares addressed to ``master_id`` plus the master's own contribution."""
    total = float(own_share)
    instant = None
    for msg in shares:
        if msg.to_master != master_id:
            raise ValueError(f"share for master {msg.to_master} delivered to {master_id}")
        if instant is None:
            instant = msg.instant
        elif msg.instant != instant:
            raise ValueError("shares from different instants")
        total += msg.share
    return total


def billing_error(residual: float, surcharge_units: float) -> float:
    """kWh of the last bill attributable to noise, signed like ``residual``.

    Zero unless a surcharge was applied; capped in magnitude by the surcharge units.
    """
    if surcharge_units < 0:
        raise ValueError("surcharge_units must be non-negative")
    if surcharge_units == 0:
        return 0.0
    if surcharge_units >= abs(residual):
        return float(residual)
    return math.copysign(surcharge_units, residual)


def report_billing_error(state: MeterState, surcharge_units: float) -> float:
    error = billing_error(state.residual_noise_last_period, surcharge_units)
    state.reported_error_prev_bill = error
    return error
