"""Adversary toolkit: negative-noise clamping, moving-average filtering, collusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from edpnct.metrics import pearson_corr


@dataclass(frozen=True)
class FilterProfile:
    meter_id: int | None
    P: int
    values: np.ndarray


@dataclass(frozen=True)
class AttackReport:
    """One row of attacks.csv."""

    attack: str
    param: float | int | str
    meter_id: int | str
    metric: str
    value: float


@dataclass
class LeakStats:
    reconstructed_points: int
    honest_points_total: int
    leak_fraction: float
    leaked_instants: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    # max |reconstructed - true| over leaked points; 0 when nothing leaked
    max_reconstruction_error: float = 0.0


@dataclass(frozen=True)
class CollusionScenario:
    malicious_set: frozenset
    transcript: object

    def __init__(self, malicious_set: Iterable[int], transcript):
        ids = frozenset(int(v) for v in malicious_set)
        n = transcript.masked.shape[0]
        if any(not 0 <= v < n for v in ids):
            raise ValueError("malicious meter id out of range")
        object.__setattr__(self, "malicious_set", ids)
        object.__setattr__(self, "transcript", transcript)


def remove_negative_noise(profile) -> np.ndarray:
    """Clamp masked readings at zero; consumption is never negative."""
    return np.maximum(np.asarray(profile, dtype=float), 0.0)


def filtering_attack(profile, P: int, meter_id: int | None = None, literal_divisor: bool = False) -> FilterProfile:
    """Centered moving average of half-width ``P``; the first and last ``P`` values pass through.

    ``literal_divisor`` divides the ``2P+1``-term window sum by ``P`` instead of
    ``2P+1``, scaling the interior by ``(2P+1)/P`` while the ends stay as-is.
    """
    x = np.asarray(profile, dtype=float)
    T = x.shape[0]
    if P < 1:
        raise ValueError("P must be at least 1")
    if 2 * P + 1 > T:
        raise ValueError("window exceeds profile")
    csum = np.concatenate(([0.0], np.cumsum(x)))
    width = 2 * P + 1
    window_sums = csum[width:] - csum[:-width]
    out = x.copy()
    out[P : T - P] = window_sums / (P if literal_divisor else width)
    return FilterProfile(meter_id, P, out)


def best_fit_P(masked, original, p_range: Iterable[int], literal_divisor: bool = False) -> tuple[int, float]:
    """P whose filtered profile correlates best with ``original``; ties go to the smaller P."""
    best_p, best_r = None, -math.inf
    for P in sorted(set(p_range)):
        r = pearson_corr(filtering_attack(masked, P, literal_divisor=literal_divisor).values, original)
        if r > best_r:
            best_p, best_r = P, r
    if best_p is None:
        raise ValueError("empty P range")
    return best_p, best_r


def choose_malicious(n_meters: int, c: int, rng: np.random.Generator) -> frozenset:
    """First ``c`` meters of a random permutation; sets for growing ``c`` are nested."""
    if not 0 <= c <= n_meters:
        raise ValueError("malicious count out of range")
    return frozenset(int(v) for v in rng.permutation(n_meters)[:c])


def collusion_attack(scenario: CollusionScenario) -> LeakStats:
    """Reconstruct honest readings at every instant whose masters all collude.

    At such an instant the colluding masters jointly hold every share each
    honest meter sent, hence its net noise, and the aggregator's masked value
    minus that noise is the true reading.
    """
    tr = scenario.transcript
    n, T = tr.masked.shape
    malicious = np.zeros(n, dtype=bool)
    malicious[list(scenario.malicious_set)] = True
    c = int(malicious.sum())
    honest_total = (n - c) * T

    leaked = np.flatnonzero(malicious[tr.masters].all(axis=1))
    honest = np.flatnonzero(~malicious)
    if honest.size == 0:
        # nobody left to spy on: report the share of instants fully covered
        return LeakStats(0, 0, leaked.size / T, leaked)
    if leaked.size == 0:
        return LeakStats(0, honest_total, 0.0, leaked)

    if tr.shares is not None:
        known_noise = tr.shares[np.ix_(honest, leaked)].sum(axis=2)
    else:
        known_noise = tr.net_noise[np.ix_(honest, leaked)]
    recon = tr.masked[np.ix_(honest, leaked)] - known_noise
    err = float(np.max(np.abs(recon - tr.trace.values[np.ix_(honest, leaked)])))
    points = honest.size * leaked.size
    return LeakStats(points, honest_total, points / honest_total, leaked, err)


def analytic_leak(n_meters: int, c: int, m: int) -> float:
    """Probability that a uniform m-subset of masters is entirely malicious."""
    if not 0 <= c <= n_meters or not 1 <= m <= n_meters:
        raise ValueError("need 0 <= c <= N and 1 <= m <= N")
    if c < m:
        return 0.0
    return math.comb(c, m) / math.comb(n_meters, m)
