"""Discrete-time driver: master selection, share routing, load recovery, billing, experiments.

``run_simulation`` is the fast path: each meter's whole noise stream is drawn
at once and the FIFO cancellation becomes a shift by one period.
``simulate_stepwise`` walks the same protocol instant by instant through
:mod:`edpnct.meter`; both consume the same random substreams, so their
transcripts agree.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from edpnct import rng as rngmod
from edpnct.aggregator import (
    BillStatement,
    ErrorReport,
    LoadReport,
    Tariff,
    aggregate_load,
    compute_bill,
    settle_error,
)
from edpnct.attacks import CollusionScenario, choose_malicious, collusion_attack
from edpnct.data_io import INSTANTS_PER_DAY, EnergyTrace
from edpnct.meter import (
    MeterRandom,
    MeterState,
    PeriodModel,
    billing_error,
    master_collect,
    meter_step,
    report_billing_error,
)
from edpnct.metrics import MetricBundle, mae, pearson_corr
from edpnct.noise import PrivacyParams, compute_sensitivity, sample_meter_noise, split_noise_block

log = logging.getLogger(__name__)

MONTH_INSTANTS = 30 * INSTANTS_PER_DAY


@dataclass(frozen=True)
class SimConfig:
    n_meters: int = 200
    m_masters: int = 1
    instants_per_period: int = PeriodModel.HOURLY
    n_periods: int = 1
    epsilon: float = 1.0
    tariff: Tariff = field(default_factory=Tariff)
    seed: int = 0
    master_drop_probability: float = 0.0
    runs: int = 1
    # billing period length; n_periods counts billing periods
    billing_instants: int = MONTH_INSTANTS
    noiseless: bool = False
    record_shares: bool = True
    malicious_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "instants_per_period", int(PeriodModel.parse(self.instants_per_period)))
        if self.n_meters < 1:
            raise ValueError("n_meters must be at least 1")
        if not 1 <= self.m_masters <= self.n_meters:
            raise ValueError("m_masters must lie in [1, n_meters]")
        if self.n_periods < 1:
            raise ValueError("n_periods must be at least 1")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.billing_instants < 1:
            raise ValueError("billing_instants must be at least 1")
        if not 0.0 <= self.master_drop_probability <= 1.0:
            raise ValueError("master_drop_probability must lie in [0, 1]")
        if not 0 <= self.malicious_count <= self.n_meters:
            raise ValueError("malicious_count must lie in [0, n_meters]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def n_instants(self) -> int:
        return self.n_periods * self.billing_instants

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tariff"] = dataclasses.asdict(self.tariff)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict = {}
        tariff: dict = {}
        for key, value in data.items():
            if key == "tariff" and isinstance(value, dict):
                for tk, tv in value.items():
                    tariff[_tariff_key(f"tariff.{tk}")] = float(tv)
                continue
            if key.startswith("tariff."):
                tariff[_tariff_key(key)] = float(value)
                continue
            if key not in known:
                raise ValueError(f"unknown config key: {key}")
            kwargs[key] = _coerce(key, known[key].type, value)
        if tariff:
            kwargs["tariff"] = Tariff(**tariff)
        return cls(**kwargs)


_TARIFF_FIELDS = {f.name for f in dataclasses.fields(Tariff)}


def _tariff_key(key: str) -> str:
    name = key.split(".", 1)[1]
    if name not in _TARIFF_FIELDS:
        raise ValueError(f"unknown config key: {key}")
    return name


def _coerce(key: str, annotation, value):
    kind = str(annotation)
    try:
        if kind == "bool":
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError
                return low in ("true", "1", "yes")
            return bool(value)
        if kind == "int":
            if key == "instants_per_period":
                return int(PeriodModel.parse(value.strip() if isinstance(value, str) else value))
            return int(value)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError):
        raise ValueError(f"invalid value for config key {key}: {value!r}") from None
    return value


def load_config(path) -> SimConfig:
    """Read a SimConfig from JSON (``.json``) or flat ``key=value`` lines."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        return SimConfig.from_dict(json.loads(text))
    data = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        data[key] = value
    return SimConfig.from_dict(data)


def privacy_params(config: SimConfig, trace: EnergyTrace) -> PrivacyParams:
    if config.noiseless:
        return PrivacyParams.noiseless(config.n_meters)
    return PrivacyParams.from_sensitivity(compute_sensitivity(trace), config.epsilon, config.n_meters)


def select_masters(n_meters: int, m_masters: int, instant: int, source: rngmod.RandomSource) -> list[int]:
    """Uniformly random ``m_masters``-subset of meter ids for one instant.

    Taken as a prefix of a per-instant random permutation, so for a fixed seed
    the master set for ``m`` is contained in the one for ``m + 1``.
    """
    if m_masters > n_meters:
        raise ValueError("more masters than meters")
    if m_masters < 1:
        raise ValueError("at least one master required")
    gen = source.stream(rngmod.MASTERS, instant)
    return [int(v) for v in gen.permutation(n_meters)[:m_masters]]


@dataclass
class SimTranscript:
    """Everything observable (and the ground truth) from one simulation run.

    ``reports[t, k]`` is what master ``masters[t, k]`` sent at instant ``t``;
    it is meaningless where ``dropped[t, k]`` is set. ``shares[i, t, k]`` is the
    share meter ``i`` addressed to ``masters[t, k]``.
    """

    config: SimConfig
    params: PrivacyParams
    trace: EnergyTrace
    masked: np.ndarray
    noise: np.ndarray
    net_noise: np.ndarray
    masters: np.ndarray
    dropped: np.ndarray
    reports: np.ndarray
    shares: np.ndarray | None
    loads: list[LoadReport]
    bills: list[BillStatement]
    error_reports: list[ErrorReport]

    @property
    def n_meters(self) -> int:
        return self.masked.shape[0]

    @property
    def n_instants(self) -> int:
        return self.masked.shape[1]

    def true_bills(self) -> np.ndarray:
        """Ground-truth bills, shape (n_periods, n_meters), no corrections."""
        totals = period_totals(self.trace.values, self.config.billing_instants)
        tariff = self.config.tariff
        return np.vectorize(tariff.price, otypes=[float])(totals)

    def charged_bills(self) -> np.ndarray:
        out = np.empty((self.config.n_periods, self.n_meters))
        for b in self.bills:
            out[b.period, b.meter_id] = b.total_bill
        return out

    def equals(self, other: "SimTranscript") -> bool:
        arrays = ("masked", "noise", "net_noise", "masters", "dropped", "reports")
        same = all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
        if (self.shares is None) != (other.shares is None):
            return False
        if self.shares is not None:
            same = same and np.array_equal(self.shares, other.shares)
        return same and self.loads == other.loads and self.bills == other.bills


def period_totals(values: np.ndarray, billing_instants: int) -> np.ndarray:
    n, t = values.shape
    return values.reshape(n, t // billing_instants, billing_instants).sum(axis=2).T


def _check_dims(config: SimConfig, trace: EnergyTrace):
    if trace.n_meters != config.n_meters or trace.n_instants != config.n_instants:
        raise ValueError(
            f"trace is {trace.n_meters}x{trace.n_instants}, config expects "
            f"{config.n_meters}x{config.n_instants}"
        )


def _draw_drops(config: SimConfig, source: rngmod.RandomSource, n_instants: int) -> np.ndarray:
    shape = (n_instants, config.m_masters)
    if config.master_drop_probability == 0:
        return np.zeros(shape, dtype=bool)
    return source.stream(rngmod.DROP).random(shape) < config.master_drop_probability


def _load_reports(masked: np.ndarray, reports: np.ndarray, dropped: np.ndarray) -> list[LoadReport]:
    out = []
    for t in range(masked.shape[1]):
        received = [None if d else float(r) for r, d in zip(reports[t], dropped[t])]
        out.append(aggregate_load(t, masked[:, t], received))
    return out


def _billing(config: SimConfig, masked: np.ndarray, net_noise: np.ndarray):
    """Bill every meter for every billing period with error settlement in between."""
    bills: list[BillStatement] = []
    errors: list[ErrorReport] = []
    corrections: dict[int, float] = {}
    b = config.billing_instants
    for k in range(config.n_periods):
        window = slice(k * b, (k + 1) * b)
        period_reports = []
        carried = {}
        for i in range(masked.shape[0]):
            bill = compute_bill(i, masked[i, window], config.tariff, corrections.get(i, 0.0), k, b)
            bills.append(bill)
            if bill.carried_forward:
                carried[i] = bill.carried_forward
            residual = float(net_noise[i, window].sum())
            period_reports.append(ErrorReport(i, k, billing_error(residual, bill.surcharge_units), bill.surcharge_units))
        errors.extend(period_reports)
        corrections = settle_error(period_reports, config.tariff, carried)
    return bills, errors


def run_simulation(config: SimConfig, trace: EnergyTrace) -> SimTranscript:
    _check_dims(config, trace)
    source = rngmod.RandomSource(config.seed)
    params = privacy_params(config, trace)
    n, t_total = trace.values.shape
    m = config.m_masters
    period = config.instants_per_period

    masters = np.array([select_masters(n, m, t, source) for t in range(t_total)], dtype=np.int64)
    dropped = _draw_drops(config, source, t_total)

    noise = np.empty((n, t_total))
    net = np.empty((n, t_total))
    masked = np.empty((n, t_total))
    reports = np.zeros((t_total, m))
    shares = np.empty((n, t_total, m)) if config.record_shares else None
    for i in range(n):
        n_i = sample_meter_noise(params, source.stream(rngmod.NOISE, i), size=t_total)
        popped = np.zeros(t_total)
        if t_total > period:
            popped[period:] = n_i[: t_total - period]
        noise[i] = n_i
        masked[i] = trace.values[i] + n_i - popped
        net[i] = n_i - popped
        sh = split_noise_block(net[i], m, source.stream(rngmod.SPLIT, i), params.scale)
        reports += sh
        if shares is not None:
            shares[i] = sh

    loads = _load_reports(masked, reports, dropped)
    bills, errors = _billing(config, masked, net)
    return SimTranscript(
        config=config,
        params=params,
        trace=trace,
        masked=masked,
        noise=noise,
        net_noise=net,
        masters=masters,
        dropped=dropped,
        reports=reports,
        shares=shares,
        loads=loads,
        bills=bills,
        error_reports=errors,
    )


def simulate_stepwise(config: SimConfig, trace: EnergyTrace) -> SimTranscript:
    """Instant-by-instant protocol replay through MeterState objects.

    Slow; meant for small configurations and for checking :func:`run_simulation`.
    """
    _check_dims(config, trace)
    source = rngmod.RandomSource(config.seed)
    params = privacy_params(config, trace)
    n, t_total = trace.values.shape
    m = config.m_masters
    model = PeriodModel(config.instants_per_period)

    states = [MeterState(i, model) for i in range(n)]
    gens = [MeterRandom(source.stream(rngmod.NOISE, i), source.stream(rngmod.SPLIT, i)) for i in range(n)]
    masters = np.array([select_masters(n, m, t, source) for t in range(t_total)], dtype=np.int64)
    dropped = _draw_drops(config, source, t_total)

    noise = np.empty((n, t_total))
    net = np.empty((n, t_total))
    masked = np.empty((n, t_total))
    reports = np.zeros((t_total, m))
    shares = np.empty((n, t_total, m))
    loads: list[LoadReport] = []
    bills: list[BillStatement] = []
    errors: list[ErrorReport] = []
    corrections: dict[int, float] = {}

    for t in range(t_total):
        group = [int(v) for v in masters[t]]
        inbox: dict[int, list] = {mid: [] for mid in group}
        own: dict[int, float] = {}
        for i, state in enumerate(states):
            before = len(state.queue_previous)
            prev_head = state.queue_previous[0] if before else 0.0
            reading, messages, _ = meter_step(state, float(trace.values[i, t]), group, params, gens[i], t)
            masked[i, t] = reading.value
            noise[i, t] = state.queue_current[-1] if state.queue_current else state.queue_previous[-1]
            net[i, t] = noise[i, t] - prev_head
            for k, msg in enumerate(messages):
                shares[i, t, k] = msg.share
                if msg.to_master == i:
                    own[i] = msg.share
                else:
                    inbox[msg.to_master].append(msg)
        # barrier: every share of instant t exists before any master reports
        for k, mid in enumerate(group):
            reports[t, k] = master_collect(mid, inbox[mid], own.get(mid, 0.0))
        received = [None if dropped[t, k] else float(reports[t, k]) for k in range(m)]
        loads.append(aggregate_load(t, masked[:, t], received))

        if (t + 1) % config.billing_instants == 0:
            k_period = t // config.billing_instants
            window = slice(t + 1 - config.billing_instants, t + 1)
            period_reports, carried = [], {}
            for i, state in enumerate(states):
                bill = compute_bill(
                    i, masked[i, window], config.tariff, corrections.get(i, 0.0), k_period, config.billing_instants
                )
                bills.append(bill)
                if bill.carried_forward:
                    carried[i] = bill.carried_forward
                state.close_billing_period()
                period_reports.append(
                    ErrorReport(i, k_period, report_billing_error(state, bill.surcharge_units), bill.surcharge_units)
                )
            errors.extend(period_reports)
            corrections = settle_error(period_reports, config.tariff, carried)

    return SimTranscript(
        config=config,
        params=params,
        trace=trace,
        masked=masked,
        noise=noise,
        net_noise=net,
        masters=masters,
        dropped=dropped,
        reports=reports,
        shares=shares,
        loads=loads,
        bills=bills,
        error_reports=errors,
    )


def run_metrics(transcript: SimTranscript, malicious_count: int | None = None) -> dict:
    """Relative MAE, masked-vs-original daily correlation and collusion leak for one run."""
    config = transcript.config
    x_tot = period_totals(transcript.trace.values, config.billing_instants)
    X_tot = period_totals(transcript.masked, config.billing_instants)
    energy = [mae(a, b) for a, b in zip(x_tot.ravel(), X_tot.ravel()) if a > 0]
    true_bills = transcript.true_bills()
    charged = transcript.charged_bills()
    bill = [mae(a, b) for a, b in zip(true_bills.ravel(), charged.ravel()) if a > 0]

    source = rngmod.RandomSource(config.seed)
    probe = source.stream(rngmod.PROBE)
    days = transcript.n_instants // INSTANTS_PER_DAY
    house = int(probe.integers(transcript.n_meters))
    day = int(probe.integers(days)) if days else 0
    window = slice(day * INSTANTS_PER_DAY, (day + 1) * INSTANTS_PER_DAY)
    try:
        corr = pearson_corr(transcript.masked[house, window], transcript.trace.values[house, window])
    except ValueError:
        corr = 0.0

    c = config.malicious_count if malicious_count is None else malicious_count
    if c:
        malicious = choose_malicious(transcript.n_meters, c, source.stream(rngmod.MALICIOUS))
        leak = collusion_attack(CollusionScenario(malicious, transcript)).leak_fraction
    else:
        leak = 0.0
    return {
        "seed": config.seed,
        "mae_energy": float(np.mean(energy)) if energy else 0.0,
        "mae_bill": float(np.mean(bill)) if bill else 0.0,
        "corr_masked_vs_original": corr,
        "leak_fraction": leak,
        "probe_meter": house,
        "probe_day": day,
    }


def run_seeds(config: SimConfig) -> list[int]:
    source = rngmod.RandomSource(config.seed)
    return [source.child_seed(rngmod.RUN, r) for r in range(config.runs)]


def run_experiment(config: SimConfig, trace: EnergyTrace, malicious_count: int | None = None) -> MetricBundle:
    """Average per-run metrics over ``config.runs`` independently seeded simulations."""
    per_run = []
    for r, seed in enumerate(run_seeds(config)):
        transcript = run_simulation(config.replace(seed=seed), trace)
        metrics = run_metrics(transcript, malicious_count)
        metrics["run"] = r
        per_run.append(metrics)
        log.debug("run %d seed %d: %s", r, seed, metrics)
    return MetricBundle.average(per_run)


_ARRAYS = ("masked", "noise", "net_noise", "masters", "dropped", "reports")


def save_transcript(transcript: SimTranscript, path) -> Path:
    path = Path(path)
    arrays = {name: getattr(transcript, name) for name in _ARRAYS}
    if transcript.shares is not None:
        arrays["shares"] = transcript.shares
    arrays["trace"] = transcript.trace.values
    arrays["meter_ids"] = np.asarray(transcript.trace.meter_ids)
    meta = {"config": transcript.config.to_dict(), "params": dataclasses.asdict(transcript.params)}
    arrays["meta"] = np.array(json.dumps(meta))
    with path.open("wb") as fh:
        np.savez_compressed(fh, **arrays)
    return path


def load_transcript(path) -> SimTranscript:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"transcript not found: {path}")
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        config = SimConfig.from_dict(meta["config"])
        params = PrivacyParams(**meta["params"])
        arrays = {name: data[name] for name in _ARRAYS}
        shares = data["shares"] if "shares" in data.files else None
        trace = EnergyTrace(data["trace"], meter_ids=[int(v) for v in data["meter_ids"]])
    loads = _load_reports(arrays["masked"], arrays["reports"], arrays["dropped"])
    bills, errors = _billing(config, arrays["masked"], arrays["net_noise"])
    return SimTranscript(
        config=config,
        params=params,
        trace=trace,
        shares=shares,
        loads=loads,
        bills=bills,
        error_reports=errors,
        **arrays,
    )
