"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line that pytest prints in an
"acceptance criteria" section at the end of the run.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from edpnct import rng as rngmod
from edpnct.attacks import analytic_leak, best_fit_P
from edpnct.data_io import EnergyTrace, synth_trace
from edpnct.engine import (
    SimConfig,
    period_totals,
    privacy_params,
    run_experiment,
    run_metrics,
    run_seeds,
    run_simulation,
)
from edpnct.meter import PeriodModel
from edpnct.metrics import pearson_corr
from edpnct.noise import compute_sensitivity, sample_meter_noise

pytestmark = pytest.mark.slow

MONTH = 30
RUNS = 20


@pytest.fixture(scope="module")
def area():
    return synth_trace(200, MONTH, seed=2024)


def _leak_runs(config, trace, counts):
    """Per-run leak fractions for several malicious counts, one simulation per run."""
    out = {c: [] for c in counts}
    for seed in run_seeds(config):
        transcript = run_simulation(config.replace(seed=seed), trace)
        for c in counts:
            out[c].append(run_metrics(transcript, c)["leak_fraction"])
    return {c: np.array(v) for c, v in out.items()}


def _pooled_se(p, runs, instants):
    return math.sqrt(p * (1 - p) / (runs * instants))


def test_collusion_baseline(acceptance):
    start = time.perf_counter()
    trace = synth_trace(200, MONTH, seed=1)
    config = SimConfig(n_meters=200, m_masters=1, runs=RUNS, seed=1, record_shares=False)
    bundle = run_experiment(config, trace, malicious_count=20)
    elapsed = time.perf_counter() - start
    ok = abs(bundle.leak_fraction - 0.100) <= 0.015 and elapsed < 30
    assert acceptance(1, ok, f"m=1 c=20 mean leak {bundle.leak_fraction:.4f} (0.100 +- 0.015), {elapsed:.1f} s (< 30 s)")


@pytest.fixture(scope="module")
def four_masters(area):
    config = SimConfig(n_meters=200, m_masters=4, runs=RUNS, seed=2, record_shares=False)
    return _leak_runs(config, area, (50, 100))


def test_split_noise_resistance(four_masters, acceptance):
    oracle = math.comb(50, 4) / math.comb(200, 4)
    mean = four_masters[50].mean()
    se = _pooled_se(oracle, RUNS, MONTH * 144)
    ok = mean < 0.01 and abs(mean - oracle) <= 3 * se and abs(oracle - 0.00356) < 5e-5
    assert acceptance(2, ok, f"m=4 c=50 leak {mean:.5f} (< 0.01), oracle {oracle:.5f}, |diff| {abs(mean - oracle):.5f} <= 3 SE {3 * se:.5f}")


def test_epic_comparison_point(four_masters, acceptance):
    oracle = analytic_leak(200, 100, 4)
    mean = four_masters[100].mean()
    se = _pooled_se(oracle, RUNS, MONTH * 144)
    ok = abs(mean - oracle) <= 3 * se and abs(mean - 0.07) <= 0.015 and abs(oracle - 0.0606) < 5e-4
    assert acceptance(3, ok, f"m=4 c=100 leak {mean:.4f}, oracle {oracle:.4f} +- 3 SE {3 * se:.4f}, reported 0.07 +- 0.015")


def test_master_count_sufficiency(acceptance):
    trace = synth_trace(2000, MONTH, seed=4)
    config = SimConfig(n_meters=2000, m_masters=6, runs=RUNS, seed=4, record_shares=False)
    leaks = _leak_runs(config, trace, (800,))[800]
    oracle = analytic_leak(2000, 800, 6)
    ok = leaks.mean() < 0.005
    assert acceptance(4, ok, f"N=2000 m=6 c=800 leak {leaks.mean():.5f} (< 0.005), oracle {oracle:.5f}")


def test_noise_divisibility(area, acceptance):
    params = privacy_params(SimConfig(n_meters=200, epsilon=1.0), area)
    source = rngmod.RandomSource(5)
    total = np.zeros(10_000)
    for i in range(200):
        total += sample_meter_noise(params, source.stream(rngmod.NOISE, i), size=total.size)
    p = stats.kstest(total, "laplace", args=(0, params.scale)).pvalue
    assert acceptance(5, p > 0.01, f"sum of 200 meter noises vs Laplace(0, {params.scale:.3f}): KS p = {p:.3f} over 1e4 draws")


def test_load_identity(area, acceptance):
    config = SimConfig(n_meters=200, m_masters=3, seed=6, record_shares=False)
    truth = area.values.sum(axis=0)
    full = run_simulation(config, area)
    recovered = np.array([r.recovered_load for r in full.loads])
    worst = float(np.max(np.abs(recovered - truth)))

    dropped = run_simulation(config.replace(master_drop_probability=1.0), area)
    error = np.array([r.recovered_load for r in dropped.loads]) - truth
    lam = dropped.params.scale
    p_all = stats.kstest(error, "laplace", args=(0, lam)).pvalue
    period = config.instants_per_period
    # diagnostics: once cancellation starts the error is L_t - L_{t-period}
    p_diff = stats.kstest(error[period:], _laplace_difference_cdf(lam)).pvalue
    ok = worst < 1e-6 and p_all > 0.01
    assert acceptance(
        6,
        ok,
        f"max |recovered - truth| {worst:.2e} (< 1e-6); all reports dropped: KS p vs Laplace(0, lam) = {p_all:.2e}"
        f" (needs > 0.01); KS p vs difference of two Laplace(lam) = {p_diff:.3f}",
    )


def _laplace_difference_cdf(lam):
    """CDF of A - B for independent A, B ~ Laplace(0, lam)."""

    def cdf(y):
        u = np.abs(np.asarray(y, dtype=float)) / lam
        tail = np.exp(-u) * (2 + u) / 4
        return np.where(np.asarray(y) >= 0, 1 - tail, tail)

    return cdf


def test_billing_residual_ordering(area, acceptance):
    models = (PeriodModel.HOURLY, PeriodModel.DAILY, PeriodModel.WEEKLY)
    base = SimConfig(n_meters=200, seed=7, runs=RUNS, record_shares=False)
    ordered = 0
    means = np.zeros(3)
    for seed in run_seeds(base):
        maes = [run_metrics(run_simulation(base.replace(seed=seed, instants_per_period=m), area))["mae_energy"] for m in models]
        means += np.array(maes) / RUNS
        ordered += maes[0] < maes[1] < maes[2]
    ok = ordered >= 18
    assert acceptance(
        7,
        ok,
        f"hourly < daily < weekly in {ordered}/20 runs (>= 18); mean relative MAE {means[0]:.4f} / {means[1]:.4f} / {means[2]:.4f}",
    )


def test_privacy_correlation(area, acceptance):
    config = SimConfig(n_meters=200, seed=8, runs=RUNS, record_shares=False)
    bundle = run_experiment(config, area)
    corrs = np.array([r["corr_masked_vs_original"] for r in bundle.per_run])
    below = int(np.sum(np.abs(corrs) < 0.3))
    ok = below >= 18
    assert acceptance(
        8,
        ok,
        f"|r| < 0.3 in {below}/20 runs (>= 18); median |r| {np.median(np.abs(corrs)):.3f}, lam = {compute_sensitivity(area.values):.3f}",
    )


def test_filtering_attack(area, acceptance):
    transcript = run_simulation(SimConfig(n_meters=200, seed=9, record_shares=False), area)
    day = slice(0, 144)
    improved, choices = [], []
    # every house's one-day profile; "8 of 10" is applied as a rate
    for house in range(200):
        masked = transcript.masked[house, day]
        original = area.values[house, day]
        P, r = best_fit_P(masked, original, range(1, 72))
        choices.append(P)
        improved.append(r > pearson_corr(masked, original))
    rate = float(np.mean(improved))
    ok = rate >= 0.8 and len(set(choices)) > 1
    assert acceptance(
        9,
        ok,
        f"filtering beats raw masked correlation for {sum(improved)}/200 houses ({rate:.1%}, needs >= 80%);"
        f" first 10 houses {sum(improved[:10])}/10 with best P {choices[:10]}; {len(set(choices))} distinct P values",
    )


def test_bill_convergence(acceptance):
    base = synth_trace(200, 3 * MONTH, seed=10).values
    # heavy users sit well inside the surcharge band, the rest well below it
    heavy = np.arange(200) < 100
    monthly = base.sum(axis=1, keepdims=True) / 3
    values = np.where(heavy[:, None], base * (12_000.0 / monthly), base)
    config = SimConfig(n_meters=200, n_periods=3, seed=10, record_shares=False)
    tr = run_simulation(config, EnergyTrace(values))
    tariff = config.tariff
    bi, dt = config.billing_instants, config.instants_per_period

    limit = tariff.max_allowed_units
    true_tot = period_totals(tr.trace.values, bi)
    masked_tot = period_totals(tr.masked, bi)
    inside = bool(
        np.all((true_tot[:, heavy] > limit) & (masked_tot[:, heavy] > limit))
        and np.all((true_tot[:, ~heavy] < limit) & (masked_tot[:, ~heavy] < limit) & (masked_tot[:, ~heavy] > 0))
    )

    cumulative = np.cumsum(tr.charged_bills() - tr.true_bills(), axis=0)
    worst, spreads = 0.0, []
    for k in range(3):
        residual = tr.net_noise[:, k * bi : (k + 1) * bi].sum(axis=1)
        last_noise = tr.noise[:, (k + 1) * bi - dt : (k + 1) * bi].sum(axis=1)
        # replayed from the noise logs: surcharge band pays the priced last residual,
        # the flat band keeps only the final uncancelled period of noise
        expected = np.where(heavy, tariff.surcharge_price * residual, tariff.unit_price * last_noise)
        worst = max(worst, float(np.max(np.abs(cumulative[k] - expected) / np.maximum(1.0, np.abs(expected)))))
        spreads.append(float(np.median(np.abs(cumulative[k]))))
    ok = inside and worst < 1e-9
    assert acceptance(
        10,
        ok,
        f"cumulative error after 1/2/3 periods equals the priced final residual (max rel dev {worst:.1e});"
        f" median |cumulative| {spreads[0]:.3g} / {spreads[1]:.3g} / {spreads[2]:.3g}",
    )


def _cli(*args):
    subprocess.run([sys.executable, "-m", "edpnct", *map(str, args)], check=True, capture_output=True)


def test_determinism(tmp_path, acceptance):
    trace = tmp_path / "trace.csv"
    _cli("gen-data", "--meters", 50, "--days", 2, "--seed", 11, "--out", trace)
    config = tmp_path / "sim.cfg"
    config.write_text("n_meters=50\nm_masters=2\nbilling_instants=144\nn_periods=2\nseed=11\nmalicious_count=10\nruns=2\n")
    names = []
    for run in ("a", "b"):
        out = tmp_path / run
        _cli("simulate", "--config", config, "--trace", trace, "--out-dir", out)
        _cli("attack-filtering", "--transcript", out / "transcript.npz", "--out", out / "filtering.csv")
        _cli("attack-collusion", "--transcript", out / "transcript.npz", "--malicious-count", 10, "--out", out / "collusion.csv")
        _cli("sweep", "--config", config, "--vary", "malicious-count", "--values", "0..10", "--trace", trace, "--out", out / "sweep.csv")
        names = sorted(p.name for p in out.glob("*.csv"))
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    ok = len(names) == 6 and all(same)
    assert acceptance(11, ok, f"{sum(same)}/{len(names)} CSV outputs byte-identical across two invocations")
