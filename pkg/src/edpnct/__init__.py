"""Differentially private smart metering with split-noise cancellation, plus attack harness."""

from edpnct.aggregator import BillStatement, LoadReport, Tariff, aggregate_load, compute_bill, settle_error
from edpnct.attacks import (
    CollusionScenario,
    analytic_leak,
    best_fit_P,
    collusion_attack,
    filtering_attack,
    remove_negative_noise,
)
from edpnct.data_io import EnergyTrace, load_trace, synth_trace, write_reports, write_trace
from edpnct.engine import SimConfig, SimTranscript, run_experiment, run_simulation, select_masters
from edpnct.metrics import MetricBundle, mae, pearson_corr
from edpnct.noise import PrivacyParams, compute_sensitivity, sample_meter_noise, split_noise

__version__ = "0.1.0"
