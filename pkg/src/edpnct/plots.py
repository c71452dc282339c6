"""Figure rendering for the report command. Always writes PNG files, never opens windows."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _size(scale=1.0):
    width = 6.0 * scale
    return width, width * (math.sqrt(5.0) - 1.0) / 2.0


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # no Software tag: repeated renders stay byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_load(rows: list[dict], path) -> Path:
    """Masked area sum against recovered load, per instant."""
    t = [int(r["instant"]) for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        ax.plot(t, [float(r["masked_sum"]) for r in rows], lw=0.6, color="tab:red", label="masked sum")
        ax.plot(t, [float(r["recovered_load"]) for r in rows], lw=0.8, color="black", label="recovered load")
        missing = [i for i, r in zip(t, rows) if int(r["masters_missing"])]
        if missing:
            ax.plot(missing, [0] * len(missing), "|", color="tab:blue", label="missing report")
        ax.set_xlabel("instant (10 min)")
        ax.set_ylabel("kWh")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_bills(rows: list[dict], path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        by_period = defaultdict(list)
        for r in rows:
            by_period[int(r["period"])].append(float(r["total"]))
        for period, totals in sorted(by_period.items()):
            ax.hist(totals, bins=30, alpha=0.6, label=f"period {period}")
        ax.set_xlabel("total bill")
        ax.set_ylabel("meters")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_attacks(rows: list[dict], path) -> Path | None:
    """Best-fit filtered correlation against unfiltered correlation, one point per meter."""
    best, raw = {}, {}
    for r in rows:
        if r["attack"] != "filtering":
            continue
        if r["metric"] == "best_corr":
            best[r["meter_id"]] = float(r["value"])
        elif r["metric"] == "unfiltered_corr":
            raw[r["meter_id"]] = float(r["value"])
    meters = sorted(set(best) & set(raw), key=str)
    if not meters:
        return None
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        xs = range(len(meters))
        ax.bar([x - 0.2 for x in xs], [raw[m] for m in meters], width=0.4, label="masked")
        ax.bar([x + 0.2 for x in xs], [best[m] for m in meters], width=0.4, label="best filtered")
        ax.set_xticks(list(xs), meters)
        ax.set_xlabel("meter")
        ax.set_ylabel("correlation with original")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_sweep(rows: list[dict], path) -> Path | None:
    """Leak fraction against the swept parameter; simulated points and analytic curve."""
    if not rows:
        return None
    param = rows[0]["param"]
    series = defaultdict(list)
    for r in rows:
        series[r.get("m_masters", "")].append(r)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        for k, (m, group) in enumerate(sorted(series.items())):
            xs = [float(r["value"]) for r in group]
            color = f"C{k}"
            ax.plot(xs, [float(r["leak_fraction"]) for r in group], "o", ms=3, color=color, label=f"simulated m={m}")
            ax.plot(xs, [float(r["analytic_leak"]) for r in group], "-", lw=0.8, color="black" if len(series) == 1 else color, label=f"analytic m={m}")
        ax.set_xlabel(param)
        ax.set_ylabel("leak fraction")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_profile(original, masked, filtered=None, path="profile.png") -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        ax.plot(masked, lw=0.6, color="tab:red", label="masked")
        if filtered is not None:
            ax.plot(filtered, lw=0.8, color="tab:blue", label="filtered")
        ax.plot(original, lw=1.0, color="black", label="original")
        ax.set_xlabel("instant (10 min)")
        ax.set_ylabel("kWh")
        ax.legend(frameon=False)
        return _save(fig, path)
