"""Command-line entry point: ``edpnct <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from edpnct import plots
from edpnct import rng as rngmod
from edpnct.attacks import (
    AttackReport,
    CollusionScenario,
    analytic_leak,
    best_fit_P,
    choose_malicious,
    collusion_attack,
    remove_negative_noise,
)
from edpnct.data_io import (
    ATTACK_COLUMNS,
    INSTANTS_PER_DAY,
    load_trace,
    read_csv,
    synth_trace,
    write_reports,
    write_trace,
)
from edpnct.engine import (
    SimConfig,
    load_config,
    load_transcript,
    run_experiment,
    run_metrics,
    run_seeds,
    run_simulation,
    save_transcript,
)
from edpnct.metrics import MetricBundle, pearson_corr

log = logging.getLogger("edpnct")

SWEEP_PARAMS = {
    "malicious_count": "malicious_count",
    "malicious": "malicious_count",
    "m_masters": "m_masters",
    "masters": "m_masters",
    "n_meters": "n_meters",
    "meters": "n_meters",
    "epsilon": "epsilon",
    "instants_per_period": "instants_per_period",
    "period": "instants_per_period",
}
SWEEP_COLUMNS = [
    "param",
    "value",
    "n_meters",
    "m_masters",
    "malicious_count",
    "leak_fraction",
    "analytic_leak",
    "mae_energy",
    "mae_bill",
    "corr_masked_vs_original",
]


class CliError(Exception):
    pass


def parse_int_list(text: str) -> list[int]:
    """``"1,2,5"`` or ``"1..6"`` (inclusive) or a mix: ``"0..3,10"``."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    if not values:
        raise CliError(f"empty value list: {text!r}")
    return values


def parse_value_list(text: str) -> list[float]:
    if ".." in text:
        return [float(v) for v in parse_int_list(text)]
    return [float(v) for v in text.split(",") if v.strip()]


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _emit_rows(path, columns, rows, seed):
    fh, close = _open_out(path)
    try:
        fh.write(f"# seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if close:
            fh.close()


def _attack_rows(reports):
    return [(r.attack, r.param, r.meter_id, r.metric, r.value) for r in reports]


def collusion_reports(transcript, c: int) -> list[AttackReport]:
    cfg = transcript.config
    malicious = choose_malicious(
        transcript.n_meters, c, rngmod.RandomSource(cfg.seed).stream(rngmod.MALICIOUS)
    )
    stats = collusion_attack(CollusionScenario(malicious, transcript))
    m = cfg.m_masters
    return [
        AttackReport("collusion", m, "all", "malicious_count", c),
        AttackReport("collusion", m, "all", "leak_fraction", stats.leak_fraction),
        AttackReport("collusion", m, "all", "analytic_leak", analytic_leak(transcript.n_meters, c, m)),
        AttackReport("collusion", m, "all", "reconstructed_points", stats.reconstructed_points),
        AttackReport("collusion", m, "all", "max_reconstruction_error", stats.max_reconstruction_error),
    ]


def cmd_gen_data(args) -> int:
    trace = synth_trace(args.meters, args.days, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out, seed=args.seed)
    print(f"wrote {trace.n_meters}x{trace.n_instants} trace to {out}")
    return 0


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    trace = load_trace(args.trace)
    transcript = run_simulation(config, trace)
    metrics = run_experiment(config, trace)
    attacks = collusion_reports(transcript, config.malicious_count) if config.malicious_count else []
    out = Path(args.out_dir)
    paths = write_reports(out, transcript.loads, transcript.bills, attacks, metrics, seed=config.seed)
    save_transcript(transcript, out / "transcript.npz")
    for name, path in paths.items():
        print(f"{name}: {path}")
    print(f"transcript: {out / 'transcript.npz'}")
    return 0


def cmd_attack_filtering(args) -> int:
    transcript = load_transcript(args.transcript)
    if args.p_min < 1 or args.p_max < args.p_min:
        raise CliError("need 1 <= p-min <= p-max")
    length = args.days * INSTANTS_PER_DAY
    start = args.day * INSTANTS_PER_DAY
    if start + length > transcript.n_instants:
        raise CliError("profile window runs past the end of the transcript")
    if 2 * args.p_max + 1 > length:
        raise CliError("window exceeds profile: lower --p-max or raise --days")
    meters = parse_int_list(args.meters) if args.meters else list(range(min(10, transcript.n_meters)))
    window = slice(start, start + length)
    p_range = range(args.p_min, args.p_max + 1)
    reports = []
    for i in meters:
        masked = transcript.masked[i, window]
        original = transcript.trace.values[i, window]
        reports.append(AttackReport("filtering", 0, i, "unfiltered_corr", pearson_corr(masked, original)))
        P, r = best_fit_P(masked, original, p_range)
        reports.append(AttackReport("filtering", P, i, "best_corr", r))
        if args.clamp:
            P, r = best_fit_P(remove_negative_noise(masked), original, p_range)
            reports.append(AttackReport("filtering+clamp", P, i, "best_corr", r))
    _emit_rows(args.out, ATTACK_COLUMNS, _attack_rows(reports), transcript.config.seed)
    return 0


def cmd_attack_collusion(args) -> int:
    transcript = load_transcript(args.transcript)
    c = args.malicious_count
    if not 0 <= c <= transcript.n_meters:
        raise CliError(f"--malicious-count must lie in [0, {transcript.n_meters}]")
    reports = []
    if args.sweep_masters:
        for m in parse_int_list(args.sweep_masters):
            config = transcript.config.replace(m_masters=m, record_shares=True)
            reports.extend(collusion_reports(run_simulation(config, transcript.trace), c))
    else:
        reports = collusion_reports(transcript, c)
    _emit_rows(args.out, ATTACK_COLUMNS, _attack_rows(reports), transcript.config.seed)
    return 0


def _sweep_trace(config: SimConfig, trace_path):
    if trace_path:
        return load_trace(trace_path)
    if config.n_instants % INSTANTS_PER_DAY:
        raise CliError("without --trace the horizon must be whole days")
    return synth_trace(config.n_meters, config.n_instants // INSTANTS_PER_DAY, config.seed)


def _sweep_row(param, value, config, bundle: MetricBundle, c):
    return (
        param,
        value,
        config.n_meters,
        config.m_masters,
        c,
        bundle.leak_fraction,
        analytic_leak(config.n_meters, c, config.m_masters),
        bundle.mae_energy,
        bundle.mae_bill,
        bundle.corr_masked_vs_original,
    )


def sweep(config: SimConfig, param: str, values, trace=None, masters=None) -> list[tuple]:
    """Rows of sweep.csv: one per (master count, swept value)."""
    field = SWEEP_PARAMS.get(param.replace("-", "_"))
    if field is None:
        raise CliError(f"cannot sweep {param!r}; choose from {sorted(set(SWEEP_PARAMS))}")
    rows = []
    for m in masters or [config.m_masters]:
        base = config.replace(m_masters=m, record_shares=False)
        if field == "malicious_count":
            counts = [int(v) for v in values]
            trace_ = trace if trace is not None else _sweep_trace(base, None)
            per_c: dict[int, list] = {c: [] for c in counts}
            # one simulation per run serves every malicious count
            for seed in run_seeds(base):
                transcript = run_simulation(base.replace(seed=seed), trace_)
                for c in counts:
                    per_c[c].append(run_metrics(transcript, c))
            for c in counts:
                rows.append(_sweep_row(param, c, base, MetricBundle.average(per_c[c]), c))
            continue
        for value in values:
            cast = float(value) if field == "epsilon" else int(value)
            cfg = base.replace(**{field: cast})
            if field == "n_meters":
                cfg = cfg.replace(malicious_count=min(cfg.malicious_count, cfg.n_meters))
                trace_ = _sweep_trace(cfg, None)
            else:
                trace_ = trace if trace is not None else _sweep_trace(cfg, None)
            bundle = run_experiment(cfg, trace_)
            rows.append(_sweep_row(param, cast, cfg, bundle, cfg.malicious_count))
    return rows


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    values = parse_value_list(args.values)
    if not values:
        raise CliError("--values is empty")
    trace = load_trace(args.trace) if args.trace else None
    masters = parse_int_list(args.masters) if args.masters else None
    rows = sweep(config, args.vary, values, trace, masters)
    _emit_rows(args.out, SWEEP_COLUMNS, rows, config.seed)
    return 0


def cmd_report(args) -> int:
    in_dir = Path(args.in_dir)
    metrics_path = in_dir / "metrics.json"
    if not metrics_path.exists():
        raise FileNotFoundError(f"metrics.json not found in {in_dir}")
    doc = json.loads(metrics_path.read_text())
    bundle = MetricBundle.from_dict(doc)
    runs = bundle.per_run
    out = io.StringIO()
    out.write(f"seed: {doc.get('seed', 'n/a')}\nruns: {len(runs)}\n")
    for key in ("mae_energy", "mae_bill", "corr_masked_vs_original", "leak_fraction"):
        values = [r[key] for r in runs] or [getattr(bundle, key)]
        out.write(
            f"{key}: mean={getattr(bundle, key):.6g} sd={float(np.std(values)):.3g} "
            f"min={min(values):.6g} max={max(values):.6g}\n"
        )
    fig_dir = Path(args.fig_dir) if args.fig_dir else in_dir / "figures"
    figures = []
    if (in_dir / "load.csv").exists():
        figures.append(plots.plot_load(read_csv(in_dir / "load.csv"), fig_dir / "load.png"))
    if (in_dir / "bills.csv").exists():
        figures.append(plots.plot_bills(read_csv(in_dir / "bills.csv"), fig_dir / "bills.png"))
    if (in_dir / "attacks.csv").exists():
        figures.append(plots.plot_attacks(read_csv(in_dir / "attacks.csv"), fig_dir / "attacks.png"))
    if (in_dir / "sweep.csv").exists():
        figures.append(plots.plot_sweep(read_csv(in_dir / "sweep.csv"), fig_dir / "sweep.png"))
    for path in figures:
        if path is not None:
            out.write(f"figure: {path}\n")
    sys.stdout.write(out.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edpnct", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic household trace CSV")
    p.add_argument("--meters", type=int, default=200)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("simulate", help="run the protocol and write load/bill/attack reports")
    p.add_argument("--config", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack-filtering", help="moving-average filtering attack with best-fit P")
    p.add_argument("--transcript", required=True)
    p.add_argument("--p-min", type=int, default=1)
    p.add_argument("--p-max", type=int, default=71)
    p.add_argument("--meters", help="meter ids, e.g. 0..9 (default: first 10)")
    p.add_argument("--day", type=int, default=0, help="first day of the attacked profile")
    p.add_argument("--days", type=int, default=1, help="profile length in days")
    p.add_argument("--clamp", action="store_true", help="also attack the negative-clamped profile")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_attack_filtering)

    p = sub.add_parser("attack-collusion", help="collusion of malicious meters with the aggregator")
    p.add_argument("--transcript", required=True)
    p.add_argument("--malicious-count", type=int, required=True)
    p.add_argument("--sweep-masters", help="re-simulate for each master count, e.g. 1..6")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_attack_collusion)

    p = sub.add_parser("sweep", help="leak / utility curves over one parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--vary", required=True, help=", ".join(sorted(set(SWEEP_PARAMS))))
    p.add_argument("--values", required=True, help="comma list or inclusive range a..b")
    p.add_argument("--masters", help="one curve per master count, e.g. 1..4")
    p.add_argument("--trace")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarise metrics.json and render figures")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--fig-dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, FileNotFoundError, KeyError, OSError) as exc:
        print(f"edpnct {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
