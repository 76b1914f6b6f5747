"""Command-line front end: run, sweep, papr, validate.

Outputs land in --out as delimited tables (trials + summary), a JSON
manifest, and rendered figures, unless figures are switched off.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import channel as chan
from . import harness, report
from .sensing import nmse  # noqa: F401  (re-export convenience for scripts)


def _parse_values(text: str):
    return [float(v) for v in text.split(",") if v.strip() != ""]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddamsim",
        description="Dual-timescale ISAC link simulator with delay-Doppler "
                    "aligned transmission")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--trials", type=int, default=None, help="trial count override")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--no-figures", action="store_true",
                       help="skip rendering figures next to the tables")

    p_run = sub.add_parser("run", help="single scenario, all metrics")
    common(p_run)

    p_sweep = sub.add_parser("sweep", help="scenario swept over one axis")
    common(p_sweep)
    p_sweep.add_argument("--axis", type=str, default=None,
                         help=f"one of {', '.join(harness.SWEEP_AXES)}")
    p_sweep.add_argument("--values", type=str, default=None,
                         help="comma-separated axis values")

    p_papr = sub.add_parser("papr", help="peak-power CCDF study")
    common(p_papr)

    p_val = sub.add_parser("validate", help="fast invariant and config checks")
    common(p_val)
    return parser


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    if args.trials is not None:
        cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), "trials": args.trials})
    return cfg


def _outdir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_tables(out: Path, stem: str, trials, summary, fmt: str):
    if fmt == "json":
        report.write_json(out / f"{stem}_trials.json", trials)
        report.write_json(out / f"{stem}_summary.json", summary)
    else:
        report.write_csv(out / f"{stem}_trials.csv", trials)
        report.write_csv(out / f"{stem}_summary.csv", summary)


def cmd_run(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    record = harness.run_scenario(cfg)
    wall = time.perf_counter() - t0
    trials, agg = report.record_rows(record)
    for key, val in agg.items():
        print(f"{key}: {val}")
    out = _outdir(args)
    if out:
        _emit_tables(out, "run", trials, [agg], args.format)
        report.write_manifest(out / "manifest.json", cfg, wall, "run")
        if not args.no_figures:
            _render_run_figure(cfg, out)
        print(f"wrote results to {out}")
    return 0


def _render_run_figure(cfg, out: Path):
    """Angular-delay truth/estimate maps for one representative trial."""
    from . import doppler as dop_mod
    from . import sensing as sens

    rng = harness._trial_rng(cfg.seed, 0)
    m = cfg.system.antennas
    t_s = 1.0 / cfg.system.bandwidth_hz
    t_c = cfg.frame.samples_per_block * t_s
    pulse = chan.make_pulse(support_taps=cfg.system.pulse_support_taps)
    psi = harness.draw_psi(cfg, rng, t_c)
    cir = chan.build_cir_block(psi, 0, t_c, pulse, m, cfg.system.bandwidth_hz,
                               cfg.frame.delay_taps)
    truth = np.abs(chan.virtual_channel(cir).matrix)
    pilots = sens.generate_pilots(cfg.frame.pilot_len, m, 1.0, rng)
    prob = sens.make_sensing_problem(cir, pilots)
    rec_cfg = sens.RecoveryConfig(v_r=cfg.recovery.v_r, v_p=cfg.recovery.v_p, force_j=1)
    rec = sens.asomp_sr(iter([prob]), rec_cfg)
    est_vec = rec.estimates[0] if rec.estimates else np.zeros(m * cfg.frame.delay_taps)
    est = np.abs(est_vec.reshape(cfg.frame.delay_taps, m).T)
    report.render_sensing_map(truth, est, out)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    axis = args.axis or cfg.sweep.axis
    values = _parse_values(args.values) if args.values else list(cfg.sweep.values)
    if not axis or not values:
        print("sweep needs --axis and --values (or a sweep section in the config)",
              file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    records = harness.sweep(cfg, axis, values)
    wall = time.perf_counter() - t0
    all_trials, aggregates = [], []
    for rec in records:
        trials, agg = report.record_rows(rec, axis_name=axis)
        all_trials.extend(trials)
        aggregates.append(agg)
    for agg in aggregates:
        print({k: agg[k] for k in list(agg)[:8]})
    out = _outdir(args)
    if out:
        _emit_tables(out, "sweep", all_trials, aggregates, args.format)
        report.write_manifest(out / "manifest.json", cfg, wall, f"sweep:{axis}")
        if not args.no_figures:
            report.render_sweep_figures(aggregates, axis, out)
        print(f"wrote results to {out}")
    return 0


def cmd_papr(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    study = harness.papr_study(cfg)
    wall = time.perf_counter() - t0
    rows = []
    for name, curve in study["curves"].items():
        for thr, ccdf in zip(study["thresholds_db"], curve):
            rows.append({"scheme": name, "threshold_db": float(thr), "ccdf": float(ccdf)})
    summary = [{"scheme": name, "papr_db_at_1e-2": val}
               for name, val in study["level_1e2"].items()]
    for s in summary:
        print(f"{s['scheme']}: PAPR at CCDF 1e-2 = {s['papr_db_at_1e-2']:.2f} dB")
    out = _outdir(args)
    if out:
        _emit_tables(out, "papr", rows, summary, args.format)
        report.write_manifest(out / "manifest.json", cfg, wall, "papr")
        if not args.no_figures:
            report.render_papr_figure(study, out)
        print(f"wrote results to {out}")
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args)
    rep = harness.validate(cfg)
    for line in rep.lines():
        print(line)
    out = _outdir(args)
    if out:
        report.write_json(out / "validate.json",
                          [{"name": c.name, "passed": c.passed, "detail": c.detail}
                           for c in rep.checks])
    return 0 if rep.ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "papr": cmd_papr,
                "validate": cmd_validate}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
