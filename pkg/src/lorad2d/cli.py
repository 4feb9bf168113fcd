"""Command line front end.

Subcommands: ``run`` a scenario file or bundled scenario, ``toa`` for airtime
arithmetic, ``duty`` for the sub-band table and off-time calculator,
``table2`` for the benchmark comparison, ``sweep`` for multi-seed batches.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import metrics, phy, regulator, runner
from .scenario import Scenario, ScenarioError, bundled_names, load_bundled


def _load_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if path.exists():
        return Scenario.load(path)
    if ref in bundled_names():
        return load_bundled(ref)
    raise ScenarioError("$", f"{ref!r} is neither a file nor a bundled scenario "
                             f"(bundled: {', '.join(bundled_names())})")


def _write_or_print(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# -- run -----------------------------------------------------------------


def cmd_run(args) -> int:
    scn = _load_scenario(args.scenario)
    result = runner.run(scn, seed=args.seed, trace=args.trace is not None)
    doc = result.document
    if args.trace is not None:
        _write_or_print(result.trace_jsonl(), args.trace)
    if args.out is not None:
        metrics.save(doc, args.out)
    row = runner.summarize(result)
    print(f"scenario {row['scenario']} seed {row['seed']}: "
          f"{row['events']} events in {row['end_time_s']:g} simulated seconds")
    print(f"  uplinks sent/delivered: {row['uplinks_sent']}/{row['uplinks_delivered']}"
          f"  downlinks: {row['downlinks_scheduled']}  collisions: {row['collisions']}")
    if row["transfers_total"]:
        print(f"  transfers complete: {row['transfers_complete']}/{row['transfers_total']}")
        for tr in doc["transfers"]:
            t = tr["total_transfer_time_s"]
            print(f"    {tr['source']} -> {tr['dest']}: {tr['bytes_delivered']}"
                  f"/{tr['total_bytes']} bytes"
                  + (f" in {t:.6f} s" if t is not None else ""))
    if row["d2d_sessions_total"]:
        print(f"  d2d sessions complete: {row['d2d_sessions_completed']}"
              f"/{row['d2d_sessions_total']}")
        for s in doc["d2d_sessions"]:
            if s.get("error"):
                print(f"    {s['initiator']} -> {s['scanner']}: plan failed: {s['error']}")
            else:
                t = s["session_time_s"]
                print(f"    {s['initiator']} -> {s['scanner']}: "
                      f"{s['bytes_exchanged']} bytes"
                      + (f" in {t:.6f} s" if t is not None else " (incomplete)"))
    if args.out is not None:
        print(f"  metrics written to {args.out}")
    return 0


# -- toa -----------------------------------------------------------------


def cmd_toa(args) -> int:
    payload = args.payload_bytes
    if args.app:
        payload += phy.FRAME_OVERHEAD_BYTES
    if args.dr is None:
        rows = range(8)
    else:
        rows = [args.dr]
    for dr in rows:
        desc = phy.data_rate(dr)
        seconds = phy.time_on_air(dr, payload)
        label = (f"SF{desc.sf}/BW{desc.bandwidth_hz // 1000}k" if desc.is_lora
                 else "GFSK 50 kbps")
        print(f"DR{dr} ({label}): {payload} PHY bytes -> {seconds:.6f} s")
    return 0


# -- duty ----------------------------------------------------------------


def cmd_duty(args) -> int:
    bands = regulator.DEFAULT_BANDS
    if args.freq is None:
        print(f"{'band':<6}{'range':<24}{'duty':>8}{'max ERP':>10}")
        for band in bands:
            rng = f"{band.low_hz / 1e6:.1f}-{band.high_hz / 1e6:.1f} MHz"
            print(f"{band.ident:<6}{rng:<24}{band.duty_cycle_limit:>7.1%}"
                  f"{band.max_erp_dbm:>8.1f}dBm")
        return 0
    band = regulator.classify(args.freq, bands)
    print(f"{args.freq} Hz -> band {band.ident} "
          f"(duty {band.duty_cycle_limit:.1%}, max ERP {band.max_erp_dbm:g} dBm)")
    if args.toa is not None:
        toa_us = round(args.toa * 1e6)
        off_us = regulator.off_time_us(toa_us, band.duty_cycle_limit)
        print(f"after {args.toa:.6f} s on air: stay off {off_us / 1e6:.6f} s "
              f"(next start {(toa_us + off_us) / 1e6:.6f} s after tx start)")
    return 0


# -- table2 --------------------------------------------------------------


def _fmt_cell(cell) -> str:
    sim, ref, rel = cell["simulated"], cell["reference"], cell["rel_err"]
    if sim is None:
        return f"      (none)  ref {ref:10.3f}"
    return f"{sim:12.3f}  ref {ref:10.3f}  err {rel:+7.2%}"


def cmd_table2(args) -> int:
    doc = runner.table2(seed=args.seed)
    print("time to transfer 2400 bytes [s]")
    print(f"  conventional   {_fmt_cell(doc['time_s']['conventional'])}")
    print(f"  d2d            {_fmt_cell(doc['time_s']['d2d'])}")
    print("energy per role [J]")
    for role in ("transmitter", "receiver", "initiator", "scanner"):
        print(f"  {role:<15}{_fmt_cell(doc['energy_j'][role])}")
    print("ratios")
    for key, cell in doc["ratios"].items():
        print(f"  {key:<34}{_fmt_cell(cell)}")
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"comparison written to {args.out}")
    return 0


# -- sweep ---------------------------------------------------------------


def cmd_sweep(args) -> int:
    scn = _load_scenario(args.scenario)
    base = args.seed if args.seed is not None else scn.seed
    seeds = range(base, base + args.seeds)
    rows = runner.sweep(scn, seeds, jobs=args.jobs)
    if args.out is None or args.out == "-":
        runner.write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            runner.write_csv(rows, fh)
        print(f"{len(rows)} runs written to {args.out}")
    return 0


# -- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorad2d",
        description="LoRaWAN class A + device-to-device transfer simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("scenario",
                       help="path to a scenario JSON file, or a bundled name "
                            f"({', '.join(bundled_names())})")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario's seed")
    p_run.add_argument("--out", default=None, metavar="FILE",
                       help="write the metrics document (JSON) here")
    p_run.add_argument("--trace", default=None, metavar="FILE",
                       help="write line-delimited trace records here")
    p_run.set_defaults(fn=cmd_run)

    p_toa = sub.add_parser("toa", help="frame airtime for a data rate")
    p_toa.add_argument("payload_bytes", type=int)
    p_toa.add_argument("--dr", type=int, default=None,
                       help="data rate index; omit for all of DR0..DR7")
    p_toa.add_argument("--app", action="store_true",
                       help="treat the byte count as application payload "
                            "(adds the frame overhead)")
    p_toa.set_defaults(fn=cmd_toa)

    p_duty = sub.add_parser("duty", help="sub-band table and off-time calculator")
    p_duty.add_argument("--freq", type=int, default=None, metavar="HZ",
                        help="classify this frequency")
    p_duty.add_argument("--toa", type=float, default=None, metavar="S",
                        help="with --freq: off time after this much airtime")
    p_duty.set_defaults(fn=cmd_duty)

    p_t2 = sub.add_parser("table2",
                          help="benchmark comparison against the published figures")
    p_t2.add_argument("--seed", type=int, default=0)
    p_t2.add_argument("--out", default=None, metavar="FILE",
                      help="also write the comparison document (JSON) here")
    p_t2.set_defaults(fn=cmd_table2)

    p_sweep = sub.add_parser("sweep", help="run a scenario under many seeds")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--seeds", type=int, required=True, metavar="N",
                         help="number of consecutive seeds to run")
    p_sweep.add_argument("--seed", type=int, default=None,
                         help="first seed (default: the scenario's)")
    p_sweep.add_argument("--jobs", type=int, default=None,
                         help="worker processes (default: one per core)")
    p_sweep.add_argument("--out", default=None, metavar="FILE",
                         help="write the per-run CSV here instead of stdout")
    p_sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, metrics.MetricsError, phy.PhyError,
            regulator.RegulatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
