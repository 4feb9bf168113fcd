#!/usr/bin/env python3
"""Rebuild the benchmark comparison from fresh simulations.

Runs the two bundled scenarios (network relay vs direct exchange), calibrates
the power model against the published per-role energies, and prints the
simulated numbers next to their references, with the calibration residuals
that the comparison rests on.
"""

import argparse
import json

from lorad2d import runner


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", metavar="FILE", default=None,
                    help="also write the full comparison document here")
    args = ap.parse_args(argv)

    doc = runner.table2(seed=args.seed)

    def row(label, cell):
        print(f"  {label:<34}{cell['simulated']:12.3f}  "
              f"ref {cell['reference']:10.3f}  err {cell['rel_err']:+8.3%}")

    print("transfer time for 2400 bytes [s]")
    for name in ("conventional", "d2d"):
        row(name, doc["time_s"][name])
    print("energy per role [J]")
    for role in ("transmitter", "receiver", "initiator", "scanner"):
        row(role, doc["energy_j"][role])
    print("ratios")
    for key, cell in doc["ratios"].items():
        row(key, cell)
    print("calibration residuals")
    for role, res in doc["calibration_residuals"].items():
        print(f"  {role:<34}{res['model_j']:12.3f}  "
              f"ref {res['target_j']:10.3f}  err {res['rel_err']:+8.3%}")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"\ncomparison written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
