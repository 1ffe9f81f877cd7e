#!/usr/bin/env python3
"""Secrecy gap against the virtual power budget: the best achievable
utility-minus-superposed-exposure over the binary twin grid, per panel."""

import argparse
import json
import pathlib

from mirrorwyner import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--magnitudes", type=float, nargs="+", default=[0.6, 0.7])
    ap.add_argument("--grid-points", type=int, default=9)
    ap.add_argument("--resolution", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/secrecy_gap.csv")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cfg = pathlib.Path(args.out).with_suffix(".config.json")
    cfg.write_text(json.dumps({"b_magnitudes": args.magnitudes,
                               "grid_points": args.grid_points,
                               "resolution": args.resolution}))
    rc = cli.main(["secrecy-gap", "--config", str(cfg),
                   "--seed", str(args.seed), "--out", args.out])
    print(f"wrote {args.out} (exit {rc})")
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
