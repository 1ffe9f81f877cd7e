#!/usr/bin/env python3
"""Utility-vs-leakage frontier under posterior uncertainty, one panel per
perturbation magnitude."""

import argparse
import json
import pathlib

from mirrorwyner import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--magnitudes", type=float, nargs="+",
                    default=[0.1, 0.3, 0.5])
    ap.add_argument("--grid-points", type=int, default=8)
    ap.add_argument("--samples", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/tradeoff_frontier.csv")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cfg = pathlib.Path(args.out).with_suffix(".config.json")
    cfg.write_text(json.dumps({"b_magnitudes": args.magnitudes,
                               "grid_points": args.grid_points,
                               "n_samples": args.samples}))
    rc = cli.main(["mi-tradeoff", "--config", str(cfg),
                   "--seed", str(args.seed), "--out", args.out])
    print(f"wrote {args.out} (exit {rc})")
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
