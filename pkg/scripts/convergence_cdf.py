#!/usr/bin/env python3
"""Batch convergence experiment: relaxed vs unrelaxed greedy solves on the
reference binary instance, written as a long-format CSV ready for plotting."""

import argparse
import pathlib

from mirrorwyner import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--budget", type=int, default=60)
    ap.add_argument("--mode", choices=["two", "three"], default="two")
    ap.add_argument("--out", default="results/convergence_cdf.csv")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cfg = pathlib.Path(args.out).with_suffix(".config.json")
    cfg.write_text('{"n_seeds": %d, "budget": %d, "mode": "%s"}'
                   % (args.seeds, args.budget, args.mode))
    rc = cli.main(["convergence-cdf", "--config", str(cfg),
                   "--out", args.out])
    print(f"wrote {args.out} (exit {rc})")
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
