#!/usr/bin/env python3
"""Population-dynamics runs: the coupled value/density field sweep and an
oscillator synchronization trace, each to its own CSV."""

import argparse
import pathlib

from mirrorwyner import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None,
                    help="JSON payload for the field solver (see configs/)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()
    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mfg_args = ["mfg", "--seed", str(args.seed),
                "--out", str(outdir / "mfg_field.csv")]
    if args.config:
        mfg_args += ["--config", args.config]
    rc = cli.main(mfg_args)
    rc |= cli.main(["lohe", "--seed", str(args.seed),
                    "--out", str(outdir / "lohe_sync.csv")])
    print(f"wrote {outdir}/mfg_field.csv and {outdir}/lohe_sync.csv (exit {rc})")
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
