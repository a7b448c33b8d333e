"""Run every config in scripts/configs through the CLI and collect the tables.

Results land in <out>/<config name>/ (study.csv, timing.csv, plot_*.dat) and
<out>/condition/condition.csv.
"""
import argparse
import sys
from pathlib import Path

from hpsem.cli import main as cli

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*", help="config stems to run (default: all)")
    args = ap.parse_args()
    status = cli(["condition-study", "--out", str(Path(args.out, "condition"))])
    for cfg in sorted((HERE / "configs").glob("*.cfg")):
        if args.only and cfg.stem not in args.only:
            continue
        print(f"# {cfg.stem}", flush=True)
        rc = cli(["study", "--config", str(cfg), "--out", str(Path(args.out, cfg.stem))])
        status = max(status, rc)
    return status


if __name__ == "__main__":
    sys.exit(main())
