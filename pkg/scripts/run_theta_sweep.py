"""Run the theta-estimation MSE sweep (costs with Z pinned, plus ML).

Usage: python3 scripts/run_theta_sweep.py [--out results/theta_sweep.csv] [--workers 4]
"""

import argparse
import sys
from pathlib import Path

from ebm_bridge.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "results" / "theta_sweep.csv"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--replications", type=int)
    args = ap.parse_args(argv)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cmd = ["theta-sweep", "--config", str(ROOT / "configs" / "theta_sweep.json"), "--out", args.out]
    cmd += ["--workers", str(args.workers)]
    if args.replications:
        cmd += ["--replications", str(args.replications)]
    return cli_main(cmd)


if __name__ == "__main__":
    sys.exit(main())
