"""Run the Z-estimator MSE sweeps for every scenario config.

Usage: python3 scripts/run_z_sweeps.py [--out-dir results] [--workers 4] [--replications R]
"""

import argparse
import sys
from pathlib import Path

from ebm_bridge.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = [
    "z_sweep_ideal",
    "z_sweep_almost_ideal",
    "z_sweep_realistic_low",
    "z_sweep_realistic_high",
    "z_sweep_umbrella",
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default=str(ROOT / "results"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--replications", type=int, help="override R (e.g. small for a quick look)")
    ap.add_argument("--only", nargs="*", help="subset of config names")
    args = ap.parse_args(argv)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in args.only or CONFIGS:
        cmd = ["z-sweep", "--config", str(ROOT / "configs" / f"{name}.json"), "--out", str(out_dir / f"{name}.csv")]
        cmd += ["--workers", str(args.workers)]
        if args.replications:
            cmd += ["--replications", str(args.replications)]
        code = cli_main(cmd)
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
