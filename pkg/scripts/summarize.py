"""Print a sweep CSV as one MSE table per (scenario, N, M), estimators as columns."""

import csv
import sys
from collections import defaultdict


def main(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    tables = defaultdict(dict)
    for r in rows:
        tables[r["scenario"], r["N"], r["M"]][r["estimator"], float(r["sigma_p"])] = float(r["mse"])
    for (scenario, N, M), cells in sorted(tables.items()):
        ests = sorted({e for e, _ in cells})
        sigmas = sorted({s for _, s in cells})
        print(f"\n{scenario}  N={N} M={M}")
        print(f"{'sigma_p':>8} " + " ".join(f"{e:>13}" for e in ests))
        for s in sigmas:
            print(f"{s:8.3f} " + " ".join(f"{cells.get((e, s), float('nan')):13.4e}" for e in ests))
    return 0


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit("usage: summarize.py SWEEP.csv")
    sys.exit(main(sys.argv[1]))
