#!/usr/bin/env python3
"""Plot a sweep CSV as metric-vs-cost tradeoff curves.

Convenience only; the CSV is the contract.  One curve per (method, m)
pair, x = inferences per query, y = metric.

Usage: python scripts/plot_sweep.py sweep.csv [out.png]
"""

import csv
import sys
from collections import defaultdict


def main(argv):
    if not 2 <= len(argv) <= 3:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    csv_path = argv[1]
    out_path = argv[2] if len(argv) == 3 else "sweep.png"

    curves = defaultdict(list)
    with open(csv_path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            label = row["method"] if not row["m"] else f"{row['method']} (m={row['m']})"
            curves[label].append(
                (float(row["inferences_per_query"]), float(row["metric"]))
            )

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label in sorted(curves):
        points = sorted(curves[label])
        ax.plot([x for x, _ in points], [y for _, y in points],
                marker="o", markersize=4, label=label)
    ax.set_xlabel("inferences / query")
    ax.set_ylabel("metric")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    print(f"wrote {out_path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
