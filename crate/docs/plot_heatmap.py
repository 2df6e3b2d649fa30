"""Plot heatmap.csv from a run directory: one row per ranked configuration,
one column per block, colour = learning-rate multiplier (white = frozen).

usage: python docs/plot_heatmap.py RUN_DIR [OUT.png]
"""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def main(run_dir, out):
    rows = defaultdict(dict)
    names = {}
    with open(f"{run_dir}/heatmap.csv", newline="") as f:
        for r in csv.DictReader(f):
            rank, block = int(r["rank"]), int(r["block_index"])
            rows[rank][block] = float(r["eta"]) if r["frozen"] == "0" else np.nan
            names[block] = r["block_name"]
    ranks = sorted(rows)
    blocks = sorted(names)
    grid = np.array([[rows[k][b] for b in blocks] for k in ranks])

    fig, ax = plt.subplots(figsize=(1 + 0.6 * len(blocks), 1 + 0.4 * len(ranks)))
    im = ax.imshow(np.log10(grid), cmap="viridis", vmin=-1, vmax=1, aspect="auto")
    ax.set_xticks(range(len(blocks)), [names[b] for b in blocks], rotation=45, ha="right")
    ax.set_yticks(range(len(ranks)), [f"#{k}" for k in ranks])
    fig.colorbar(im, ax=ax, label="log10 eta (blank = frozen)")
    fig.tight_layout()
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2] if len(sys.argv) > 2 else "heatmap.png")
