"""Plot moment series written by ``ballistic run``.

    python3 scripts/plot_series.py RUN_DIR [RUN_DIR ...] -o moments.png

Left: log-log ``||psi(t)||_r`` for every recorded order with a ``t^r``
guide.  Right: the ratio ``||psi(t)||_r / t^r``.  Needs matplotlib
(``pip install .[plot]``).
"""

import argparse
import csv
from pathlib import Path

import numpy as np


def read_series(path):
    with open(path) as fh:
        header_comment = fh.readline().strip()
        rows = list(csv.reader(fh))
    cols = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return header_comment, cols, data


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("runs", nargs="+", type=Path)
    ap.add_argument("-o", "--output", default="moments.png")
    args = ap.parse_args(argv)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax, axr) = plt.subplots(1, 2, figsize=(11, 4.5))
    for run in args.runs:
        _, cols, data = read_series(run / "series.csv")
        t = data[:, 0]
        late = t >= 1
        for j, c in enumerate(cols):
            if not c.startswith("r=") or c == "r=0":
                continue
            r = float(c[2:])
            y = data[:, j]
            ax.loglog(t[late], y[late], label=f"{run.name} {c}")
            axr.semilogx(t[late], y[late] / t[late] ** r, label=f"{run.name} {c}")
    tt = np.geomspace(1, ax.get_xlim()[1], 50)
    ax.loglog(tt, tt, "k--", lw=0.8, label="t")
    ax.set_xlabel("t")
    ax.set_ylabel("||psi(t)||_r")
    axr.set_xlabel("t")
    axr.set_ylabel("||psi(t)||_r / t^r")
    ax.legend(fontsize=7)
    axr.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
