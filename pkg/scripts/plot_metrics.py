#!/usr/bin/env python3
"""Plot a training-metrics CSV (and optionally a confusion CSV) to PNG.

Usage: plot_metrics.py metrics.csv [--confusion confusion.csv] [--out plots/]
Requires matplotlib, which the package itself does not depend on.
"""

import argparse
import csv
from pathlib import Path

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    raise SystemExit("this script needs matplotlib (pip install matplotlib)")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("metrics")
    parser.add_argument("--confusion", help="confusion matrix CSV from evaluate")
    parser.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(args.metrics, newline="") as fh:
        rows = list(csv.DictReader(fh))
    epochs = [int(r["epoch"]) for r in rows]

    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(11, 4))
    ax_acc.plot(epochs, [float(r["train_acc"]) for r in rows], label="train")
    ax_acc.plot(epochs, [float(r["val_acc"]) for r in rows], label="validation")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.legend()
    ax_loss.plot(epochs, [float(r["train_loss"]) for r in rows], label="train")
    ax_loss.plot(epochs, [float(r["val_loss"]) for r in rows], label="validation")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("cross-entropy loss")
    ax_loss.legend()
    fig.tight_layout()
    fig.savefig(out / "training_curves.png", dpi=120)
    print(f"wrote {out / 'training_curves.png'}")

    if args.confusion:
        with open(args.confusion, newline="") as fh:
            reader = csv.reader(fh)
            labels = next(reader)
            matrix = [[int(v) for v in row] for row in reader]
        fig, ax = plt.subplots(figsize=(6.5, 6))
        im = ax.imshow(matrix, cmap="Blues")
        ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        threshold = max(max(row) for row in matrix) / 2
        for i, row in enumerate(matrix):
            for j, v in enumerate(row):
                ax.text(j, i, str(v), ha="center", va="center",
                        color="white" if v > threshold else "black")
        fig.colorbar(im)
        fig.tight_layout()
        fig.savefig(out / "confusion_matrix.png", dpi=120)
        print(f"wrote {out / 'confusion_matrix.png'}")


if __name__ == "__main__":
    main()
