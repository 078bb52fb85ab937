#!/usr/bin/env python3
"""End-to-end demo on a synthetic corpus.

Generates a small 8-class fixture corpus, runs scan -> preprocess -> extract
-> train -> evaluate, and leaves every artifact in the output directory for
inspection. Roughly 30 s at the default scale; pass --segments 2000 to run
the full desk-scale experiment (about a minute and ~1.5 GB of scratch).
"""

import argparse
import sys
import time
from pathlib import Path

from divrec.cli import main as divrec


def run(argv) -> None:
    print("+ divrec " + " ".join(str(a) for a in argv))
    rc = divrec([str(a) for a in argv])
    if rc != 0:
        sys.exit(rc)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_run", help="working directory")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--segments", type=int, default=480,
                        help="total segment count (classes x speakers x files x 10)")
    parser.add_argument("--epochs", type=int, default=35)
    args = parser.parse_args()

    # each 100 s file yields ten 10 s segments
    files_per_class = max(1, args.segments // 80)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    started = time.time()
    run(["make-fixture", "--out", out / "corpus", "--seed", args.seed,
         "--speakers-per-class", files_per_class, "--files-per-speaker", 1,
         "--file-seconds", 100])
    run(["scan", out / "corpus", "--out", out / "manifest.csv"])
    run(["preprocess", out / "manifest.csv", "--out-dir", out / "segments",
         "--out", out / "segments.csv", "--workers", 2])
    run(["extract", out / "segments.csv", "--out", out / "cache.feat",
         "--csv", out / "cache.csv"])
    run(["train", out / "cache.feat", "--model-out", out / "model.bin",
         "--metrics-out", out / "metrics.csv", "--seed", args.seed,
         "--epochs", args.epochs])
    run(["evaluate", out / "model.bin", out / "cache.feat", "--split", "val",
         "--seed", args.seed, "--out", out / "report.json",
         "--confusion-csv", out / "confusion.csv"])
    print(f"\ndone in {time.time() - started:.1f}s; artifacts in {out}/")


if __name__ == "__main__":
    main()
