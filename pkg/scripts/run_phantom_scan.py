#!/usr/bin/env python3
"""Inclusion scans on the shipped phantoms.

phantom_single: one insulating cell, noiseless data.
phantom_double: two insulating cells, 1% multiplicative noise.

Each scan writes the score map (JSON + SVG + CSV) and, because the
phantoms are cell-defined, containment metrics against the truth.
"""
import argparse
import sys
from pathlib import Path

from condlab.cli import main

ROOT = Path(__file__).resolve().parents[1]

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="out/phantoms")
ap.add_argument("--workers", type=int, default=0)
ap.add_argument("--seed", type=int, default=None)
args = ap.parse_args()

worst = 0
for name in ("phantom_single", "phantom_double"):
    print(f"== {name} ==")
    argv = ["mpm-image",
            "--config", str(ROOT / "configs" / f"{name}.json"),
            "--out", f"{args.out}/{name}",
            "--workers", str(args.workers)]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    worst = max(worst, main(argv))
sys.exit(worst)
