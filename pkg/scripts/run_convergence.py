#!/usr/bin/env python3
"""Annulus energy convergence against the radial closed form.

Thin wrapper over `condlab convergence-study` with the shipped config;
useful as a smoke test after touching the solver.
"""
import argparse
import sys
from pathlib import Path

from condlab.cli import main

ROOT = Path(__file__).resolve().parents[1]

ap = argparse.ArgumentParser()
ap.add_argument("--config", default=str(ROOT / "configs" /
                                        "annulus_convergence.json"))
ap.add_argument("--out", default="out/convergence")
args = ap.parse_args()

sys.exit(main(["convergence-study", "--config", args.config,
               "--out", args.out]))
