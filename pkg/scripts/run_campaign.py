"""Full benchmark campaign: every object, every cell, both modes.

Writes trials.csv, summary.json, success.svg, time.svg and run.json (wall
time and environment) into the output directory, artifacts/campaign by
default. Extra arguments are passed to ``regrasp compare``.

    python scripts/run_campaign.py [--out DIR] [--workers N] [--trials N]
"""
import sys
from pathlib import Path

from regrasp.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--out" not in argv:
        argv += ["--out", str(ROOT / "artifacts" / "campaign")]
    sys.exit(main(["--cache-dir", str(ROOT / ".cache" / "regrasp"), "-v", "compare"] + argv))
