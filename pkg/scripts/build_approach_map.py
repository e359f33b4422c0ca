"""Build (or rebuild) the cached approach maps and print the handover point.

    python scripts/build_approach_map.py [--config FILE] [--rebuild-cache]
"""
import sys
from pathlib import Path

from regrasp.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(main(["--cache-dir", str(ROOT / ".cache" / "regrasp")] + sys.argv[1:]
                  + ["build-cache"]))
