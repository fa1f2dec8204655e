#!/usr/bin/env python3
"""Fit effective rates per hidden layer on the pair task.

Artifacts land in a fresh run directory (default ./runs).
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from repdyn.cli import main

if __name__ == "__main__":
    config = Path(__file__).resolve().parents[1] / "configs" / "depth_sweep.cfg"
    sys.exit(main(["run", str(config), *sys.argv[1:]]))
