#!/usr/bin/env python3
"""Train XOR and report equal-target pair merging.

Artifacts land in a fresh run directory (default ./runs).
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from repdyn.cli import main

if __name__ == "__main__":
    config = Path(__file__).resolve().parents[1] / "configs" / "xor.cfg"
    sys.exit(main(["run", str(config), *sys.argv[1:]]))
