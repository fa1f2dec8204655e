#!/usr/bin/env python3
"""Train the pair task at desk scale and fit the reduced model.

Writes the training record, the fitted-rate JSON, and the fitted theory
curve into a fresh run directory (default ./runs).
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from repdyn.cli import main

if __name__ == "__main__":
    config = Path(__file__).resolve().parents[1] / "configs" / "two_point.cfg"
    sys.exit(main(["run", str(config), *sys.argv[1:]]))
