"""Run the WMR locomotion pipeline.

Usage:
    python scripts/run_wmr.py train --config configs/smoke.toml
    python scripts/run_wmr.py eval --checkpoint runs/checkpoints/final.wmr --payload-sweep
    python scripts/run_wmr.py ablate --variants wmr,no-cutoff --seeds 1,2,3 --budget 100
    python scripts/run_wmr.py replay --checkpoint runs/checkpoints/final.wmr --scenario stair-descent
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from wmr.cli import main

if __name__ == "__main__":
    sys.exit(main())
