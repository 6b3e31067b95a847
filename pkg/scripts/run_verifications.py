#!/usr/bin/env python3
"""Run every theorem-level verification harness and print PASS/FAIL lines.

Results (per-cell rows plus a JSON verdict) are written under
results/verify/.  Exits nonzero if any check fails.
"""

import sys

from convmmd.cli import main

CHECKS = [
    "equivalence",
    "deviation-bound",
    "variance-bound",
    "clt-rate",
    "gradient-check",
]

if __name__ == "__main__":
    worst = 0
    for check in sys.argv[1:] or CHECKS:
        code = main(["verify", check, "--out", "results/verify"])
        worst = max(worst, code)
    sys.exit(worst)
