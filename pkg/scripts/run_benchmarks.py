#!/usr/bin/env python3
"""Run the full benchmark suite from the bundled experiment configs.

Each config runs 10 replications and writes rows.csv / aggregates.csv /
report.json under results/<config name>/.  Pass config names to run a
subset, e.g.:

    python scripts/run_benchmarks.py table1_gaussian_homo table2_laplace_hetero
"""

import importlib.resources
import sys
import tempfile

from convmmd.cli import main

ALL = [
    "table1_gaussian_homo",
    "table1_student_t_hetero",
    "table2_gaussian_homo",
    "table2_laplace_hetero",
    "logistic_synthetic",
]


def run(names):
    configs = importlib.resources.files("convmmd") / "configs"
    for name in names:
        print(f"=== {name} ===", flush=True)
        with tempfile.NamedTemporaryFile("w", suffix=".cfg") as tmp:
            tmp.write((configs / f"{name}.cfg").read_text())
            tmp.flush()
            code = main(["experiment", "--config", tmp.name,
                         "--out", f"results/{name}"])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:] or ALL))
