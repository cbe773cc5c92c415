#!/usr/bin/env python
import sys

from fairpls.experiment import run_benchmark
from fairpls.optimize import GdParams


sizes = [
    (200, 10),
    (1000, 10),
    (1000, 50),
    (5000, 50),
    (20000, 100),
]


def main(k: int = 2, repeats: int = 5):
    for eta in (0.0, 1.0):
        print(f"Timing fits at eta={eta}")
        table = run_benchmark(sizes, k=k, repeats=repeats, eta=eta, gd=GdParams(restarts=1))
        table.to_csv(sys.stdout, index=False)


if __name__ == "__main__":
    main()
