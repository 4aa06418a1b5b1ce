#!/usr/bin/env python3
"""Regenerates the point-cloud fixtures in data/ (deterministic)."""

import math
import pathlib
import random

N = 20000
DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def write(name, header, rows):
    with open(DATA / name, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(f"{v:.9g}" for v in row) + "\n")


def line_r10(rng):
    direction = [rng.gauss(0.0, 1.0) for _ in range(10)]
    norm = math.sqrt(sum(v * v for v in direction))
    direction = [v / norm for v in direction]
    offset = [rng.uniform(-1.0, 1.0) for _ in range(10)]
    for _ in range(N):
        t = rng.uniform(0.0, 1.0)
        yield [o + t * d for o, d in zip(offset, direction)]


def cube5(rng):
    for _ in range(N):
        yield [rng.uniform(0.0, 1.0) for _ in range(5)]


def main():
    DATA.mkdir(exist_ok=True)
    write("line_r10.csv", [f"x{i}" for i in range(10)], line_r10(random.Random(101)))
    write("cube5.csv", [f"x{i}" for i in range(5)], cube5(random.Random(202)))


if __name__ == "__main__":
    main()
