#!/usr/bin/env python3
"""Convert the raw UCI Adult training file into the numeric CSV the loader eats.

Recipe (documented so any reimplementation produces the same file):
  1. Read `adult.data` (comma-separated, 14 attribute columns + income).
  2. Keep all 32,561 rows; a missing value ('?') is treated as its own
     category, not dropped.
  3. Integer-code each of the 8 categorical columns by the sorted order of
     its distinct values (so the encoding does not depend on row order).
  4. Standardize every one of the 14 resulting columns to mean 0, variance 1.
  5. Label: 1 for '>50K', 0 for '<=50K'.

Output: header f0..f13,label; floats in full repr precision.

Usage:
  python scripts/prepare_adult.py adult.data adult_numeric.csv
"""

import argparse
import csv
import math
import sys

COLUMNS = 14
CATEGORICAL = {1, 3, 5, 6, 7, 8, 9, 13}  # workclass .. native-country


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("raw", help="path to the raw adult.data file")
    parser.add_argument("out", help="path for the numeric CSV")
    args = parser.parse_args()

    rows = []
    with open(args.raw, newline="") as fh:
        for record in csv.reader(fh):
            if len(record) < COLUMNS + 1:
                continue  # blank/trailer lines
            rows.append([cell.strip() for cell in record[: COLUMNS + 1]])
    if not rows:
        print(f"error: no records in {args.raw}", file=sys.stderr)
        return 1

    codebooks = {
        j: {value: float(code) for code, value in enumerate(sorted({r[j] for r in rows}))}
        for j in CATEGORICAL
    }
    data = [
        [codebooks[j][r[j]] if j in CATEGORICAL else float(r[j]) for j in range(COLUMNS)]
        for r in rows
    ]
    labels = [1 if r[COLUMNS].startswith(">50K") else 0 for r in rows]

    n = len(data)
    means = [sum(r[j] for r in data) / n for j in range(COLUMNS)]
    stds = []
    for j in range(COLUMNS):
        var = sum((r[j] - means[j]) ** 2 for r in data) / n
        stds.append(math.sqrt(var) if var > 0 else 1.0)

    with open(args.out, "w", newline="") as fh:
        fh.write(",".join(f"f{j}" for j in range(COLUMNS)) + ",label\n")
        for r, label in zip(data, labels):
            cells = [repr((r[j] - means[j]) / stds[j]) for j in range(COLUMNS)]
            fh.write(",".join(cells) + f",{label}\n")
    print(f"wrote {n} rows x {COLUMNS} features to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
