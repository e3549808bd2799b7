"""Shared fixtures: the committed mini dataset and the census-scale corpus.

The utility-trend criteria run on the real prepared census CSV when
MSPAFL_ADULT_CSV points at one (see scripts/prepare_adult.py); otherwise a
deterministic stand-in of identical shape (32,561 rows, 14 standardized
features, ~24% positive labels) is generated in memory so the trend checks
remain runnable offline.
"""

import os
from pathlib import Path

import numpy as np
import pytest

ADULT_ENV = "MSPAFL_ADULT_CSV"
ADULT_ROWS = 32561
ADULT_FEATURES = 14


def synthetic_census_standin() -> tuple[np.ndarray, np.ndarray]:
    gen = np.random.Generator(np.random.Philox(key=np.array([777, 1], dtype=np.uint64)))
    base = gen.normal(size=(ADULT_ROWS, ADULT_FEATURES))
    mix = gen.normal(size=(ADULT_FEATURES, ADULT_FEATURES)) * 0.3 + np.eye(ADULT_FEATURES)
    x = base @ mix
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    w_true = gen.normal(size=ADULT_FEATURES) * 1.2
    margin = x @ w_true + gen.normal(0.0, 1.0, size=ADULT_ROWS)
    labels = np.where(margin > np.quantile(margin, 0.76), 1.0, -1.0)
    return x, labels


@pytest.fixture(scope="session")
def census_data():
    path = os.environ.get(ADULT_ENV, "")
    if path and Path(path).exists():
        from mspafl import data

        return data.load_csv(path)
    return synthetic_census_standin()


@pytest.fixture(scope="session")
def census_csv(census_data, tmp_path_factory):
    """The census corpus written out as a loader-compatible CSV."""
    x, y = census_data
    path = tmp_path_factory.mktemp("census") / "census.csv"
    header = ",".join(f"f{j}" for j in range(x.shape[1])) + ",label"
    zero_one = ((y + 1) // 2).astype(int)
    with path.open("w") as fh:
        fh.write(header + "\n")
        for row, label in zip(x, zero_one):
            fh.write(",".join(repr(float(v)) for v in row) + f",{label}\n")
    return path


@pytest.fixture(scope="session")
def mini_csv():
    return Path(__file__).parent / "fixtures" / "mini.csv"
