"""Loaders for public benchmark files that are not shipped with the package."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .data import dataset_from_arrays
from .errors import DataError

WINE_ENV = "FAIROPT_WINE_QUALITY_DIR"
WINE_FILES = ("winequality-red.csv", "winequality-white.csv")


def find_wine_quality(extra_dirs=()) -> Path | None:
    """Directory holding both Wine Quality CSVs, or None.

    Looks in ``$FAIROPT_WINE_QUALITY_DIR``, then ``extra_dirs``.
    """
    candidates = [os.environ.get(WINE_ENV)] + [str(d) for d in extra_dirs]
    for c in candidates:
        if c and all((Path(c) / f).is_file() for f in WINE_FILES):
            return Path(c)
    return None


def _read_semicolon(path):
    with open(path) as fh:
        header = [h.strip().strip('"') for h in fh.readline().split(";")]
    data = np.loadtxt(path, delimiter=";", skiprows=1)
    return header, data


def load_wine_quality(directory, threshold: int = 6):
    """Red and white wines stacked; Z = 1 for red, Y = +1 when quality >= threshold.

    The 11 physico-chemical measurements are the predictors.
    """
    directory = Path(directory)
    blocks, zs, names = [], [], None
    for z_val, fname in ((1.0, WINE_FILES[0]), (0.0, WINE_FILES[1])):
        path = directory / fname
        if not path.is_file():
            raise DataError(f"missing {path}")
        header, data = _read_semicolon(path)
        if names is None:
            names = header
        elif header != names:
            raise DataError("red and white files have different columns")
        blocks.append(data)
        zs.append(np.full(data.shape[0], z_val))
    data = np.vstack(blocks)
    q = names.index("quality")
    x = np.delete(data, q, axis=1)
    y = np.where(data[:, q] >= threshold, 1.0, -1.0)
    x_names = tuple(n for i, n in enumerate(names) if i != q)
    return dataset_from_arrays(x, y, np.concatenate(zs), z_kinds=["binary"],
                               x_names=x_names, z_names=("red",), y_name="good_quality",
                               y_kind="binary", y_levels=("-1", "1"))
