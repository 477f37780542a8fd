"""Shared anchor data used to align the parties' reduced coordinate systems."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import ValidationError


@dataclass(frozen=True)
class AnchorDataset:
    X: np.ndarray
    ranges: tuple
    seed: int | None = None

    def __post_init__(self):
        X = np.array(np.atleast_2d(self.X), dtype=float)
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "ranges", tuple((float(a), float(b)) for a, b in self.ranges))
        if X.shape[0] < 1:
            raise ValidationError("anchor needs at least one row")
        if len(self.ranges) != X.shape[1]:
            raise ValidationError("one (min, max) range per anchor column required")

    @property
    def r(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


def column_ranges(X: np.ndarray) -> list:
    X = np.atleast_2d(X)
    return list(zip(X.min(axis=0).tolist(), X.max(axis=0).tolist()))


def generate_anchor(ranges, r: int, rng: np.random.Generator, seed=None) -> AnchorDataset:
    ranges = [(float(a), float(b)) for a, b in ranges]
    if r < 1:
        raise ValidationError("anchor size r must be >= 1")
    for j, (lo, hi) in enumerate(ranges):
        if lo > hi:
            raise ValidationError(f"anchor column {j}: min {lo} > max {hi}")
    lo = np.array([a for a, _ in ranges])
    hi = np.array([b for _, b in ranges])
    X = lo + (hi - lo) * rng.random((r, len(ranges)))
    return AnchorDataset(X, tuple(ranges), seed)


def slice_anchor(anchor: AnchorDataset, col_group) -> np.ndarray:
    cols = np.asarray(col_group, dtype=np.int64)
    if cols.size and (cols.min() < 0 or cols.max() >= anchor.m):
        raise IndexError(f"anchor has {anchor.m} columns; got indices {cols.tolist()}")
    return anchor.X[:, cols]


def write_anchor(anchor: AnchorDataset, directory) -> list:
    """Write ``anchor.csv`` and ``anchor.meta.json``; returns the file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(anchor.X, columns=[f"a{j + 1}" for j in range(anchor.m)]).to_csv(
        directory / "anchor.csv", index=False, float_format="%.17g")
    meta = {"r": anchor.r, "seed": anchor.seed, "ranges": [list(p) for p in anchor.ranges]}
    (directory / "anchor.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return ["anchor.csv", "anchor.meta.json"]


def read_anchor(directory) -> AnchorDataset:
    directory = Path(directory)
    X = pd.read_csv(directory / "anchor.csv", float_precision="round_trip").to_numpy(dtype=float)
    meta = json.loads((directory / "anchor.meta.json").read_text())
    return AnchorDataset(X, tuple(tuple(p) for p in meta["ranges"]), meta.get("seed"))
