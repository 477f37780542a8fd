"""Datasets, partition schemes and per-party blocks.

A :class:`Dataset` is the centralized view (only ever materialized by the
benchmark harness or by a single data holder). :func:`partition` cuts it into
the ``c x d`` grid of :class:`PartyBlock` objects, keeping global sample ids on
every row so results can later be aligned sample by sample.
"""

from __future__ import annotations

import json
import logging
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class ValidationError(ValueError):
    """Inputs violate a structural contract (shapes, partitions, ranges)."""


class ConfigError(ValueError):
    """A configuration file or schema is missing something mandatory."""


class DataLoadError(ValueError):
    """A data file could not be parsed into a Dataset."""


def _frozen(a, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Outcomes:
    """Survival outcomes aligned to a set of ids."""

    ids: np.ndarray
    t: np.ndarray
    delta: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", _frozen(self.ids, np.int64))
        object.__setattr__(self, "t", _frozen(self.t, float))
        object.__setattr__(self, "delta", _frozen(self.delta, np.int64))
        object.__setattr__(self, "Z", _frozen(self.Z, np.int64))
        n = len(self.ids)
        if not (len(self.t) == len(self.delta) == len(self.Z) == n):
            raise ValidationError("ids, t, delta and Z must have equal length")

    def __len__(self):
        return len(self.ids)

    def take(self, ids) -> "Outcomes":
        pos = _positions(self.ids, ids)
        return Outcomes(self.ids[pos], self.t[pos], self.delta[pos], self.Z[pos])

    @staticmethod
    def concat(parts: Sequence["Outcomes"]) -> "Outcomes":
        return Outcomes(
            np.concatenate([p.ids for p in parts]),
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.delta for p in parts]),
            np.concatenate([p.Z for p in parts]),
        )


@dataclass(frozen=True)
class Dataset:
    ids: np.ndarray
    X: np.ndarray
    t: np.ndarray
    delta: np.ndarray
    Z: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "ids", _frozen(self.ids, np.int64))
        object.__setattr__(self, "t", _frozen(self.t, float))
        object.__setattr__(self, "delta", _frozen(self.delta, np.int64))
        object.__setattr__(self, "Z", _frozen(self.Z, np.int64))
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{j + 1}" for j in range(X.shape[1])))
        n = len(self.ids)
        if not (X.shape[0] == len(self.t) == len(self.delta) == len(self.Z) == n):
            raise ValidationError("ids, X rows, t, delta and Z must have identical length")
        if len(self.columns) != X.shape[1]:
            raise ValidationError("column names do not match covariate count")
        if len(np.unique(self.ids)) != n:
            raise ValidationError("sample ids must be unique")
        if np.any(self.t < 0) or not np.all(np.isfinite(self.t)):
            raise ValidationError("observed times must be finite and nonnegative")
        if not np.isin(self.delta, (0, 1)).all():
            raise ValidationError("event indicator must be 0/1")
        if not np.isin(self.Z, (0, 1)).all():
            raise ValidationError("treatment must be 0/1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def outcomes(self) -> Outcomes:
        return Outcomes(self.ids, self.t, self.delta, self.Z)

    def rows(self, ids) -> np.ndarray:
        """Covariate rows for the given ids, in the given order."""
        return self.X[_positions(self.ids, ids)]

    def subset(self, ids) -> "Dataset":
        pos = _positions(self.ids, ids)
        return Dataset(self.ids[pos], self.X[pos], self.t[pos], self.delta[pos], self.Z[pos],
                       self.columns)


def _positions(haystack: np.ndarray, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    order = np.argsort(haystack, kind="stable")
    idx = np.searchsorted(haystack, ids, sorter=order)
    idx = np.clip(idx, 0, len(haystack) - 1)
    pos = order[idx] if len(haystack) else idx
    if len(ids) and (len(haystack) == 0 or np.any(haystack[pos] != ids)):
        missing = ids[haystack[pos] != ids] if len(haystack) else ids
        raise KeyError(f"unknown sample ids: {missing[:5].tolist()}")
    return pos


@dataclass(frozen=True)
class PartitionScheme:
    """``c`` row groups (institutions) by ``d`` column groups."""

    row_groups: tuple
    col_groups: tuple

    def __post_init__(self):
        object.__setattr__(self, "row_groups", tuple(_frozen(g, np.int64) for g in self.row_groups))
        object.__setattr__(self, "col_groups", tuple(_frozen(g, np.int64) for g in self.col_groups))

    @property
    def c(self) -> int:
        return len(self.row_groups)

    @property
    def d(self) -> int:
        return len(self.col_groups)

    def validate(self, n: int, m: int) -> None:
        for name, groups, size in (("row", self.row_groups, n), ("column", self.col_groups, m)):
            if not groups:
                raise ValidationError(f"no {name} groups")
            if any(len(g) == 0 for g in groups):
                raise ValidationError(f"empty {name} group")
            allidx = np.concatenate(groups)
            if len(allidx) != size or not np.array_equal(np.sort(allidx), np.arange(size)):
                raise ValidationError(
                    f"{name} groups must be disjoint and cover 0..{size - 1}")

    @classmethod
    def random_rows(cls, n: int, c: int, col_groups, rng: np.random.Generator):
        """Random near-equal row split; remainder goes to the lowest-index institutions."""
        if c < 1 or c > n:
            raise ValidationError(f"cannot split {n} samples into {c} institutions")
        perm = rng.permutation(n)
        sizes = [n // c + (1 if k < n % c else 0) for k in range(c)]
        bounds = np.cumsum([0] + sizes)
        rows = [np.sort(perm[bounds[k]:bounds[k + 1]]) for k in range(c)]
        return cls(tuple(rows), tuple(col_groups))

    @staticmethod
    def even_columns(m: int, d: int) -> list:
        """Contiguous column groups of near-equal size."""
        if d < 1 or d > m:
            raise ValidationError(f"cannot split {m} covariates into {d} groups")
        return [np.asarray(g) for g in np.array_split(np.arange(m), d)]


@dataclass(frozen=True)
class PartyBlock:
    """Data held by party ``(k, l)`` (1-based institution and column-group labels)."""

    k: int
    l: int
    ids: np.ndarray
    X: np.ndarray
    columns: tuple
    outcomes: Optional[Outcomes] = None
    col_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(self, "ids", _frozen(self.ids, np.int64))
        object.__setattr__(self, "X", _frozen(np.atleast_2d(np.asarray(self.X, dtype=float))))
        object.__setattr__(self, "col_index", _frozen(self.col_index, np.int64))
        if self.X.shape[0] != len(self.ids):
            raise ValidationError("block rows do not match ids")
        if len(self.columns) != self.X.shape[1]:
            raise ValidationError("block columns do not match covariate names")
        if self.outcomes is not None and not np.array_equal(self.outcomes.ids, self.ids):
            raise ValidationError("outcomes must be aligned to block ids")

    @property
    def party(self) -> tuple:
        return (self.k, self.l)

    @property
    def m_l(self) -> int:
        return self.X.shape[1]


def partition(dataset: Dataset, scheme: PartitionScheme) -> list:
    """Split ``dataset`` into ``c*d`` blocks, ordered by institution then column group.

    Outcomes are attached to the first column group (``l == 1``) of each
    institution only.
    """
    scheme.validate(dataset.n, dataset.m)
    blocks = []
    for k, rows in enumerate(scheme.row_groups, start=1):
        ids = dataset.ids[rows]
        out = Outcomes(ids, dataset.t[rows], dataset.delta[rows], dataset.Z[rows])
        for l, cols in enumerate(scheme.col_groups, start=1):
            blocks.append(PartyBlock(
                k=k, l=l, ids=ids, X=dataset.X[np.ix_(rows, cols)],
                columns=tuple(dataset.columns[j] for j in cols),
                outcomes=out if l == 1 else None, col_index=cols,
            ))
    return blocks


def reassemble(blocks: Sequence[PartyBlock]) -> Dataset:
    """Inverse of :func:`partition`: rows sorted by id, columns in original order."""
    by_k: dict = {}
    for b in blocks:
        by_k.setdefault(b.k, []).append(b)
    ids, X, outs = [], [], []
    col_index = None
    columns = None
    for k in sorted(by_k):
        parts = sorted(by_k[k], key=lambda b: b.l)
        cidx = np.concatenate([b.col_index for b in parts])
        order = np.argsort(cidx)
        if col_index is None:
            col_index = cidx[order]
            columns = tuple(np.concatenate([b.columns for b in parts])[order].tolist())
        ids.append(parts[0].ids)
        X.append(np.hstack([b.X for b in parts])[:, order])
        holders = [b.outcomes for b in parts if b.outcomes is not None]
        if len(holders) != 1:
            raise ValidationError(f"institution {k} must have exactly one outcome holder")
        outs.append(holders[0])
    ids = np.concatenate(ids)
    X = np.vstack(X)
    out = Outcomes.concat(outs)
    order = np.argsort(ids, kind="stable")
    return Dataset(ids[order], X[order], out.t[order], out.delta[order], out.Z[order], columns)


# --------------------------------------------------------------------------- CSV

_RULE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*(>=|<=|==|!=|>|<)\s*(\S+)\s*$")
_OPS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le,
        "==": operator.eq, "!=": operator.ne}


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``treatment_rule`` is a string ``"<col> <op> <value>"`` such as
    ``"age > 60"``; the source column is then dropped from the covariates
    unless ``keep_rule_column`` is set (keeping it makes the treatment a
    deterministic function of a covariate).
    """

    time: str
    event: str
    treatment: Optional[str] = None
    treatment_rule: Optional[str] = None
    delimiter: str = ","
    exclude: tuple = ()
    keep_rule_column: bool = False
    event_value: Optional[float] = None

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        for key in ("time", "event"):
            if key not in d:
                raise ConfigError(f"schema is missing mandatory key {key!r}")
        if not d.get("treatment") and not d.get("treatment_rule"):
            raise ConfigError("schema needs either 'treatment' or 'treatment_rule'")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown schema keys: {sorted(extra)}")
        d = dict(d)
        d["exclude"] = tuple(d.get("exclude", ()))
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "CsvSchema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def parse_rule(rule: str):
    m = _RULE.match(rule)
    if not m:
        raise ConfigError(f"cannot parse treatment rule {rule!r}; expected '<col> <op> <value>'")
    col, op, value = m.groups()
    try:
        value = float(value)
    except ValueError:
        value = value.strip("'\"")
    return col, _OPS[op], value


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a delimited file into a :class:`Dataset`.

    Rows with any missing value are dropped (listwise deletion) and the count
    is logged as a warning. Every column not named by the schema must be
    numeric.
    """
    path = Path(path)
    if not path.exists():
        raise DataLoadError(f"no such file: {path}")
    df = pd.read_csv(path, sep=schema.delimiter, float_precision="round_trip")
    df.columns = [str(c).strip() for c in df.columns]

    rule = parse_rule(schema.treatment_rule) if schema.treatment_rule else None
    needed = [schema.time, schema.event] + ([rule[0]] if rule else [schema.treatment])
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise ConfigError(f"{path.name}: missing mandatory column(s) {missing}")

    before = len(df)
    df = df.dropna(axis=0, how="any").reset_index(drop=True)
    dropped = before - len(df)
    if dropped:
        logger.warning("%s: dropped %d row(s) with missing values", path.name, dropped)
    if len(df) == 0:
        raise DataLoadError(f"{path.name}: no complete rows")

    if rule:
        col, op, value = rule
        Z = op(df[col], value).astype(np.int64).to_numpy()
    else:
        Z = _numeric(df, schema.treatment, path).astype(np.int64)

    role_cols = {schema.time, schema.event}
    if schema.treatment:
        role_cols.add(schema.treatment)
    if rule and not schema.keep_rule_column:
        role_cols.add(rule[0])
    role_cols |= set(schema.exclude)
    cov_cols = [c for c in df.columns if c not in role_cols]
    if not cov_cols:
        raise ConfigError(f"{path.name}: no covariate columns left")
    X = np.column_stack([_numeric(df, c, path) for c in cov_cols])

    t = _numeric(df, schema.time, path)
    ev = _numeric(df, schema.event, path)
    if schema.event_value is not None:
        ev = (ev == schema.event_value).astype(float)
    if not np.isin(ev, (0, 1)).all():
        raise DataLoadError(f"{path.name}: event column {schema.event!r} must be 0/1 "
                            "(set event_value to recode)")
    return Dataset(np.arange(len(df)), X, t, ev.astype(np.int64), Z, tuple(cov_cols))


def _numeric(df: pd.DataFrame, col: str, path: Path) -> np.ndarray:
    conv = pd.to_numeric(df[col], errors="coerce")
    bad = conv.isna().to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataLoadError(
            f"{path.name}: non-numeric value {df[col].iloc[row]!r} in column {col!r} "
            f"(data row {row + 1}); run 'preprocess' to encode categorical columns")
    return conv.to_numpy(dtype=float)


def preprocess_frame(df: pd.DataFrame, impute: bool = True, one_hot: Sequence[str] = (),
                     keep: Sequence[str] = ()) -> pd.DataFrame:
    """Mean-impute numeric columns and one-hot encode categorical ones.

    Columns in ``keep`` are never imputed (outcome columns should not be
    filled in). Non-numeric columns not listed in ``one_hot`` are encoded too.
    """
    df = df.copy()
    cat = list(one_hot) + [c for c in df.columns
                           if c not in one_hot and c not in keep
                           and not pd.api.types.is_numeric_dtype(df[c])]
    if cat:
        df = pd.get_dummies(df, columns=cat, drop_first=True, dtype=float)
    if impute:
        for c in df.columns:
            if c in keep or not pd.api.types.is_numeric_dtype(df[c]):
                continue
            if df[c].isna().any():
                df[c] = df[c].fillna(df[c].mean())
    return df


def write_dataset_csv(dataset: Dataset, path, with_ids: bool = False) -> None:
    cols = {}
    if with_ids:
        cols["id"] = dataset.ids
    for j, name in enumerate(dataset.columns):
        cols[name] = dataset.X[:, j]
    cols["time"] = dataset.t
    cols["event"] = dataset.delta
    cols["treat"] = dataset.Z
    pd.DataFrame(cols).to_csv(path, index=False, float_format="%.17g")
