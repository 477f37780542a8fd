"""Analysis modes (CA, LA, LMCA, DC-QE) and the repeated-experiment harness."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import synth
from .anchor import AnchorDataset, column_ranges, generate_anchor, slice_anchor
from .collab import (anchor_alignment_error, build_collab_representation,
                     build_collab_transforms)
from .data import (ConfigError, CsvSchema, Dataset, Outcomes, PartitionScheme,
                   ValidationError, load_csv, partition)
from .matching import MatchConfig, MatchedSet, caliper_match, matched_sample_size
from .metrics import BalanceReport, balance, gap, inconsistency
from .propensity import PropensityScores, estimate
from .reduce import IntermediateRep, default_dim, encode_party
from .survival import SurvivalCurve, eval_step, km_by_group

logger = logging.getLogger(__name__)

METRICS = ("sample_size", "masmd", "inconsistency", "gap_treated", "gap_control")


@dataclass
class MethodResult:
    method: str
    scores: PropensityScores
    matched: MatchedSet
    curves: tuple
    balance: Optional[BalanceReport] = None
    extras: dict = field(default_factory=dict)

    @property
    def sample_size(self) -> int:
        return matched_sample_size(self.matched)


def _finish(method, scores, outcomes: Outcomes, config: MatchConfig, truth, matched=None):
    if matched is None:
        matched = caliper_match(scores, outcomes.take(scores.ids).Z, config)
    curves = km_by_group(matched.matched_ids, outcomes)
    bal = balance(truth, matched) if truth is not None else None
    return MethodResult(method, scores, matched, curves, bal)


def run_ca(dataset: Dataset, config: MatchConfig = MatchConfig()) -> MethodResult:
    """Centralized analysis on the full covariate matrix."""
    scores = estimate(dataset.X, dataset.Z, dataset.ids, "CA")
    return _finish("CA", scores, dataset.outcomes, config, dataset)


def run_la(block, config: MatchConfig = MatchConfig(), truth: Dataset | None = None,
           outcomes: Outcomes | None = None) -> MethodResult:
    """Local analysis by one user on its own covariates and outcomes."""
    outcomes = outcomes if outcomes is not None else block.outcomes
    if outcomes is None:
        raise ValidationError(f"party {block.party} holds no outcomes")
    outcomes = outcomes.take(block.ids)
    name = f"LA({block.k},{block.l})"
    scores = estimate(block.X, outcomes.Z, block.ids, name)
    return _finish(name, scores, outcomes, config, truth)


def run_lmca(blocks: Sequence, config: MatchConfig = MatchConfig(),
             truth: Dataset | None = None) -> MethodResult:
    """Local matching, then pooled Kaplan-Meier on the shared matched outcomes."""
    locals_ = [run_la(b, config) for b in blocks]
    scores = PropensityScores(np.concatenate([r.scores.ids for r in locals_]),
                              np.concatenate([r.scores.scores for r in locals_]), "LMCA")
    matched = MatchedSet(
        np.concatenate([r.matched.treated for r in locals_]),
        np.concatenate([r.matched.control for r in locals_]),
        max(r.matched.caliper_width for r in locals_),
        np.concatenate([r.matched.gaps for r in locals_]),
    )
    pooled = Outcomes.concat([b.outcomes.take(b.ids) for b in blocks])
    return _finish("LMCA", scores, pooled, config, truth, matched=matched)


def _institution_reps(reps: Sequence[IntermediateRep]):
    """Group reps by institution and concatenate column groups in ``l`` order."""
    by_k: dict = {}
    for rep in reps:
        by_k.setdefault(rep.party[0], []).append(rep)
    out = {}
    for k in sorted(by_k):
        parts = sorted(by_k[k], key=lambda r: r.party[1])
        if parts[0].kind == "data":
            ids = parts[0].ids
            mats = []
            for p in parts:
                if not np.array_equal(p.ids, ids):
                    order = np.argsort(p.ids)
                    pos = order[np.searchsorted(p.ids, ids, sorter=order)]
                    if not np.array_equal(p.ids[pos], ids):
                        raise ValidationError(f"institution {k}: parties hold different samples")
                    mats.append(p.matrix[pos])
                else:
                    mats.append(p.matrix)
            out[k] = (ids, np.hstack(mats))
        else:
            out[k] = np.hstack([p.matrix for p in parts])
    return out


def analyst_estimate(data_reps: Sequence[IntermediateRep],
                     anchor_reps: Sequence[IntermediateRep],
                     outcomes: dict, target_dim: int | None,
                     config: MatchConfig = MatchConfig(), truth: Dataset | None = None,
                     name: str = "DCQE") -> MethodResult:
    """Analyst side: fuse shared representations, then score, match and estimate curves.

    ``outcomes`` maps institution ``k`` to its :class:`Outcomes`.
    """
    data = _institution_reps(data_reps)
    anc = _institution_reps(anchor_reps)
    if sorted(data) != sorted(anc):
        raise ValidationError("data and anchor representations cover different institutions")
    ks = sorted(data)
    missing = [k for k in ks if k not in outcomes]
    if missing:
        raise ValidationError(f"no outcomes shared for institution(s) {missing}")
    if target_dim is None:
        target_dim = min(anc[k].shape[1] for k in ks)
    transforms = build_collab_transforms([anc[k] for k in ks], target_dim, ks)
    collab = build_collab_representation([data[k] for k in ks], transforms)
    pooled = Outcomes.concat([outcomes[k].take(data[k][0]) for k in ks])
    scores = estimate(collab.X, pooled.Z, collab.ids, name)
    res = _finish(name, scores, pooled, config, truth)
    res.extras["collab"] = collab
    res.extras["alignment_error"] = anchor_alignment_error([anc[k] for k in ks], transforms)
    return res


def resolve_dims(blocks, dims) -> dict:
    if dims is None:
        return {b.party: default_dim(b.m_l) for b in blocks}
    if isinstance(dims, (int, np.integer)):
        return {b.party: int(dims) for b in blocks}
    return {b.party: int(dims[b.party]) for b in blocks}


def run_dcqe(blocks: Sequence, anchor: AnchorDataset, dims=None, target_dim: int | None = None,
             config: MatchConfig = MatchConfig(), standardize: bool = False,
             protocol: bool = False, truth: Dataset | None = None,
             name: str = "DCQE") -> MethodResult:
    """Full two-role procedure run in-process on the given party blocks."""
    _check_rectangle(blocks)
    dims = resolve_dims(blocks, dims)
    data_reps, anchor_reps, outcomes = [], [], {}
    for b in blocks:
        d, a = encode_party(b, slice_anchor(anchor, b.col_index), dims[b.party],
                            standardize, protocol)
        data_reps.append(d)
        anchor_reps.append(a)
        if b.outcomes is not None:
            if b.k in outcomes:
                raise ValidationError(f"institution {b.k} has more than one outcome holder")
            outcomes[b.k] = b.outcomes
    return analyst_estimate(data_reps, anchor_reps, outcomes, target_dim, config, truth, name)


def _check_rectangle(blocks):
    ks = sorted({b.k for b in blocks})
    ls = sorted({b.l for b in blocks})
    have = {b.party for b in blocks}
    if len(have) != len(blocks):
        raise ValidationError("duplicate party in scope")
    missing = [(k, l) for k in ks for l in ls if (k, l) not in have]
    if missing:
        raise ValidationError(f"scope is not a rectangle; missing parties {missing}")


def select_scope(blocks: Sequence, scope) -> list:
    """Pick blocks by a named scope (``left``, ``top``, ``whole``) or explicit parties."""
    if scope in (None, "whole", "all"):
        return list(blocks)
    if scope == "left":
        return [b for b in blocks if b.l == 1]
    if scope == "top":
        return [b for b in blocks if b.k == 1]
    wanted = [tuple(p) for p in scope]
    index = {b.party: b for b in blocks}
    unknown = [p for p in wanted if p not in index]
    if unknown:
        raise ConfigError(f"scope names unknown parties {unknown}")
    return [index[p] for p in wanted]


# --------------------------------------------------------------------------- experiments

@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str
    party: tuple = (1, 1)
    scope: object = "whole"
    dim: object = None
    target_dim: Optional[int] = None

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        kind = d.get("kind", "").upper().replace("-", "")
        if kind not in ("CA", "LA", "LMCA", "DCQE"):
            raise ConfigError(f"unknown method kind {d.get('kind')!r}")
        dim = d.get("dim")
        if isinstance(dim, dict):
            dim = {tuple(int(x) for x in key.split(",")): int(v) for key, v in dim.items()}
        scope = d.get("scope", "whole")
        if isinstance(scope, list):
            scope = tuple(tuple(p) for p in scope)
        return cls(d.get("name", kind), kind, tuple(d.get("party", (1, 1))), scope, dim,
                   d.get("target_dim"))


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple
    synthetic: Optional[synth.SynthConfig] = None
    csv_path: Optional[str] = None
    schema: Optional[CsvSchema] = None
    c: int = 2
    d: int = 2
    col_groups: Optional[tuple] = None
    anchor_size: Optional[int] = None
    standardize: bool = False
    match: MatchConfig = MatchConfig()
    repetitions: int = 100
    seed: int = 0
    curve_points: int = 101
    horizon: Optional[float] = None
    name: str = "experiment"
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        d = dict(d)
        data = d.get("data")
        if not isinstance(data, dict):
            raise ConfigError("config needs a 'data' section")
        source = data.get("source")
        kw = {}
        if source == "synthetic":
            kw["synthetic"] = synth.SynthConfig.from_dict(
                {k: v for k, v in data.items() if k != "seed"})
        elif source == "csv":
            if "path" not in data or "schema" not in data:
                raise ConfigError("csv data source needs 'path' and 'schema'")
            path = Path(data["path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            kw["csv_path"] = str(path)
            kw["schema"] = CsvSchema.from_dict(data["schema"])
        else:
            raise ConfigError(f"unknown data source {source!r}")
        part = d.get("partition", {})
        methods = tuple(MethodSpec.from_dict(m) for m in d.get("methods", []))
        if not methods:
            raise ConfigError("no methods configured")
        reps = int(d.get("repetitions", 100))
        if reps < 1:
            raise ConfigError("repetitions must be >= 1")
        cg = part.get("col_groups")
        return cls(
            methods=methods,
            c=int(part.get("c", 1)), d=int(part.get("d", 1)),
            col_groups=tuple(tuple(g) for g in cg) if cg else None,
            anchor_size=d.get("anchor_size"),
            standardize=bool(d.get("standardize", source == "csv")),
            match=MatchConfig(caliper=float(d.get("caliper", 0.2))),
            repetitions=reps, seed=int(d.get("seed", 0)),
            curve_points=int(d.get("curve_points", 101)),
            horizon=d.get("horizon"), name=d.get("name", "experiment"), raw=d, **kw)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, base_dir=path.parent)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ReportTable:
    rows: list
    repetitions: int
    failures: int
    digest: str
    curves: dict = field(default_factory=dict)
    grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    meta: dict = field(default_factory=dict)

    def row(self, method: str) -> dict:
        for r in self.rows:
            if r["method"] == method:
                return r
        raise KeyError(method)


def _fixed_dataset(config: ExperimentConfig) -> Dataset | None:
    if config.csv_path is None:
        return None
    return load_csv(config.csv_path, config.schema)


def _rep_dataset(config: ExperimentConfig, seq: np.random.SeedSequence, fixed):
    if fixed is not None:
        return fixed
    return synth.generate(config.synthetic, np.random.default_rng(seq))


def run_repetition(config: ExperimentConfig, rep: int, fixed: Dataset | None = None,
                   grid: np.ndarray | None = None) -> dict:
    """One repetition: data, partition and anchor from derived seeds, then every method."""
    seq_data, seq_part, seq_anchor = np.random.SeedSequence([config.seed, rep]).spawn(3)
    dataset = _rep_dataset(config, seq_data, fixed)
    col_groups = (config.col_groups if config.col_groups is not None
                  else PartitionScheme.even_columns(dataset.m, config.d))
    scheme = PartitionScheme.random_rows(dataset.n, config.c, col_groups,
                                         np.random.default_rng(seq_part))
    blocks = partition(dataset, scheme)
    anchor = generate_anchor(column_ranges(dataset.X), config.anchor_size or dataset.n,
                             np.random.default_rng(seq_anchor))

    ca = run_ca(dataset, config.match)
    results = {}
    for spec in config.methods:
        if spec.kind == "CA":
            res = ca
        elif spec.kind == "LA":
            block = select_scope(blocks, [spec.party])[0]
            res = run_la(block, config.match, truth=dataset,
                         outcomes=None if block.outcomes is not None
                         else dataset.outcomes.take(block.ids))
        elif spec.kind == "LMCA":
            res = run_lmca(select_scope(blocks, spec.scope), config.match, truth=dataset)
        else:
            res = run_dcqe(select_scope(blocks, spec.scope), anchor, spec.dim, spec.target_dim,
                           config.match, config.standardize, truth=dataset, name=spec.name)
        row = {
            "sample_size": res.sample_size,
            "masmd": res.balance.masmd,
            "inconsistency": inconsistency(res.scores, ca.scores),
            "gap_treated": gap(res.curves[0], ca.curves[0]),
            "gap_control": gap(res.curves[1], ca.curves[1]),
        }
        if grid is not None:
            row["curve_treated"] = eval_step(res.curves[0], grid)
            row["curve_control"] = eval_step(res.curves[1], grid)
        results[spec.name] = row
    return results


def _safe_repetition(args):
    config, rep, fixed, grid = args
    try:
        return rep, run_repetition(config, rep, fixed, grid), None
    except (ValueError, KeyError, np.linalg.LinAlgError) as exc:
        return rep, None, f"{type(exc).__name__}: {exc}"


def _default_horizon(config: ExperimentConfig, fixed) -> float:
    if config.horizon is not None:
        return float(config.horizon)
    seq_data = np.random.SeedSequence([config.seed, 0]).spawn(3)[0]
    ds = _rep_dataset(config, seq_data, fixed)
    return float(np.quantile(ds.t, 0.95))


def run_experiment(config: ExperimentConfig, workers: int | None = 1) -> ReportTable:
    """Run all repetitions and aggregate means and SDs (ddof=1; 0 when B=1)."""
    fixed = _fixed_dataset(config)
    grid = np.linspace(0.0, _default_horizon(config, fixed), config.curve_points)
    jobs = [(config, b, fixed, grid) for b in range(config.repetitions)]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and config.repetitions > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_safe_repetition, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outcomes = [_safe_repetition(j) for j in jobs]

    good = [r for _, r, err in outcomes if err is None]
    errors = [(b, err) for b, _, err in outcomes if err is not None]
    for b, err in errors:
        logger.warning("repetition %d failed: %s", b, err)
    if not good:
        raise RuntimeError(f"all {len(outcomes)} repetitions failed; first error: {errors[0][1]}")

    rows, curves = [], {}
    for spec in config.methods:
        per = [g[spec.name] for g in good]
        row = {"method": spec.name, "repetitions": len(per)}
        for key in METRICS:
            vals = np.array([p[key] for p in per], dtype=float)
            row[f"{key}_mean"] = float(vals.mean())
            row[f"{key}_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append(row)
        curves[spec.name] = (np.mean([p["curve_treated"] for p in per], axis=0),
                             np.mean([p["curve_control"] for p in per], axis=0))
    meta = {
        "name": config.name,
        "repetitions": config.repetitions,
        "failures": len(errors),
        "failure_messages": [f"rep {b}: {e}" for b, e in errors],
        "config_digest": config.digest(),
        "seed": config.seed,
        "la_parties": [list(s.party) for s in config.methods if s.kind == "LA"],
    }
    return ReportTable(rows, config.repetitions, len(errors), config.digest(), curves, grid, meta)
