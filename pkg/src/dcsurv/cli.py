"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 integrity or privacy violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from . import synth
from .anchor import column_ranges, generate_anchor
from .data import (ConfigError, CsvSchema, DataLoadError, PartitionScheme, ValidationError,
                   load_csv, partition, preprocess_frame, write_dataset_csv)
from .matching import MatchConfig
from .pipeline import ExperimentConfig, analyst_estimate, run_experiment
from .protocol import (IncompleteExchangeError, IntegrityError, anchor_columns, audit_exchange,
                       publish_anchor, read_exchange, read_party_csv, user_encode,
                       write_party_csv)
from .reduce import PrivacyError, default_dim
from .report import format_table, write_curves, write_report

log = logging.getLogger("dcsurv")

EXIT_CONFIG, EXIT_DATA, EXIT_INTEGRITY = 2, 3, 4

SYNTH_SCHEMA = CsvSchema(time="time", event="event", treatment="treat")


def bundled_config(name: str) -> Path:
    return Path(str(resources.files("dcsurv") / "configs" / name))


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _schema(path) -> CsvSchema:
    return CsvSchema.from_dict(_read_json(path)) if path else SYNTH_SCHEMA


def _out(args, default=None) -> Path:
    out = args.out or default
    if out is None:
        raise ConfigError("--out is required")
    return Path(out)


# --------------------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    raw = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = synth.SynthConfig.from_dict(raw)
    ds = synth.generate(cfg)
    out = _out(args)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(ds, out)
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps({"config": cfg.to_dict(), "seed": cfg.seed, "n": ds.n,
                                   "columns": list(ds.columns)}, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s (%d rows) and %s", out, ds.n, sidecar.name)
    return 0


def _parse_groups(text, m, d):
    if not text:
        return PartitionScheme.even_columns(m, d)
    return [np.array([int(x) for x in g.split(",")]) for g in text.split(";")]


def cmd_split(args) -> int:
    ds = load_csv(args.data, _schema(args.schema))
    groups = _parse_groups(args.col_groups, ds.m, args.d)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    scheme = PartitionScheme.random_rows(ds.n, args.c, groups, rng)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    for b in partition(ds, scheme):
        stem = f"party_{b.k}_{b.l}"
        write_party_csv(b, out / f"{stem}.csv")
        (out / f"{stem}.json").write_text(json.dumps(
            {"k": b.k, "l": b.l, "dim": default_dim(b.m_l), "standardize": False},
            indent=2, sort_keys=True) + "\n")
    log.info("wrote %d party files to %s", args.c * len(groups), out)
    return 0


def cmd_anchor(args) -> int:
    if args.ranges:
        spec = _read_json(args.ranges)
        columns, ranges = spec["columns"], [tuple(p) for p in spec["ranges"]]
        r = args.r
        if r is None:
            raise ConfigError("--r is required when ranges come from a config")
    elif args.data:
        ds = load_csv(args.data, _schema(args.schema))
        columns, ranges = list(ds.columns), column_ranges(ds.X)
        r = args.r or ds.n
    else:
        raise ConfigError("anchor needs --ranges (protocol mode) or --data (benchmark mode)")
    seed = args.seed if args.seed is not None else 0
    anchor = generate_anchor(ranges, r, np.random.default_rng(seed), seed=seed)
    publish_anchor(anchor, _out(args, args.exchange), columns)
    return 0


def cmd_user_encode(args) -> int:
    exchange = Path(args.exchange or _out(args))
    if not (exchange / "anchor.csv").exists():
        raise IncompleteExchangeError(
            f"no anchor in {exchange}; run 'dcsurv anchor' to generate it first")
    from .anchor import read_anchor
    anchor = read_anchor(exchange)
    party = _read_json(args.party_config)
    block = read_party_csv(args.data, int(party["k"]), int(party["l"]), anchor_columns(exchange))
    dim = int(party.get("dim", default_dim(block.m_l)))
    names = user_encode(block, anchor, exchange, dim, bool(party.get("standardize", False)),
                        protocol=True)
    log.info("party (%d,%d) shared %s", block.k, block.l, ", ".join(names))
    return 0


def _analysis_parties(cfg: dict, manifest_parties) -> list:
    if "parties" in cfg:
        return [tuple(int(x) for x in p) for p in cfg["parties"]]
    if "c" in cfg and "d" in cfg:
        return [(k, l) for k in range(1, int(cfg["c"]) + 1) for l in range(1, int(cfg["d"]) + 1)]
    return sorted(tuple(v[key] for key in ("k", "l")) for v in manifest_parties.values())


def cmd_analyst(args) -> int:
    from .protocol import load_manifest
    exchange = Path(args.exchange)
    cfg = _read_json(args.config) if args.config else {}
    parties = _analysis_parties(cfg, load_manifest(exchange)["parties"])
    problems = audit_exchange(exchange)
    if problems:
        raise IntegrityError("; ".join(problems))
    data_reps, anchor_reps, outcomes = read_exchange(exchange, parties)
    match = MatchConfig(caliper=float(cfg.get("caliper", 0.2)))
    res = analyst_estimate(data_reps, anchor_reps, outcomes, cfg.get("target_dim"), match)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    write_curves(res.curves, out / "curves.csv")
    pd.DataFrame({"treated_id": res.matched.treated, "control_id": res.matched.control,
                  "logit_gap": res.matched.gaps}).to_csv(out / "pairs.csv", index=False,
                                                         float_format="%.17g")
    collab = res.extras["collab"]
    metrics = {
        "parties": [list(p) for p in parties],
        "n": int(collab.n),
        "target_dim": int(collab.X.shape[1]),
        "caliper_width": res.matched.caliper_width,
        "pairs": len(res.matched),
        "matched_sample_size": res.sample_size,
        "anchor_alignment_error": res.extras["alignment_error"],
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    if cfg.get("dump_collab"):
        cols = {"id": collab.ids}
        cols.update({f"c{j + 1}": collab.X[:, j] for j in range(collab.X.shape[1])})
        pd.DataFrame(cols).to_csv(out / "collab.csv", index=False, float_format="%.17g")
    if cfg.get("dump_scores"):
        pd.DataFrame({"id": res.scores.ids, "score": res.scores.scores}).to_csv(
            out / "scores.csv", index=False, float_format="%.17g")
    if cfg.get("svg", True):
        from .plotting import plot_arms
        plot_arms(*res.curves, out / "survival.svg", "matched Kaplan-Meier curves")
    return 0


def cmd_experiment(args) -> int:
    path = Path(args.config)
    if not path.exists() and bundled_config(args.config).exists():
        path = bundled_config(args.config)
    raw = _read_json(path)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.repetitions is not None:
        raw["repetitions"] = args.repetitions
    if args.data is not None:
        raw.setdefault("data", {})["path"] = str(Path(args.data).resolve())
    cfg = ExperimentConfig.from_dict(raw, base_dir=path.parent)
    table = run_experiment(cfg, workers=args.workers)
    write_report(table, _out(args), figures=not args.no_figures)
    sys.stdout.write(format_table(table))
    if table.failures:
        log.error("%d repetition(s) failed", table.failures)
        return EXIT_DATA
    return 0


def cmd_preprocess(args) -> int:
    df = pd.read_csv(args.data, sep=args.delimiter, float_precision="round_trip")
    if args.query:
        df = df.query(args.query)
    if args.drop:
        df = df.drop(columns=args.drop.split(","))
    keep = args.keep.split(",") if args.keep else []
    one_hot = args.one_hot.split(",") if args.one_hot else []
    df = preprocess_frame(df, impute=not args.no_impute, one_hot=one_hot, keep=keep)
    out = _out(args)
    df.to_csv(out, index=False, float_format="%.17g")
    log.info("wrote %s (%d rows, %d columns)", out, len(df), df.shape[1])
    return 0


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: available cores)")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dcsurv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate the synthetic benchmark")
    s.add_argument("--config", help="JSON with n, lambda, v, gamma, seed")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", parents=[common], help="cut a dataset into raw party files")
    s.add_argument("--data", required=True)
    s.add_argument("--schema", help="CSV schema JSON (default: synth layout)")
    s.add_argument("--c", type=int, default=2, help="institutions")
    s.add_argument("--d", type=int, default=2, help="column groups")
    s.add_argument("--col-groups", help="e.g. '0,1,2;3,4,5'")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("anchor", parents=[common], help="generate and publish the anchor")
    s.add_argument("--exchange", help="exchange directory (alias of --out)")
    s.add_argument("--data", help="benchmark mode: take column ranges from this CSV")
    s.add_argument("--schema")
    s.add_argument("--ranges", help="protocol mode: JSON with 'columns' and 'ranges'")
    s.add_argument("--r", type=int, default=None, help="anchor rows (default: n)")
    s.set_defaults(func=cmd_anchor)

    s = sub.add_parser("user-encode", parents=[common], help="user side: share reduced data")
    s.add_argument("--party-config", required=True)
    s.add_argument("--data", required=True, help="the party's raw CSV")
    s.add_argument("--exchange", help="exchange directory (alias of --out)")
    s.set_defaults(func=cmd_user_encode)

    s = sub.add_parser("analyst", parents=[common], help="analyst side: estimate curves")
    s.add_argument("--exchange", required=True)
    s.add_argument("--config", help="analysis JSON (parties, target_dim, caliper, svg)")
    s.set_defaults(func=cmd_analyst)

    s = sub.add_parser("experiment", parents=[common], help="run a repeated benchmark")
    s.add_argument("--config", required=True,
                   help="experiment JSON, or the name of a bundled config")
    s.add_argument("--data", help="override the CSV path of a csv data source")
    s.add_argument("--repetitions", type=int, default=None)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("preprocess", parents=[common],
                       help="mean-impute and one-hot encode a CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--delimiter", default=",")
    s.add_argument("--query", help="pandas row filter, e.g. 'etype == 2'")
    s.add_argument("--drop", help="comma-separated columns to drop")
    s.add_argument("--one-hot", help="comma-separated categorical columns")
    s.add_argument("--keep", help="columns never imputed (e.g. time,status)")
    s.add_argument("--no-impute", action="store_true")
    s.set_defaults(func=cmd_preprocess)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (IntegrityError, PrivacyError) as exc:
        log.error("integrity/privacy violation: %s", exc)
        return EXIT_INTEGRITY
    except (DataLoadError, ValidationError, IncompleteExchangeError, KeyError,
            FileNotFoundError, ValueError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
