"""File-exchange realization of the two-role protocol.

Users write only reduced matrices (plus ids) and, for outcome holders,
``(id, time, event, treat)`` rows into a shared exchange directory. The
analyst reads that directory after checking the manifest.

Layout of an exchange directory::

    manifest.json
    anchor.csv, anchor.meta.json
    party_<k>_<l>.data.csv      id + m~_kl reduced columns
    party_<k>_<l>.anchor.csv    m~_kl reduced anchor columns
    party_<k>.outcomes.csv      id, time, event, treat
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .anchor import AnchorDataset, read_anchor, slice_anchor, write_anchor
from .data import Outcomes, PartyBlock, ValidationError
from .reduce import IntermediateRep, encode_party

MANIFEST = "manifest.json"
FLOAT_FMT = "%.17g"


class IntegrityError(RuntimeError):
    """Manifest digests or privacy constraints do not hold."""


class IncompleteExchangeError(ValueError):
    pass


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_manifest(exchange) -> dict:
    path = Path(exchange) / MANIFEST
    if not path.exists():
        return {"files": {}, "parties": {}, "outcomes": {}}
    return json.loads(path.read_text())


def _save_manifest(exchange, manifest: dict) -> None:
    (Path(exchange) / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _register(exchange, manifest: dict, names) -> None:
    for name in names:
        manifest["files"][name] = sha256(Path(exchange) / name)


def publish_anchor(anchor: AnchorDataset, exchange, columns=None) -> None:
    exchange = Path(exchange)
    exchange.mkdir(parents=True, exist_ok=True)
    names = write_anchor(anchor, exchange)
    if columns is not None:
        meta_path = exchange / "anchor.meta.json"
        meta = json.loads(meta_path.read_text())
        meta["columns"] = list(columns)
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    manifest = load_manifest(exchange)
    _register(exchange, manifest, names)
    _save_manifest(exchange, manifest)


def anchor_columns(exchange) -> list | None:
    meta = json.loads((Path(exchange) / "anchor.meta.json").read_text())
    return meta.get("columns")


def _write_matrix(path, matrix, ids=None) -> None:
    cols = {}
    if ids is not None:
        cols["id"] = np.asarray(ids, dtype=np.int64)
    for j in range(matrix.shape[1]):
        cols[f"z{j + 1}"] = matrix[:, j]
    pd.DataFrame(cols).to_csv(path, index=False, float_format=FLOAT_FMT)


def user_encode(block: PartyBlock, anchor: AnchorDataset, exchange, dim: int,
                standardize: bool = False, protocol: bool = True) -> list:
    """User side: reduce local data and the matching anchor slice, then share.

    The anchor columns used are ``block.col_index``. Returns written file names.
    """
    exchange = Path(exchange)
    data, anc = encode_party(block, slice_anchor(anchor, block.col_index), dim, standardize,
                             protocol)
    k, l = block.party
    names = [f"party_{k}_{l}.data.csv", f"party_{k}_{l}.anchor.csv"]
    _write_matrix(exchange / names[0], data.matrix, data.ids)
    _write_matrix(exchange / names[1], anc.matrix)
    manifest = load_manifest(exchange)
    if block.outcomes is not None:
        oname = f"party_{k}.outcomes.csv"
        out = block.outcomes
        pd.DataFrame({"id": out.ids, "time": out.t, "event": out.delta, "treat": out.Z}).to_csv(
            exchange / oname, index=False, float_format=FLOAT_FMT)
        names.append(oname)
        manifest["outcomes"][str(k)] = oname
    manifest["parties"][f"{k},{l}"] = {
        "k": k, "l": l, "m_l": block.m_l, "dim": int(dim), "protocol": bool(protocol),
        "data": names[0], "anchor": names[1],
    }
    _register(exchange, manifest, names)
    _save_manifest(exchange, manifest)
    return names


def verify(exchange, parties=None) -> dict:
    """Check completeness for ``parties`` and every manifest digest."""
    exchange = Path(exchange)
    manifest = load_manifest(exchange)
    if "anchor.csv" not in manifest["files"]:
        raise IncompleteExchangeError("exchange has no anchor")
    if parties is not None:
        missing = [p for p in parties if f"{p[0]},{p[1]}" not in manifest["parties"]]
        if missing:
            raise IncompleteExchangeError(
                "missing party files for " + ", ".join(f"({k},{l})" for k, l in missing))
        ks = sorted({p[0] for p in parties})
        no_out = [k for k in ks if str(k) not in manifest["outcomes"]]
        if no_out:
            raise IncompleteExchangeError(f"no outcomes shared for institution(s) {no_out}")
    for name, digest in sorted(manifest["files"].items()):
        path = exchange / name
        if not path.exists():
            raise IntegrityError(f"{name} listed in manifest but missing")
        if sha256(path) != digest:
            raise IntegrityError(f"{name}: digest mismatch")
    return manifest


def audit_exchange(exchange) -> list:
    """Privacy and integrity audit; returns a list of problems (empty when clean)."""
    exchange = Path(exchange)
    problems = []
    manifest = load_manifest(exchange)
    listed = set(manifest["files"]) | {MANIFEST}
    for path in sorted(exchange.iterdir()):
        if path.name not in listed:
            problems.append(f"unlisted file {path.name}")
        if path.suffix in (".pkl", ".pickle", ".npy", ".npz", ".joblib") or "reducer" in path.name:
            problems.append(f"{path.name} looks like a serialized model")
    for name, digest in manifest["files"].items():
        if not (exchange / name).exists() or sha256(exchange / name) != digest:
            problems.append(f"{name}: digest mismatch or missing")
    for key, info in manifest["parties"].items():
        for kind in ("data", "anchor"):
            df = pd.read_csv(exchange / info[kind], nrows=1, float_precision="round_trip")
            ncols = df.shape[1] - (1 if "id" in df.columns else 0)
            if ncols != info["dim"]:
                problems.append(f"party ({key}) {kind}: {ncols} columns, declared {info['dim']}")
            if ncols >= info["m_l"]:
                problems.append(f"party ({key}) {kind}: {ncols} columns not below m_l={info['m_l']}")
    return problems


def read_exchange(exchange, parties):
    """Load data reps, anchor reps and outcomes for ``parties`` after verification."""
    exchange = Path(exchange)
    manifest = verify(exchange, parties)
    data_reps, anchor_reps, outcomes = [], [], {}
    for k, l in parties:
        info = manifest["parties"][f"{k},{l}"]
        df = pd.read_csv(exchange / info["data"], float_precision="round_trip")
        data_reps.append(IntermediateRep((k, l), df.drop(columns="id").to_numpy(float),
                                         "data", df["id"].to_numpy(np.int64)))
        anchor = pd.read_csv(exchange / info["anchor"], float_precision="round_trip")
        anchor_reps.append(IntermediateRep((k, l), anchor.to_numpy(float), "anchor"))
    for k in sorted({p[0] for p in parties}):
        df = pd.read_csv(exchange / manifest["outcomes"][str(k)], float_precision="round_trip")
        outcomes[k] = Outcomes(df["id"].to_numpy(), df["time"].to_numpy(float),
                               df["event"].to_numpy(), df["treat"].to_numpy())
    return data_reps, anchor_reps, outcomes


def read_party_csv(path, k: int, l: int, anchor_cols=None) -> PartyBlock:
    """Read a raw party file (``id``, covariates, optional ``time/event/treat``).

    ``anchor_cols`` are the anchor's column names; the block's covariates are
    located in it by name so the right anchor slice is used.
    """
    df = pd.read_csv(path, float_precision="round_trip")
    if "id" not in df.columns:
        raise ValidationError(f"{path}: party file needs an 'id' column")
    outcome_cols = ["time", "event", "treat"]
    has_out = all(c in df.columns for c in outcome_cols)
    cov = [c for c in df.columns if c != "id" and c not in outcome_cols]
    ids = df["id"].to_numpy(np.int64)
    if anchor_cols is not None:
        unknown = [c for c in cov if c not in anchor_cols]
        if unknown:
            raise ValidationError(f"{path}: covariates {unknown} not present in the anchor")
        col_index = [list(anchor_cols).index(c) for c in cov]
    else:
        col_index = list(range(len(cov)))
    outcomes = None
    if has_out:
        outcomes = Outcomes(ids, df["time"].to_numpy(float), df["event"].to_numpy(),
                            df["treat"].to_numpy())
    return PartyBlock(k, l, ids, df[cov].to_numpy(float), tuple(cov), outcomes,
                      np.asarray(col_index))


def write_party_csv(block: PartyBlock, path) -> None:
    cols = {"id": block.ids}
    for j, name in enumerate(block.columns):
        cols[name] = block.X[:, j]
    if block.outcomes is not None:
        cols["time"] = block.outcomes.t
        cols["event"] = block.outcomes.delta
        cols["treat"] = block.outcomes.Z
    pd.DataFrame(cols).to_csv(path, index=False, float_format=FLOAT_FMT)
