"""Report emission: stable-ordered CSV/JSON tables with a schema version stamp."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
SORT_FIELDS = ("model", "condition", "k", "seed", "t")


def _row(obj) -> dict:
    return asdict(obj) if is_dataclass(obj) else dict(obj)


def _sort_key(row: dict):
    return tuple((0, row[f]) if row.get(f) is not None else (1, 0) for f in SORT_FIELDS if f in row)


def normalize_rows(rows) -> list[dict]:
    return sorted((_row(r) for r in rows), key=_sort_key)


def _encode(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return json.dumps(list(v))
    return str(v)


def _decode(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    if s.startswith("["):
        return json.loads(s)
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def write_table(rows, path: str | Path, fmt: str = "csv", columns=None, kind: str = "") -> Path:
    rows = normalize_rows(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    path = Path(path).with_suffix("." + fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_encode(r.get(c)) for c in columns])
    elif fmt == "json":
        payload = {"schema_version": SCHEMA_VERSION, "kind": kind, "columns": columns,
                   "rows": [{c: _jsonable(r.get(c)) for c in columns} for r in rows]}
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    return list(v) if isinstance(v, tuple) else v


def read_table(path: str | Path) -> list[dict]:
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return [{k: _decode(v) for k, v in row.items()} for row in reader]


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"schema_version": SCHEMA_VERSION, **obj}, indent=2, sort_keys=True) + "\n")
    return path


def emit_report(kind: str, results: dict, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """Write every table of one block's results under ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    written = []
    if kind == "bench":
        written.append(write_table(results["records"], out / "metrics", fmt, kind="metrics"))
        written.append(write_table(results["aggregate"], out / "aggregate", fmt, kind="aggregate"))
        front = results["pareto"]
        written.append(write_json({
            "non_dominated": list(front.non_dominated) if front else [],
            "dominance_count": dict(sorted(front.dominance_count.items())) if front else {},
        }, out / "pareto.json"))
    elif kind == "ksweep":
        written.append(write_table(results["records"], out / "ksweep", fmt, kind="ksweep"))
        cols = ["model", "metric", "H", "p_value", "eta_squared", "n", "notice"]
        written.append(write_table(results["tests"], out / "kruskal_wallis", fmt, columns=cols, kind="kruskal_wallis"))
    elif kind == "xai":
        kappa_rows = []
        for item in results["profiles"]:
            p = item["profile"]
            kappa_rows.append({"model": item["model"], "seed": item["seed"], "kappa": p.kappa,
                               "top5_data": list(p.top5_data), "top5_model": list(p.top5_model)})
            tag = item["model"].replace("/", "_")
            path = out / f"attribution_{tag}_{item['seed']}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(p.to_json() + "\n")
            written.append(path)
        cols = ["model", "seed", "kappa", "top5_data", "top5_model"]
        written.append(write_table(kappa_rows, out / "kappa", fmt, columns=cols, kind="kappa"))
        written.append(write_table(results["sweep"], out / "blend_sweep", fmt,
                                   columns=["model", "seed", "t", "eps_bdd", "leakage", "kappa"], kind="blend_sweep"))
    elif kind == "lemma":
        cols = ["model", "seed", "eps_bdd_broken_normalized", "eps_bdd_harmonised", "mean_leakage",
                "expected_residual", "tau", "inflation_ratio"]
        written.append(write_table(results["rows"], out / "lemma", fmt, columns=cols, kind="lemma"))
    elif kind == "ablate":
        cols = ["condition", "model", "seed", "mmd_full", "mmd_ablated", "delta_mmd"]
        cond = results["rows"][0]["condition"] if results["rows"] else "ablation"
        written.append(write_table(results["rows"], out / f"ablation_{cond}", fmt, columns=cols, kind="ablation"))
        written.append(write_json({"front": list(results["front"]), "full_front": list(results["full_front"])},
                                  out / f"ablation_{cond}_front.json"))
    else:
        raise ValueError(f"unknown report kind {kind!r}")
    if results.get("failures"):
        fails = [{"model": m, "seed": s, "error": e} for m, s, e in results["failures"]]
        written.append(write_table(fails, out / f"{kind}_failures", "csv", columns=["model", "seed", "error"]))
    return written
