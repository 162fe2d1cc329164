"""Tabular report emission (CSV / JSON) with fixed column schemas."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from .evaluation import OVERALL, BurstResult, Evaluation

SCHEMAS: Dict[str, Dict[str, type]] = {
    "snr_accuracy": {"model": str, "snr_db": int, "accuracy": float, "n": int},
    "confusion": {"model": str, "true": str, "pred": str, "proportion": float, "count": int},
    "topk": {"model": str, "k": int, "group": str, "snr_db": int, "accuracy": float},
    "ablation_summary": {"model": str, "params": int, "avg_acc": float, "max_acc": float},
    "burst_sweep": {"model": str, "length": int, "group": str, "snr_db": int, "accuracy": float, "n": int},
}


def snr_rows(ev: Evaluation) -> List[dict]:
    table = ev.snr_table()
    return [{"model": ev.model, "snr_db": s, "accuracy": a, "n": n} for s, (a, n) in sorted(table.by_snr.items())]


def confusion_rows(ev: Evaluation) -> List[dict]:
    cm = ev.confusion()
    names = list(ev.class_names) + [f"class{i}" for i in range(len(ev.class_names), cm.n_classes)]
    rows = []
    for t in range(cm.n_classes):
        if not cm.supported[t]:
            continue
        for p in range(cm.n_classes):
            rows.append({"model": ev.model, "true": names[t], "pred": names[p],
                         "proportion": float(cm.proportions[t, p]), "count": int(cm.counts[t, p])})
    return rows


def topk_rows(ev: Evaluation, ks: Sequence[int] = (1, 2, 5)) -> List[dict]:
    rows = []
    for rep in ev.topk(ks):
        for s, acc in sorted(rep.by_snr.items()):
            rows.append({"model": ev.model, "k": rep.k, "group": OVERALL, "snr_db": s, "accuracy": acc})
        for g, per_snr in rep.by_group_snr.items():
            for s, acc in sorted(per_snr.items()):
                rows.append({"model": ev.model, "k": rep.k, "group": g, "snr_db": s, "accuracy": acc})
    return rows


def summary_row(ev: Evaluation, params: int) -> dict:
    table = ev.snr_table()
    return {"model": ev.model, "params": params, "avg_acc": table.average, "max_acc": table.maximum}


def burst_rows(model: str, results: Iterable[BurstResult]) -> List[dict]:
    rows = []
    for res in results:
        tables = [(OVERALL, res.table)] + sorted(res.by_group.items())
        for group, table in tables:
            for s, (acc, n) in sorted(table.by_snr.items()):
                rows.append({"model": model, "length": res.length, "group": group, "snr_db": s, "accuracy": acc, "n": n})
    return rows


def emit_report(rows: Sequence[dict], path, schema: str, fmt: str = "") -> Path:
    """Write ``rows`` under ``schema``'s column order; ``fmt`` defaults to the file suffix."""
    path = Path(path)
    columns = list(SCHEMAS[schema])
    fmt = (fmt or path.suffix.lstrip(".") or "csv").lower()
    for row in rows:
        if set(row) != set(columns):
            raise ValueError(f"row keys {sorted(row)} do not match schema {schema} {columns}")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    elif fmt == "json":
        payload = {"schema": schema, "columns": columns, "rows": [{c: row[c] for c in columns} for row in rows]}
        path.write_text(json.dumps(payload, indent=1))
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def read_report(path, schema: str) -> List[dict]:
    path = Path(path)
    types = SCHEMAS[schema]
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(types):
            raise ValueError(f"{path}: header {reader.fieldnames} does not match schema {schema}")
        return [{c: types[c](row[c]) for c in types} for row in reader]
