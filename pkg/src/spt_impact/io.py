"""CSV/JSON emission and run manifests."""
from __future__ import annotations

import csv
import math
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__


def _num(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def dumps_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits, non-finite as null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}"{k}": {dumps_json(obj[k], indent, _level + 1)}'
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [pad + dumps_json(v, indent, _level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    s = str(obj).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{s}"'


def write_json(file: str | Path, obj: Any) -> None:
    Path(file).write_text(dumps_json(obj) + "\n", encoding="utf-8")


def write_columns(file: str | Path, cols: dict[str, np.ndarray]) -> None:
    names = list(cols)
    n = len(next(iter(cols.values()))) if cols else 0
    with open(file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in range(n):
            w.writerow([_num(cols[c][r]) for c in names])


def record_rows(n: int, stride: int) -> np.ndarray:
    """Row indices kept at a given stride: ``0, s, 2s, ...`` plus the final row."""
    idx = np.arange(0, n, stride)
    if n and idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def write_path_csv(file: str | Path, rec, ws, stride: int = 1) -> int:
    """One path's trajectory; returns the number of data rows written."""
    d = rec.P.shape[1]
    rows = record_rows(len(rec.grid), stride)
    V, Vm = ws.V, ws.V_master
    with open(file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t"]
        for name in ("P", "Q", "J", "mu"):
            head += [f"{name}_{i + 1}" for i in range(d)]
        w.writerow(head + ["V", "V_master", "G_term", "Gamma", "status"])
        last = len(rec.grid) - 1
        for k in rows:
            status = rec.status if k == last else "running"
            vals = [rec.grid[k], *rec.P[k], *rec.Q[k], *rec.J[k], *rec.mu[k],
                    V[k], Vm[k], ws.G_term[k], ws.Gamma[k]]
            w.writerow([_num(v) for v in vals] + [status])
    return len(rows)


def manifest(cfg, seed: int, statuses: list[str], started: datetime,
             command: str) -> dict:
    return {
        "artifact_version": __version__,
        "command": command,
        "config_digest": cfg.digest(),
        "base_seed": seed,
        "started_utc": started.isoformat(),
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "path_statuses": statuses,
    }


def emit_outputs(ens, report: dict, out_dir: str | Path, cfg, started: datetime,
                 command: str, panels: dict | None = None) -> list[Path]:
    """Write per-path CSVs (up to the cap), panel CSVs, summary.json and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for r in ens.results[: cfg.max_path_csv]:
        f = out / f"path_{r.index:04d}.csv"
        write_path_csv(f, r.record, r.wealth, cfg.sim.record_stride)
        written.append(f)
    for name, cols in (panels or {}).items():
        f = out / f"panel_{name}.csv"
        write_columns(f, cols)
        written.append(f)
    summary = dict(report)
    summary["config_digest"] = cfg.digest()
    summary["artifact_version"] = __version__
    write_json(out / "summary.json", summary)
    write_json(out / "manifest.json", manifest(cfg, ens.base_seed, ens.statuses, started,
                                               command))
    written += [out / "summary.json", out / "manifest.json"]
    return written
