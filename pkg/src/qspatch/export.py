"""CSV / JSON writers.  Floats are written with ``repr`` (shortest round-trip),
CSV with '\\n' line endings, so outputs are byte-reproducible."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DRIVER_COLUMNS = ("path_index", "k", "t_k", "B_k", "mu_k", "qv_k")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(_jsonable(v) for v in obj)
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=True) + "\n"


def write_text(path: Path, text: str) -> str:
    """Write ``text`` and return its sha256."""
    data = text.encode("utf-8")
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def driver_rows(paths):
    for p in paths:
        idx = p.provenance[2]
        mu = p.vol_record
        for k in range(p.grid.N + 1):
            yield (
                idx,
                k,
                p.grid.points[k],
                p.values[k],
                mu[k] if k < len(mu) else None,
                p.qv_pathwise[k],
            )


def drivers_csv(paths) -> str:
    return csv_text(DRIVER_COLUMNS, driver_rows(paths))


def integral_csv(result) -> str:
    """Convergence table of an ``IntegralResult``: (n, eps, cauchy_gap)."""
    return csv_text(("n", "epsilon", "cauchy_gap"), ((n, e, g) for n, e, g, _, _ in result.rows()))


def table_rows(table):
    for pid in table.order:
        sol = table.value(pid)
        prov = ";".join(sorted(table.provenance(pid)))
        for k in range(sol.grid.N + 1):
            yield pid, k, sol.grid.points[k], sol.values[k], prov


def table_csv(table) -> str:
    return csv_text(("path_id", "k", "t_k", "X_k", "provenance"), table_rows(table))


def breakdown_csv(g) -> str:
    return csv_text(("measure_id", "mean", "stderr", "n"), ((r["measure_id"], r["mean"], r["stderr"], r["n"]) for r in g.breakdown()))
