"""CSV dataset files.

One row per individual with columns ``cluster_id, time_index, x_0.., w_0.., r, y``.
``x_*`` is repeated on every row of a cluster; ``y`` is empty when ``r = 0``.
Floats are written with ``repr`` (shortest round-trip form), so
``emit(ingest(text)) == text`` for files already in that form with rows in
cluster order and time order.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .data import ClusteredDataset, ValidationError, validate

CSV_SCHEMA_VERSION = 1


def _columns(header: list[str], prefix: str) -> list[int]:
    cols = [i for i, h in enumerate(header) if h.startswith(prefix)]
    names = [header[i] for i in cols]
    expected = [f"{prefix}{j}" for j in range(len(cols))]
    if names != expected:
        raise ValidationError(f"columns {names} must be {expected} in order")
    return cols


def _float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"{where}: cannot parse {text!r} as a number") from None


def ingest_text(text: str) -> ClusteredDataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValidationError("empty dataset file")
    header = [h.strip() for h in rows[0]]
    for required in ("cluster_id", "time_index", "r", "y"):
        if required not in header:
            raise ValidationError(f"missing column {required!r}")
    ci, ti, ri, yi = (header.index(c) for c in ("cluster_id", "time_index", "r", "y"))
    xc, wc = _columns(header, "x_"), _columns(header, "w_")
    if not wc:
        raise ValidationError("at least one w_ column is required")

    order: list[str] = []
    members: dict[str, list] = {}
    xs: dict[str, list[float]] = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValidationError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        where = f"line {line}"
        cid = row[ci]
        try:
            t = int(row[ti])
        except ValueError:
            raise ValidationError(f"{where}: time_index {row[ti]!r} is not an integer") from None
        if row[ri] not in ("0", "1"):
            raise ValidationError(f"{where}: r must be 0 or 1, got {row[ri]!r}")
        r = int(row[ri])
        y = math.nan if row[yi] == "" else _float(row[yi], where)
        if r == 1 and row[yi] == "":
            raise ValidationError(f"{where} (cluster_id {cid}): outcome absent but marked observed")
        if r == 0 and row[yi] != "":
            raise ValidationError(f"{where} (cluster_id {cid}): outcome present but marked missing")
        x = [_float(row[i], where) for i in xc]
        w = [_float(row[i], where) for i in wc]
        if cid not in members:
            order.append(cid)
            members[cid] = []
            xs[cid] = x
        elif x != xs[cid]:
            raise ValidationError(f"cluster_id {cid}: x columns vary within the cluster")
        members[cid].append((t, w, r, y))

    if not order:
        raise ValidationError("dataset file has no rows")
    w_rows, r_all, y_all, sizes = [], [], [], []
    for cid in order:
        mem = sorted(members[cid], key=lambda m: m[0])
        times = [m[0] for m in mem]
        if times != list(range(len(mem))):
            raise ValidationError(f"cluster_id {cid}: time_index must be unique and contiguous from 0")
        sizes.append(len(mem))
        for _, w, r, y in mem:
            w_rows.append(w)
            r_all.append(r)
            y_all.append(y)
    x = np.array([xs[c] for c in order], dtype=np.float64).reshape(len(order), len(xc))
    ds = ClusteredDataset.from_sizes(x, np.array(w_rows, dtype=np.float64), np.array(r_all, dtype=np.int8),
                                     np.array(y_all, dtype=np.float64), sizes, order, check=False)
    validate(ds)
    return ds


def ingest(path: str | Path) -> ClusteredDataset:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    return ingest_text(text)


def emit_text(dataset: ClusteredDataset) -> str:
    p, q = dataset.x.shape[1], dataset.w.shape[1]
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["cluster_id", "time_index", *(f"x_{j}" for j in range(p)),
                  *(f"w_{j}" for j in range(q)), "r", "y"])
    t = dataset.time_index
    for g in range(dataset.G):
        xg = [repr(float(v)) for v in dataset.x[g]]
        for i in range(dataset.offsets[g], dataset.offsets[g + 1]):
            r = int(dataset.r[i])
            out.writerow([dataset.cluster_ids[g], int(t[i]), *xg, *(repr(float(v)) for v in dataset.w[i]),
                          r, repr(float(dataset.y[i])) if r == 1 else ""])
    return buf.getvalue()


def emit(dataset: ClusteredDataset, path: str | Path) -> None:
    Path(path).write_text(emit_text(dataset))
