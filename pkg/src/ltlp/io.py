"""CSV and JSON formats shared by the command-line tools.

Signals: one row per support point under the header ``x1..xd,f1..fm`` with an
optional trailing ``w`` column of point weights (uniform when absent).
Datasets: a directory of signal files plus ``manifest.csv`` with ``path,label``.
Embeddings: a ``# {json}`` metadata line, then ``id,s0..,c0..`` rows holding
the spatial block followed by the channel block.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ltlp.errors import InvalidInput, ShapeMismatch
from ltlp.finance import PriceSeries
from ltlp.measures import DiscreteMeasure, EmbeddingVector, TLpSignal

FLOAT_FMT = "%.17g"
DATASET_MANIFEST = "manifest.csv"


def fmt(x: float) -> str:
    return FLOAT_FMT % x


def _write_rows(path, header: Sequence[str], rows, comment: Optional[str] = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _read_table(path) -> Tuple[List[str], List[List[str]], Optional[str]]:
    comment = None
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        comment = lines[0][1:].strip()
        lines = lines[1:]
    rows = list(csv.reader(lines))
    if not rows:
        raise InvalidInput(f"{path}: empty file")
    return rows[0], rows[1:], comment


def write_signal(path, signal: TLpSignal, weights: Optional[bool] = None):
    """Write ``signal``; the ``w`` column is added when the weights are not uniform."""
    d, m = signal.measure.dim, signal.channels
    with_w = (not signal.measure.is_uniform) if weights is None else weights
    header = [f"x{i + 1}" for i in range(d)] + [f"f{i + 1}" for i in range(m)]
    cols = [signal.points, signal.values]
    if with_w:
        header.append("w")
        cols.append(signal.weights[:, None])
    data = np.hstack(cols)
    _write_rows(path, header, (list(map(float, r)) for r in data))


def read_signal(path) -> TLpSignal:
    header, rows, _ = _read_table(path)
    xs = [i for i, h in enumerate(header) if h.startswith("x")]
    fs = [i for i, h in enumerate(header) if h.startswith("f")]
    ws = [i for i, h in enumerate(header) if h == "w"]
    if not xs or len(xs) + len(fs) + len(ws) != len(header):
        raise InvalidInput(f"{path}: header must read x1..xd,f1..fm[,w]")
    if [header[i] for i in xs] != [f"x{k + 1}" for k in range(len(xs))] or [
        header[i] for i in fs
    ] != [f"f{k + 1}" for k in range(len(fs))]:
        raise InvalidInput(f"{path}: columns must be numbered x1..xd and f1..fm in order")
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise InvalidInput(f"{path}: non-numeric entry ({exc})") from None
    if data.shape[0] == 0:
        raise InvalidInput(f"{path}: no support points")
    pts = data[:, xs]
    if ws:
        w = data[:, ws[0]]
        measure = DiscreteMeasure(pts, w / w.sum())
    else:
        measure = DiscreteMeasure(pts, np.full(len(rows), 1.0 / len(rows)))
    return TLpSignal(measure, data[:, fs])


def write_dataset(directory, signals: Sequence[TLpSignal], labels: Sequence, prefix: str = "signal"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for k, s in enumerate(signals):
        name = f"{prefix}_{k:04d}.csv"
        write_signal(directory / name, s)
        names.append(name)
    _write_rows(directory / DATASET_MANIFEST, ["path", "label"],
                ([n, str(l)] for n, l in zip(names, labels)))
    return names


def read_dataset(directory) -> Tuple[List[str], List[TLpSignal], List[str]]:
    """``(ids, signals, labels)``; ids are file stems in manifest order."""
    directory = Path(directory)
    header, rows, _ = _read_table(directory / DATASET_MANIFEST)
    if header[:2] != ["path", "label"]:
        raise InvalidInput(f"{directory / DATASET_MANIFEST}: header must be path,label")
    ids, signals, labels = [], [], []
    for r in rows:
        p = directory / r[0]
        ids.append(Path(r[0]).stem)
        signals.append(read_signal(p))
        labels.append(r[1])
    return ids, signals, labels


def read_labels(path) -> Dict[str, str]:
    """Map of id to label from a CSV with ``id,label`` or ``path,label`` columns."""
    header, rows, _ = _read_table(path)
    if "label" not in header or not ({"id", "path"} & set(header)):
        raise InvalidInput(f"{path}: need a label column and an id or path column")
    key = header.index("id") if "id" in header else header.index("path")
    lab = header.index("label")
    return {Path(r[key]).stem: r[lab] for r in rows}


def write_embeddings(path, ids: Sequence[str], embeddings: Sequence[EmbeddingVector], meta: dict):
    if len(ids) != len(embeddings):
        raise ShapeMismatch("one id per embedding")
    e0 = embeddings[0]
    n, d = e0.spatial.shape
    m = e0.channel.shape[1]
    meta = dict(meta, n=n, d=d, m=m, p=e0.exponent, channel_scale=e0.channel_scale,
                converged=[bool(e.converged) for e in embeddings])
    header = ["id"] + [f"s{k}" for k in range(n * d)] + [f"c{k}" for k in range(n * m)]
    _write_rows(path, header, ([i] + [float(v) for v in e.flat()] for i, e in zip(ids, embeddings)),
                comment=json.dumps(meta, sort_keys=True))


def read_embeddings(path) -> Tuple[List[str], np.ndarray, dict]:
    header, rows, comment = _read_table(path)
    if comment is None:
        raise InvalidInput(f"{path}: missing metadata line")
    meta = json.loads(comment)
    if not header or header[0] != "id":
        raise InvalidInput(f"{path}: first column must be id")
    ids = [r[0] for r in rows]
    X = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
    expected = meta["n"] * (meta["d"] + meta["m"])
    if X.shape[1] != expected:
        raise ShapeMismatch(f"{path}: rows have {X.shape[1]} entries, metadata implies {expected}")
    return ids, X, meta


def embedding_vectors(X: np.ndarray, meta: dict, weights) -> List[EmbeddingVector]:
    n, d, m = meta["n"], meta["d"], meta["m"]
    return [
        EmbeddingVector(row[: n * d].reshape(n, d), row[n * d:].reshape(n, m), weights,
                        meta["p"], meta.get("channel_scale", 1.0))
        for row in X
    ]


def write_matrix(path, ids: Sequence[str], D: np.ndarray):
    _write_rows(path, ["id"] + list(ids), ([i] + [float(v) for v in row] for i, row in zip(ids, D)))


def write_scores(path, scores, name: str = "score"):
    _write_rows(path, ["repeat", name], ([k, float(s)] for k, s in enumerate(scores)))


def write_assignments(path, ids, labels):
    _write_rows(path, ["id", "cluster"], ([i, int(c)] for i, c in zip(ids, labels)))


def read_grid(path) -> np.ndarray:
    """Scalar grid, one CSV row per first-axis index; no header."""
    try:
        g = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    return g


def write_grid(path, grid: np.ndarray):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(grid, dtype=float), delimiter=",", fmt=FLOAT_FMT)


def read_prices(path) -> PriceSeries:
    header, rows, _ = _read_table(path)
    if len(header) < 2 or header[0] != "date":
        raise InvalidInput(f"{path}: header must read date,ticker1,...")
    try:
        prices = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    return PriceSeries(tuple(r[0] for r in rows), tuple(header[1:]), prices)


def write_prices(path, series: PriceSeries):
    _write_rows(path, ["date"] + list(series.tickers),
                ([d] + [float(v) for v in row] for d, row in zip(series.dates, series.prices)))


def write_rows(path, header, rows):
    _write_rows(path, header, rows)


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, os.PathLike):
        return os.fspath(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
