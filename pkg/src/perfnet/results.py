"""Ranked result tables, residual diagnostics and epoch traces as CSV."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .harness import ResultRecord
from .metrics import Metrics, qq_pairs

CONFIG_COLUMNS = (
    "architecture",
    "loss",
    "kernel",
    "stride",
    "filter_exponents",
    "fc_exponents",
    "optimizer",
    "epochs",
)
HEADER = (
    ("rank",)
    + CONFIG_COLUMNS
    + ("r2_mean", "mae_mean", "mse_mean", "r2_per_seed", "mae_per_seed", "mse_per_seed", "seconds")
)
TRACE_HEADER = ("epoch", "train_r2", "train_mae", "train_mse", "val_r2", "val_mae", "val_mse")
BASELINE_RANK = "~"
BASELINE_KINDS = ("lr", "rf", "svr")


def format_float(value) -> str:
    """Shortest round-trip decimal, ``nan`` for undefined values."""
    value = float(value)
    return "nan" if math.isnan(value) else repr(value)


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"not a number: {text!r}") from None


def is_baseline(record: ResultRecord) -> bool:
    return record.architecture in BASELINE_KINDS


def config_key(record: ResultRecord) -> str:
    """Tie-break identity built from the table's configuration columns."""
    return config_key_of(record.columns)


def _nan_last(value, descending=False):
    if math.isnan(value):
        return (1, 0.0)
    return (0, -value if descending else value)


def rank_results(records):
    """Return ``(by_r2, by_mse)``.

    ``by_r2`` sorts by mean R^2 descending, ties by lower mean MSE and then
    by configuration identity; ``by_mse`` sorts by mean MSE ascending, ties
    by higher mean R^2 and then identity.  Undefined values sort last.
    Baselines are ranked alongside the networks by the same keys.
    """
    records = list(records)
    means = [r.mean for r in records]

    def r2_key(i):
        m = means[i]
        return (_nan_last(m.r2, True), _nan_last(m.mse), config_key(records[i]))

    def mse_key(i):
        m = means[i]
        return (_nan_last(m.mse), _nan_last(m.r2, True), config_key(records[i]))

    order = range(len(records))
    return (
        [records[i] for i in sorted(order, key=r2_key)],
        [records[i] for i in sorted(order, key=mse_key)],
    )


def record_row(record: ResultRecord, rank: str, timing: bool = False) -> list:
    mean = record.mean
    per_seed = [";".join(format_float(getattr(m, k)) for m in record.per_seed) for k in ("r2", "mae", "mse")]
    return (
        [rank]
        + [record.columns[c] for c in CONFIG_COLUMNS]
        + [format_float(mean.r2), format_float(mean.mae), format_float(mean.mse)]
        + per_seed
        + [format_float(record.seconds) if timing else ""]
    )


def write_table(path, ordered, timing=False):
    """Write one ranked table; networks are numbered 1.., baselines get ``~``."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        rank = 0
        for rec in ordered:
            if is_baseline(rec):
                label = BASELINE_RANK
            else:
                rank += 1
                label = str(rank)
            writer.writerow(record_row(rec, label, timing))


def write_results(out_dir, records, timing=False):
    """Rank ``records`` and write ``results_by_r2.csv`` and ``results_by_mse.csv``."""
    out_dir = Path(out_dir)
    by_r2, by_mse = rank_results(records)
    paths = out_dir / "results_by_r2.csv", out_dir / "results_by_mse.csv"
    write_table(paths[0], by_r2, timing)
    write_table(paths[1], by_mse, timing)
    return paths


def read_results(path) -> list:
    """Load a results table back into records (per-seed metrics, no traces)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise SchemaError(f"{path}: not a results table (header mismatch)")
        records = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(HEADER):
                raise SchemaError(f"{path}:{line}: expected {len(HEADER)} fields, got {len(row)}")
            cells = dict(zip(HEADER, row))
            try:
                seeds = [
                    [_parse_float(v) for v in cells[k].split(";")] if cells[k] else []
                    for k in ("r2_per_seed", "mae_per_seed", "mse_per_seed")
                ]
                seconds = _parse_float(cells["seconds"]) if cells["seconds"] else 0.0
            except SchemaError as exc:
                raise SchemaError(f"{path}:{line}: {exc}") from None
            if not len(seeds[0]) == len(seeds[1]) == len(seeds[2]):
                raise SchemaError(f"{path}:{line}: per-seed columns differ in length")
            columns = {c: cells[c] for c in CONFIG_COLUMNS}
            per_seed = [Metrics(*t) for t in zip(*seeds)]
            rec = ResultRecord(columns, per_seed, seconds, len(per_seed), identity=config_key_of(columns))
            records.append(rec)
    return records


def config_key_of(columns: dict) -> str:
    return "|".join(columns[c] for c in CONFIG_COLUMNS)


# --------------------------------------------------------------------------
# diagnostics


def export_residual_diagnostics(residuals, out_dir, model: str):
    """Write ``qq_<model>.csv`` and ``residuals_<model>.csv``; returns both paths."""
    out_dir = Path(out_dir)
    residuals = np.asarray(residuals, dtype=np.float64).ravel()
    theoretical, sample = qq_pairs(residuals)
    qq_path = out_dir / f"qq_{model}.csv"
    abs_path = out_dir / f"residuals_{model}.csv"
    with qq_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("theoretical", "sample"))
        writer.writerows((format_float(t), format_float(s)) for t, s in zip(theoretical, sample))
    with abs_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("abs_residual",))
        writer.writerows((format_float(v),) for v in np.abs(residuals))
    return qq_path, abs_path


def trace_rows(trace) -> list:
    rows = []
    for rec in trace:
        t, v = rec.train, rec.validation
        rows.append([str(rec.epoch)] + [format_float(x) for x in (t.r2, t.mae, t.mse, v.r2, v.mae, v.mse)])
    return rows


def export_epoch_trace(record_or_trace, path):
    """Per-epoch train/validation metrics; a record contributes its seed-mean trace."""
    trace = record_or_trace.mean_trace() if isinstance(record_or_trace, ResultRecord) else record_or_trace
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        writer.writerows(trace_rows(trace))
    return Path(path)


def read_numeric_csv(path) -> dict:
    """Columns of a numeric CSV (as written by the exporters) keyed by header name."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = [[] for _ in header]
        for row in reader:
            for k, cell in enumerate(row):
                cols[k].append(_parse_float(cell))
    return {name: np.array(values, dtype=np.float64) for name, values in zip(header, cols)}
