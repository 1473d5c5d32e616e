"""Cleaning pipeline for SPEC CPU 2017 style result tables.

Steps, in order:

1. alphanumeric cleaning (control characters, column-name spaces, case)
2. removal of rows with a zero (or unparseable) ``baseresult``
3. conversion of memory/cache sizes to MB
4. integer encoding of non-numeric columns
5. pruning of columns whose Kendall tau-b with an earlier column exceeds 0.7

Every step returns the new table plus a dict that ends up in the
:class:`CleaningReport`.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from scipy import stats

from .errors import ConfigError, SchemaError

TARGET = "baseresult"
UNIT_COLUMNS = ("1stlevelcache", "2ndlevelcache", "3rdlevelcache", "othercache", "memory")
NUMERIC_COLUMNS = (
    "peakresult",
    "baseresult",
    "energypeakresult",
    "energybaseresult",
    "#cores",
    "#chips",
    "memory",
    "#enabledthreadspercore",
    "processormhz",
)
# the second benchmark score and the free-text column are never features
EXCLUDED_COLUMNS = ("peakresult", "disclosures")
CORRELATION_THRESHOLD = 0.7
MISSING = ""

_UNIT_FACTORS = {"k": 1.0 / 1024.0, "m": 1.0, "g": 1024.0, "t": 1024.0**2}
_QUANTITY = re.compile(r"^(\d+(?:\.\d*)?|\.\d+)\s*([kmgt])b?(?![a-z])")
_BARE_NUMBER = re.compile(r"^[-+]?(\d+(?:\.\d*)?|\.\d+)(e[-+]?\d+)?$")
_SPACES = re.compile(r"\s+")
# C0/C1 controls (tab, escape, ...) and invisible format characters
_CONTROL = re.compile("[\x00-\x1f\x7f-\x9f\u200b-\u200f\u2028-\u202e\u2060-\u2064\ufeff]")


def format_number(value: float) -> str:
    """Shortest decimal that round-trips; integral values print without ``.0``."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def parse_number(text: str) -> Optional[float]:
    try:
        value = float(text)
    except (TypeError, ValueError):
        return None
    return value if math.isfinite(value) else None


# --------------------------------------------------------------------------
# tables


@dataclass
class RawTable:
    columns: list
    rows: list
    source: str = ""

    def __post_init__(self):
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise SchemaError(
                    f"{self.source or 'table'}: row {i + 1} has {len(row)} cells, "
                    f"expected {len(self.columns)}"
                )

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise SchemaError(f"missing column {name!r}") from None

    def column(self, name: str) -> list:
        j = self.column_index(name)
        return [row[j] for row in self.rows]

    def replace(self, columns=None, rows=None) -> "RawTable":
        return RawTable(
            list(self.columns if columns is None else columns),
            [list(r) for r in (self.rows if rows is None else rows)],
            self.source,
        )


def read_raw_csv(path) -> RawTable:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    return RawTable(header, rows, path.name)


@dataclass
class ColumnInfo:
    name: str
    kind: str  # "numeric" | "categorical"
    unit: Optional[str] = None
    vocabulary: Optional[list] = None

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "unit": self.unit, "vocabulary": self.vocabulary}


@dataclass
class CleanDataset:
    features: np.ndarray
    target: np.ndarray
    columns: list
    target_name: str = TARGET

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64).reshape(len(self.target), -1)
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.features.shape[1] != len(self.columns):
            raise SchemaError(
                f"{self.features.shape[1]} feature columns but {len(self.columns)} column records"
            )

    @property
    def feature_names(self) -> list:
        return [c.name for c in self.columns]

    @property
    def n_rows(self) -> int:
        return len(self.target)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "CleanDataset":
        return CleanDataset(self.features[index], self.target[index], self.columns, self.target_name)

    def select_columns(self, names) -> "CleanDataset":
        idx = [self.feature_names.index(n) for n in names]
        cols = [self.columns[i] for i in idx]
        return CleanDataset(self.features[:, idx], self.target, cols, self.target_name)


@dataclass
class CleaningReport:
    source: str = ""
    rows_in: int = 0
    rows_out: int = 0
    steps: list = field(default_factory=list)

    def add(self, step: str, delta: dict):
        self.steps.append({"step": step, **delta})

    def step(self, name: str) -> dict:
        for s in self.steps:
            if s["step"] == name:
                return s
        raise KeyError(name)

    @property
    def dropped_columns(self) -> list:
        return [d["column"] for d in self.step("prune_correlated")["dropped"]]

    @property
    def retained_columns(self) -> list:
        return list(self.step("prune_correlated")["retained"])

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "rows_in": self.rows_in,
            "rows_out": self.rows_out,
            "steps": self.steps,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None, width=100)


# --------------------------------------------------------------------------
# step 1


def _clean_cell(text: str) -> tuple[str, int]:
    cleaned, removed = _CONTROL.subn(" ", text)
    return _SPACES.sub(" ", cleaned).strip().lower(), removed


def clean_column_name(name: str) -> str:
    return _SPACES.sub("", _CONTROL.sub("", name)).lower()


def clean_alphanumeric(table: RawTable):
    """Strip control characters, drop spaces from column names, lower-case everything.

    A run of control characters and whitespace inside a cell collapses to a
    single space.
    """
    columns = [clean_column_name(c) for c in table.columns]
    seen = set()
    for orig, new in zip(table.columns, columns):
        if new in seen:
            raise SchemaError(f"column {orig!r} collides with another column after cleaning ({new!r})")
        seen.add(new)
    removed = 0
    changed = 0
    rows = []
    for row in table.rows:
        new_row = []
        for cell in row:
            cleaned, n = _clean_cell(cell)
            removed += n
            changed += cleaned != cell
            new_row.append(cleaned)
        rows.append(new_row)
    renamed = {o: n for o, n in zip(table.columns, columns) if o != n}
    delta = {
        "control_characters_removed": removed,
        "cells_changed": changed,
        "columns_renamed": renamed,
    }
    return table.replace(columns, rows), delta


# --------------------------------------------------------------------------
# step 2


def drop_zero_targets(table: RawTable, target: str = TARGET):
    if target not in table.columns:
        raise SchemaError(f"target column {target!r} not found; columns are {table.columns}")
    j = table.column_index(target)
    kept, zero, bad = [], [], []
    for i, row in enumerate(table.rows):
        value = parse_number(row[j])
        if value is None:
            bad.append(i + 1)
        elif value == 0:
            zero.append(i + 1)
        else:
            kept.append(row)
    delta = {
        "rows_in": len(table.rows),
        "zero_target_rows_removed": len(zero),
        "unparseable_target_rows_removed": len(bad),
        "removed_zero_rows": zero,
        "removed_unparseable_rows": bad,
        "rows_out": len(kept),
    }
    return table.replace(rows=kept), delta


# --------------------------------------------------------------------------
# step 3


def to_megabytes(cell: str) -> Optional[float]:
    """Parse the leading quantity of ``cell`` and convert it to MB.

    A bare number is taken to be MB already.  Returns ``None`` when the cell
    has no recognisable quantity.
    """
    text = cell.strip().lower()
    if _BARE_NUMBER.match(text):
        return parse_number(text)
    m = _QUANTITY.match(text)
    if m is None:
        return None
    return float(m.group(1)) * _UNIT_FACTORS[m.group(2)]


def normalize_units(table: RawTable, unit_columns=UNIT_COLUMNS, max_listed: int = 50):
    conversions = {}
    unconvertible = []
    n_unconvertible = 0
    rows = [list(r) for r in table.rows]
    present = [c for c in unit_columns if c in table.columns]
    for name in present:
        j = table.column_index(name)
        converted = 0
        for i, row in enumerate(rows):
            value = to_megabytes(row[j])
            if value is None:
                if row[j] != MISSING:
                    n_unconvertible += 1
                    if len(unconvertible) < max_listed:
                        unconvertible.append({"column": name, "row": i + 1, "value": row[j]})
                row[j] = MISSING
            else:
                new = format_number(value)
                converted += new != row[j]
                row[j] = new
        conversions[name] = converted
    delta = {
        "unit": "mb",
        "columns": present,
        "cells_converted": conversions,
        "unconvertible_cells": n_unconvertible,
        "unconvertible": unconvertible,
    }
    return table.replace(rows=rows), delta


# --------------------------------------------------------------------------
# step 4


def encode_categoricals(
    table: RawTable,
    numeric_columns=NUMERIC_COLUMNS,
    target: str = TARGET,
    exclude=EXCLUDED_COLUMNS,
    unit_columns=UNIT_COLUMNS,
):
    """Turn the table into a :class:`CleanDataset`.

    A column whose cells all parse as finite numbers stays numeric; every
    other column gets dense integer labels in order of first appearance.
    """
    target_values = [parse_number(c) for c in table.column(target)]
    if any(v is None for v in target_values):
        raise SchemaError(f"target column {target!r} has non-numeric cells")
    excluded = [c for c in table.columns if c in exclude]
    features, infos, demoted = [], [], []
    vocabularies = {}
    for name in table.columns:
        if name == target or name in excluded:
            continue
        cells = table.column(name)
        values = [parse_number(c) for c in cells]
        unit = "mb" if name in unit_columns else None
        if all(v is not None for v in values):
            features.append(values)
            infos.append(ColumnInfo(name, "numeric", unit))
            continue
        if name in numeric_columns:
            demoted.append(name)
        vocab = list(dict.fromkeys(cells))
        lookup = {v: i for i, v in enumerate(vocab)}
        features.append([float(lookup[c]) for c in cells])
        infos.append(ColumnInfo(name, "categorical", unit, vocab))
        vocabularies[name] = len(vocab)
    X = np.array(features, dtype=np.float64).T.reshape(len(table.rows), len(infos))
    ds = CleanDataset(X, np.array(target_values, dtype=np.float64), infos, target)
    delta = {
        "excluded_columns": excluded,
        "numeric_columns": [c.name for c in infos if c.kind == "numeric"],
        "categorical_columns": [c.name for c in infos if c.kind == "categorical"],
        "numeric_with_text_encoded_categorically": demoted,
        "vocabulary_sizes": vocabularies,
    }
    return ds, delta


def encode_with_vocabularies(table: RawTable, columns) -> np.ndarray:
    """Encode new rows with stored column records; unseen labels map to ``len(vocabulary)``."""
    out = np.empty((len(table.rows), len(columns)))
    for k, info in enumerate(columns):
        cells = table.column(info.name)
        if info.kind == "numeric":
            for i, c in enumerate(cells):
                v = parse_number(c)
                if v is None:
                    raise SchemaError(f"column {info.name!r} row {i + 1}: {c!r} is not numeric")
                out[i, k] = v
        else:
            lookup = {v: j for j, v in enumerate(info.vocabulary)}
            unseen = len(info.vocabulary)
            out[:, k] = [lookup.get(c, unseen) for c in cells]
    return out


# --------------------------------------------------------------------------
# step 5


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall tau-b; ``nan`` when either input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"kendall_tau needs equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ValueError("kendall_tau needs at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return float("nan")
    tau = stats.kendalltau(x, y, variant="b").statistic
    # The numerator (concordant minus discordant pairs) is an integer; recover
    # it and divide by one square root of the exact product of the pair counts
    # so that identical rankings give exactly 1.0.
    untied_x, untied_y = _untied_pairs(x), _untied_pairs(y)
    numerator = round(tau * math.sqrt(untied_x) * math.sqrt(untied_y))
    return numerator / math.sqrt(untied_x * untied_y)


def _untied_pairs(values) -> int:
    """Number of pairs not tied in ``values``."""
    n = len(values)
    counts = np.unique(values, return_counts=True)[1].astype(object)
    return n * (n - 1) // 2 - int(sum(counts * (counts - 1) // 2))


def correlation_matrix(features: np.ndarray) -> np.ndarray:
    f = features.shape[1]
    out = np.eye(f)
    for i in range(f):
        for j in range(i + 1, f):
            out[i, j] = out[j, i] = kendall_tau(features[:, i], features[:, j])
    return out


def prune_correlated(dataset: CleanDataset, threshold: float = CORRELATION_THRESHOLD):
    """Scan columns in order, dropping any whose |tau| with a kept column exceeds ``threshold``.

    Constant columns carry no information (their tau is undefined) and are
    dropped outright.
    """
    names = dataset.feature_names
    tau = correlation_matrix(dataset.features) if dataset.n_rows >= 2 else np.eye(len(names))
    retained, dropped = [], []
    for i, name in enumerate(names):
        col = dataset.features[:, i]
        if dataset.n_rows < 2 or np.all(col == col[0]):
            dropped.append({"column": name, "partner": None, "tau": None, "reason": "constant"})
            continue
        best = None
        for j in retained:
            t = tau[i, j]
            if best is None or abs(t) > abs(tau[i, best]):
                best = j
        if best is not None and abs(tau[i, best]) > threshold:
            dropped.append(
                {
                    "column": name,
                    "partner": names[best],
                    "tau": float(tau[i, best]),
                    "reason": "correlated",
                }
            )
        else:
            retained.append(i)
    kept_names = [names[i] for i in retained]
    delta = {
        "threshold": threshold,
        "method": "kendall tau-b",
        "columns": names,
        "correlation": [[None if math.isnan(v) else float(v) for v in row] for row in tau],
        "dropped": dropped,
        "retained": kept_names,
    }
    return dataset.select_columns(kept_names), delta


# --------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineConfig:
    target: str = TARGET
    unit_columns: tuple = UNIT_COLUMNS
    numeric_columns: tuple = NUMERIC_COLUMNS
    exclude_columns: tuple = EXCLUDED_COLUMNS
    threshold: float = CORRELATION_THRESHOLD


def clean_table(raw: RawTable, config: PipelineConfig = PipelineConfig()):
    """Run all cleaning steps; returns ``(CleanDataset, CleaningReport)``."""
    report = CleaningReport(source=raw.source, rows_in=len(raw.rows))
    table, delta = clean_alphanumeric(raw)
    report.add("clean_alphanumeric", delta)
    table, delta = drop_zero_targets(table, config.target)
    report.add("drop_zero_targets", delta)
    table, delta = normalize_units(table, config.unit_columns)
    report.add("normalize_units", delta)
    ds, delta = encode_categoricals(
        table, config.numeric_columns, config.target, config.exclude_columns, config.unit_columns
    )
    report.add("encode_categoricals", delta)
    ds, delta = prune_correlated(ds, config.threshold)
    report.add("prune_correlated", delta)
    report.rows_out = ds.n_rows
    return ds, report


def prepare_rows(raw: RawTable, columns, unit_columns=UNIT_COLUMNS) -> np.ndarray:
    """Clean unseen rows and encode them with a stored vocabulary."""
    table, _ = clean_alphanumeric(raw)
    table, _ = normalize_units(table, unit_columns)
    return encode_with_vocabularies(table, columns)


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    test_fraction: float = 0.2
    validation_fraction: float = 0.2


def split_indices(n_rows: int, spec: SplitSpec):
    if n_rows < 10:
        raise ConfigError(f"need at least 10 rows to split, got {n_rows}")
    order = np.random.default_rng(spec.seed).permutation(n_rows)
    n_test = int(round(n_rows * spec.test_fraction))
    rest = n_rows - n_test
    n_val = int(round(rest * spec.validation_fraction))
    n_train = rest - n_val
    return order[:n_train], order[n_train:rest], order[rest:]


def split_dataset(dataset: CleanDataset, spec: SplitSpec):
    train, val, test = split_indices(dataset.n_rows, spec)
    return dataset.subset(train), dataset.subset(val), dataset.subset(test)


# --------------------------------------------------------------------------
# files


def write_clean_csv(dataset: CleanDataset, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.feature_names + [dataset.target_name])
        for row, y in zip(dataset.features, dataset.target):
            writer.writerow([format_number(v) for v in row] + [format_number(y)])


def write_vocabularies(dataset: CleanDataset, path):
    doc = {
        "format_version": 1,
        "target": dataset.target_name,
        "columns": [c.to_dict() for c in dataset.columns],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_vocabularies(path) -> list:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ColumnInfo(**c) for c in doc["columns"]]


def read_clean_csv(path, vocabulary_path=None, target: str = TARGET) -> CleanDataset:
    raw = read_raw_csv(path)
    if target not in raw.columns:
        raise SchemaError(f"{path}: no {target!r} column")
    names = [c for c in raw.columns if c != target]
    cols = {c.name: c for c in read_vocabularies(vocabulary_path)} if vocabulary_path else {}
    X = np.empty((len(raw.rows), len(names)))
    for k, name in enumerate(names):
        for i, cell in enumerate(raw.column(name)):
            v = parse_number(cell)
            if v is None:
                raise SchemaError(f"{path}: column {name!r} row {i + 1} is not numeric: {cell!r}")
            X[i, k] = v
    targets = [parse_number(c) for c in raw.column(target)]
    if any(v is None for v in targets):
        raise SchemaError(f"{path}: non-numeric target")
    y = np.array(targets, dtype=np.float64)
    infos = [cols.get(n, ColumnInfo(n, "numeric")) for n in names]
    return CleanDataset(X, y, infos, target)
