"""CSV ingestion and JSON/CSV report emission."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from .core import ContaminatedPool
from .errors import MissingLabelColumn, NonNumericCell, ParseError


@dataclass(frozen=True)
class CSVTable:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    label_name: str


def read_csv_table(path, label_column, header: bool = True) -> CSVTable:
    """Parse a numeric CSV file.  ``label_column`` is a header name or a 0-based index."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not valid UTF-8 ({e.reason})") from e
    except csv.Error as e:
        raise ParseError(f"{path}: {e}") from e
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: no data")
    names = [c.strip() for c in rows[0]] if header else [f"x{j}" for j in range(len(rows[0]))]
    body = rows[1:] if header else rows
    first_line = 2 if header else 1
    if not body:
        raise ParseError(f"{path}: header but no data rows")
    width = len(names)

    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if not header or label_column not in names:
            raise MissingLabelColumn(f"label column {label_column!r} not found in {path}")
        label = names.index(label_column)
    else:
        label = int(label_column)
        if label < 0:
            label += width
        if not 0 <= label < width:
            raise MissingLabelColumn(f"label column index {label_column} out of range for {width} columns")

    data = np.empty((len(body), width))
    for i, row in enumerate(body):
        line = first_line + i
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", row=line)
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(f"non-numeric value {cell.strip()!r}", row=line, column=j + 1) from None
            if not math.isfinite(v):
                raise NonNumericCell(f"non-finite value {cell.strip()!r}", row=line, column=j + 1)
            data[i, j] = v
    feat = [j for j in range(width) if j != label]
    if not feat:
        raise ParseError(f"{path}: no feature columns besides the label")
    return CSVTable(data[:, feat], data[:, label], [names[j] for j in feat], names[label])


def load_csv(path, label_column, header: bool = True) -> ContaminatedPool:
    t = read_csv_table(path, label_column, header)
    return ContaminatedPool(t.X, t.y)


def _plain(obj):
    """Convert numpy scalars/arrays, tuples and dataclasses into JSON-ready values.

    Non-finite floats become None so every numeric field in a report is finite.
    """
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(config, exclude=("out", "threads")) -> str:
    """sha256 of the config's canonical JSON, ignoring non-semantic fields."""
    d = _plain(config)
    for k in exclude:
        d.pop(k, None)
    return hashlib.sha256(canonical_json(d).encode("utf-8")).hexdigest()


@dataclass
class RunReport:
    command: str
    config: dict
    config_hash: str
    trials: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> {"columns": [...], "rows": [[...]]}
    errors: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, _plain(getattr(self, f.name)))
        self.validate()

    def validate(self):
        def walk(v, key=""):
            if isinstance(v, dict):
                for k, x in v.items():
                    walk(x, k)
            elif isinstance(v, list):
                for x in v:
                    walk(x, key)
            elif isinstance(v, float):
                if not math.isfinite(v):
                    raise ValueError(f"non-finite value in field {key!r}")
                if "success_rate" in key and not 0.0 <= v <= 1.0:
                    raise ValueError(f"{key} = {v} outside [0, 1]")

        walk(asdict(self))

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=indent, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        return cls(**d)

    def write(self, path) -> list[Path]:
        """Write the JSON report plus one CSV per table next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        written = [path]
        for name, table in self.tables.items():
            p = path.with_name(f"{path.stem}_{name}.csv")
            write_table_csv(table, p)
            written.append(p)
        return written


def write_table_csv(table: dict, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(table["columns"])
        for row in table["rows"]:
            w.writerow(["" if v is None else v for v in row])
