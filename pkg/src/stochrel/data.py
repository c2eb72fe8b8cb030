"""Experimental-design datasets and CSV ingestion.

CSV schema: header ``x1,...,xM,y`` (one record per line, '.' decimal,
UTF-8). The replicated layout prepends a ``group_id`` column. A provenance
record (file hash, row count) travels with every loaded dataset.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "load_dataset_csv", "save_dataset_csv"]


@dataclass(frozen=True)
class Dataset:
    """Design matrix with one response per row; optional replication groups."""

    x: np.ndarray
    y: np.ndarray
    groups: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.shape[0] != y.size:
            raise ValueError(f"{x.shape[0]} design rows but {y.size} responses")
        if not np.all(np.isfinite(x)):
            raise ValueError("design matrix contains non-finite values")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses contain non-finite values")
        if self.groups is not None:
            g = np.asarray(self.groups)
            if g.size != y.size:
                raise ValueError("group labels must match the number of rows")
            object.__setattr__(self, "groups", g)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def replication_groups(self) -> list[tuple[np.ndarray, np.ndarray]] | None:
        """(x_i, responses) per replication group, in first-appearance order."""
        if self.groups is None:
            return None
        out = []
        seen = {}
        for i, g in enumerate(self.groups):
            if g not in seen:
                seen[g] = len(out)
                out.append((self.x[i], [self.y[i]]))
            else:
                out[seen[g]][1].append(self.y[i])
        return [(x_i, np.asarray(ys)) for x_i, ys in out]


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_dataset_csv(path, schema: dict | None = None) -> Dataset:
    """Load a dataset; errors name the offending row or column.

    ``schema`` may give explicit column names: ``{"x": [...], "y": "y",
    "group": "group_id" or None}``. By default the header is matched against
    the standard layouts ``x1..xM,y`` and ``group_id,x1..xM,y``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if schema is None:
            schema = _infer_schema(header, path)
        x_cols, y_col = list(schema["x"]), schema["y"]
        group_col = schema.get("group")
        wanted = ([group_col] if group_col else []) + x_cols + [y_col]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing} (header: {header})")
        idx = {c: header.index(c) for c in wanted}

        xs, ys, gs = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                xs.append([float(row[idx[c]]) for c in x_cols])
                ys.append(float(row[idx[y_col]]))
            except (ValueError, IndexError) as e:
                raise ValueError(f"{path}: row {rownum}: cannot parse record ({e})") from None
            if not all(np.isfinite(xs[-1])) or not np.isfinite(ys[-1]):
                raise ValueError(f"{path}: row {rownum}: non-finite value")
            if group_col:
                gs.append(row[idx[group_col]].strip())
    if not ys:
        raise ValueError(f"{path}: no data rows")
    provenance = {
        "path": str(path),
        "sha256": _file_sha256(path),
        "n_rows": len(ys),
    }
    return Dataset(
        np.asarray(xs),
        np.asarray(ys),
        np.asarray(gs) if gs else None,
        provenance,
    )


def _infer_schema(header: list[str], path: Path) -> dict:
    group = None
    cols = header
    if cols and cols[0] == "group_id":
        group = "group_id"
        cols = cols[1:]
    if len(cols) < 2 or cols[-1] != "y" or any(c != f"x{i + 1}" for i, c in enumerate(cols[:-1])):
        raise ValueError(
            f"{path}: header {header} does not match 'x1..xM,y' or 'group_id,x1..xM,y'; "
            "pass an explicit schema"
        )
    return {"x": cols[:-1], "y": "y", "group": group}


def save_dataset_csv(dataset: Dataset, path, sidecar: bool = True) -> None:
    """Write the standard CSV layout at full float precision (round-trip exact)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        xcols = [f"x{i + 1}" for i in range(dataset.dim)]
        if dataset.groups is not None:
            writer.writerow(["group_id", *xcols, "y"])
            for g, xr, yv in zip(dataset.groups, dataset.x, dataset.y):
                writer.writerow([g, *(repr(v) for v in xr), repr(yv)])
        else:
            writer.writerow([*xcols, "y"])
            for xr, yv in zip(dataset.x, dataset.y):
                writer.writerow([*(repr(v) for v in xr), repr(yv)])
    if sidecar:
        prov = {"sha256": _file_sha256(path), "n_rows": dataset.n, "path": str(path)}
        with open(path.with_suffix(path.suffix + ".provenance.json"), "w") as f:
            json.dump(prov, f, indent=2)
