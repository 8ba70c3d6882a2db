"""Reading and writing the on-disk formats.

Value lists are UTF-8 text, one value per line, or CSV with a named
column. Gold files and partition exports are CSV: ``value,cluster_id``
and ``value,cluster_id,canonical`` respectively, canonical being the
longest member string of the cluster.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable

from .core import GoldPartition, Partition, ValueTable, canonical_string
from .costmodel import GlobalParams, PurityModel, UserParams


class ParseError(Exception):
    """A file could not be interpreted; message carries the line number."""


class GoldCoverageError(Exception):
    """The gold file does not cover every value."""

    def __init__(self, missing: list[str], extra: list[str]):
        self.missing = missing
        self.extra = extra
        parts = []
        if missing:
            parts.append(f"{len(missing)} values without a gold cluster: {missing[:5]}")
        if extra:
            parts.append(f"{len(extra)} gold rows for unknown values: {extra[:5]}")
        super().__init__("; ".join(parts))


def load_values(path: str | Path, column: str | None = None) -> ValueTable:
    """Load a value list; duplicates collapse to one id."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if column is None and path.suffix.lower() != ".csv":
        return ValueTable(line for line in text.splitlines() if line.strip())
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError(f"{path}: empty CSV")
    header = rows[0]
    if column is None:
        if len(header) != 1:
            raise ParseError(f"{path}:1: multiple columns; pass --column to pick one")
        column = header[0]
    try:
        idx = header.index(column)
    except ValueError:
        raise ParseError(f"{path}:1: no column named {column!r}") from None
    values = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if idx >= len(row):
            raise ParseError(f"{path}:{ln}: row has no column {column!r}")
        if row[idx].strip():
            values.append(row[idx])
    return ValueTable(values)


def load_gold(path: str | Path, table: ValueTable) -> GoldPartition:
    """Load ``value,cluster_id`` CSV and check it covers the table."""
    path = Path(path)
    rows = list(csv.reader(path.read_text(encoding="utf-8").splitlines()))
    if rows and [c.strip().lower() for c in rows[0][:2]] == ["value", "cluster_id"]:
        rows = rows[1:]
    label_of: dict[int, str] = {}
    extra: list[str] = []
    for ln, row in enumerate(rows, start=1):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) < 2:
            raise ParseError(f"{path}:{ln}: expected value,cluster_id")
        value, label = row[0], row[1]
        if value not in table:
            extra.append(value)
            continue
        label_of[table.id_of(value)] = label
    missing = [v for v in table if table.id_of(v) not in label_of]
    if missing or extra:
        raise GoldCoverageError(missing, extra)
    dense: dict[str, int] = {}
    entity_of = [dense.setdefault(label_of[i], len(dense)) for i in range(len(table))]
    return GoldPartition.from_entity_map(entity_of, len(table))


def write_values(path: str | Path, values: Iterable[str]) -> None:
    Path(path).write_text("\n".join(values) + "\n", encoding="utf-8")


def write_gold(path: str | Path, table: ValueTable, gold: GoldPartition) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "cluster_id"])
        for i, v in enumerate(table):
            writer.writerow([v, gold.entity_of[i]])


def write_partition(path: str | Path, table: ValueTable, partition: Partition) -> None:
    """Export ``value,cluster_id,canonical`` rows, deterministically ordered."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "cluster_id", "canonical"])
        for row in partition_rows(table, partition):
            writer.writerow(row)


def partition_rows(table: ValueTable, partition: Partition) -> list[tuple[str, int, str]]:
    rows = []
    ordered = sorted(partition.clusters, key=lambda c: min(c.members))
    for cid, cluster in enumerate(ordered):
        canon = canonical_string(table, cluster.members)
        for v in sorted(cluster.members):
            rows.append((table[v], cid, canon))
    return rows


def load_partition(path: str | Path, table: ValueTable) -> Partition:
    """Read a partition export (canonical column optional)."""
    path = Path(path)
    rows = list(csv.reader(path.read_text(encoding="utf-8").splitlines()))
    if rows and [c.strip().lower() for c in rows[0][:2]] == ["value", "cluster_id"]:
        rows = rows[1:]
    groups: dict[str, set[int]] = {}
    unknown: list[str] = []
    for ln, row in enumerate(rows, start=1):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) < 2:
            raise ParseError(f"{path}:{ln}: expected value,cluster_id")
        if row[0] not in table:
            unknown.append(row[0])
            continue
        groups.setdefault(row[1], set()).add(table.id_of(row[0]))
    covered = {v for members in groups.values() for v in members}
    missing = [v for v in table if table.id_of(v) not in covered]
    if missing or unknown:
        raise GoldCoverageError(missing, unknown)
    return Partition.from_member_sets(groups.values(), len(table))


def params_to_dict(user: UserParams, model: PurityModel,
                   globals_: GlobalParams | None = None) -> dict:
    doc = {"user": asdict(user), "purity_model": asdict(model)}
    if globals_ is not None:
        doc["globals"] = asdict(globals_)
    return doc


def params_from_dict(doc: dict) -> tuple[UserParams, PurityModel, GlobalParams]:
    user = UserParams(**doc["user"])
    model = PurityModel(**doc["purity_model"])
    globals_ = GlobalParams(**doc.get("globals", {}))
    return user, model, globals_


def save_params(path: str | Path, user: UserParams, model: PurityModel,
                globals_: GlobalParams | None = None) -> None:
    Path(path).write_text(json.dumps(params_to_dict(user, model, globals_), indent=2) + "\n",
                          encoding="utf-8")


def load_params(path: str | Path) -> tuple[UserParams, PurityModel, GlobalParams]:
    return params_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
