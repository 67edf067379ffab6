"""Typed reader for the fedroute results schema.

The exporter's column set is fixed; this reader requires it verbatim so a
drifted file fails loudly, naming the first offending column, instead of
rendering a silently wrong figure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

# column -> parser, in the exporter's order
SCHEMA: dict[str, type] = {
    "scenario": str,
    "seed": int,
    "policy": str,
    "controller_count": int,
    "flow_id": int,
    "src": int,
    "dst": int,
    "delay_ms": float,
    "setup_delay_ms": float,
    "throughput_mbps": float,
    "throughput_ratio": float,
    "loss_ratio": float,
    "hops": int,
    "utility": float,
}


class SchemaError(ValueError):
    """A results file does not match the exporter's schema."""

    def __init__(self, path, column: str, detail: str):
        self.column = column
        super().__init__(f"{path}: column {column!r} {detail}")


@dataclass(frozen=True)
class Table:
    """Parsed rows of one results file."""

    path: str
    columns: tuple[str, ...]
    rows: list[dict]

    def __len__(self) -> int:
        return len(self.rows)

    def values(self, column: str) -> list:
        return [r[column] for r in self.rows]


def read_table(path) -> Table:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(path, next(iter(SCHEMA)), "is missing (empty file)") from None
        for want in SCHEMA:
            if want not in header:
                raise SchemaError(path, want, "is missing")
        for got in header:
            if got not in SCHEMA:
                raise SchemaError(path, got, "is not part of the results schema")
        if len(set(header)) != len(header):
            dup = next(c for c in header if header.count(c) > 1)
            raise SchemaError(path, dup, "appears more than once")

        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise SchemaError(
                    path, header[min(len(raw), len(header) - 1)],
                    f"has a ragged row at line {lineno}",
                )
            row = {}
            for col, cell in zip(header, raw):
                try:
                    row[col] = SCHEMA[col](cell)
                except ValueError:
                    raise SchemaError(
                        path, col, f"holds unparsable value {cell!r} at line {lineno}"
                    ) from None
            rows.append(row)
    return Table(str(path), tuple(header), rows)
