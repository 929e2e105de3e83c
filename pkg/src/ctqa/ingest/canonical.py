"""Canonical table document (JSON, UTF-8).

    {
      "id": "tab-102",
      "title": "...",
      "column_tree": [{"value": "...", "span": [0, 2], "children": [...]}, ...],
      "row_tree":    [...same node shape...],
      "rows": 4,
      "cols": 3,
      "cells": [["12", null, ...], ...],        # rows x cols, null = no value stored
      "merged_regions": [[row_start, row_end, col_start, col_end], ...]
    }

Header levels are not stored; they follow from nesting depth.
"""

from __future__ import annotations

import json
import os
from typing import Any, Mapping

from ..errors import IntegrityError, SchemaError
from ..table_model import Axis, CellGrid, HeaderNode, HeaderTree, SourceTable, validate_table

TABLE_FIELDS = ("id", "title", "column_tree", "row_tree", "rows", "cols", "cells", "merged_regions")
NODE_FIELDS = ("value", "span", "children")


def _check_fields(obj: Any, expected: tuple[str, ...], where: str) -> None:
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}", where)
    for name in expected:
        if name not in obj:
            raise SchemaError(f"{where}: missing field {name!r}", name)
    extra = sorted(set(obj) - set(expected))
    if extra:
        raise SchemaError(f"{where}: unexpected field(s) {', '.join(map(repr, extra))}", extra[0])


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: expected integer, got {value!r}", where)
    return value


def _node(obj: Any, level: int, where: str) -> HeaderNode:
    _check_fields(obj, NODE_FIELDS, where)
    if not isinstance(obj["value"], str):
        raise SchemaError(f"{where}.value: expected string", "value")
    span = obj["span"]
    if not isinstance(span, list) or len(span) != 2:
        raise SchemaError(f"{where}.span: expected [start, end]", "span")
    children = obj["children"]
    if not isinstance(children, list):
        raise SchemaError(f"{where}.children: expected list", "children")
    kids = tuple(_node(c, level + 1, f"{where}.children[{i}]") for i, c in enumerate(children))
    return HeaderNode(obj["value"], _int(span[0], f"{where}.span"), _int(span[1], f"{where}.span"),
                      kids, level)


def _tree(axis: Axis, nodes: Any, where: str) -> HeaderTree:
    if not isinstance(nodes, list):
        raise SchemaError(f"{where}: expected list of nodes", where)
    return HeaderTree(axis, tuple(_node(n, 0, f"{where}[{i}]") for i, n in enumerate(nodes)))


def table_from_document(doc: Mapping) -> SourceTable:
    """Build a table from a parsed document without checking table invariants."""
    _check_fields(doc, TABLE_FIELDS, "table")
    for name in ("id", "title"):
        if not isinstance(doc[name], str):
            raise SchemaError(f"table.{name}: expected string", name)
    rows, cols = _int(doc["rows"], "rows"), _int(doc["cols"], "cols")
    raw_cells = doc["cells"]
    if not isinstance(raw_cells, list) or len(raw_cells) != rows:
        raise SchemaError(f"table.cells: expected {rows} row(s)", "cells")
    cells: dict[tuple[int, int], str] = {}
    for r, row in enumerate(raw_cells):
        if not isinstance(row, list) or len(row) != cols:
            raise SchemaError(f"table.cells[{r}]: expected {cols} value(s)", "cells")
        for c, value in enumerate(row):
            if value is None:
                continue
            if not isinstance(value, str):
                raise SchemaError(f"table.cells[{r}][{c}]: expected string or null", "cells")
            cells[(r, c)] = value
    regions = doc["merged_regions"]
    if not isinstance(regions, list):
        raise SchemaError("table.merged_regions: expected list", "merged_regions")
    merged = []
    for i, region in enumerate(regions):
        if not isinstance(region, list) or len(region) != 4:
            raise SchemaError(f"table.merged_regions[{i}]: expected 4 integers", "merged_regions")
        merged.append(tuple(_int(v, f"merged_regions[{i}]") for v in region))
    return SourceTable(
        table_id=doc["id"],
        title=doc["title"],
        column_tree=_tree(Axis.COLUMN, doc["column_tree"], "column_tree"),
        row_tree=_tree(Axis.ROW, doc["row_tree"], "row_tree"),
        grid=CellGrid(rows, cols, cells, tuple(merged)),
    )


def load_canonical(document: str | bytes | Mapping) -> SourceTable:
    """Parse a canonical document (JSON text or already-decoded mapping) into a valid table."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    table = table_from_document(document)
    report = validate_table(table)
    if report:
        raise IntegrityError(f"table {table.table_id!r}: {len(report)} violation(s); first: {report[0]}", report)
    return table


def load_canonical_file(path: str | os.PathLike) -> SourceTable:
    with open(path, encoding="utf-8") as fh:
        return load_canonical(fh.read())


def _node_document(node: HeaderNode) -> dict:
    return {"value": node.value, "span": [node.span_start, node.span_end],
            "children": [_node_document(c) for c in node.children]}


def table_to_document(table: SourceTable) -> dict:
    grid = table.grid
    return {
        "id": table.table_id,
        "title": table.title,
        "column_tree": [_node_document(n) for n in table.column_tree.roots],
        "row_tree": [_node_document(n) for n in table.row_tree.roots],
        "rows": grid.rows,
        "cols": grid.cols,
        "cells": [[grid.cells.get((r, c)) for c in range(grid.cols)] for r in range(grid.rows)],
        "merged_regions": [list(r) for r in grid.merged_regions],
    }


def serialize_canonical(table: SourceTable, indent: int | None = 1) -> str:
    return json.dumps(table_to_document(table), ensure_ascii=False, indent=indent)


def dump_canonical(table: SourceTable, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_canonical(table))
        fh.write("\n")
