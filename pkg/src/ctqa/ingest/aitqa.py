"""Adapter for the AIT-QA release.

Files (in ``root`` or ``root/data``): ``aitqa_tables.jsonl`` and
``aitqa_questions.jsonl``.

Table record: ``id``; ``column_header`` - per data column, the header path
from top to bottom; ``row_header`` - per data row, the header path from
outermost to innermost; ``data`` - rows x columns of cell values. Adjacent
columns (rows) sharing a path prefix share the header node for that prefix.
Empty trailing path elements are dropped.

Question record: ``id``, ``table_id``, ``question``, ``answers`` (list) plus
the two subset flags, looked up under the names in ``KPI_FIELDS`` and
``HIERARCHY_FIELDS``.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..errors import IntegrityError, SchemaError
from ..table_model import Axis, CellGrid, HeaderNode, HeaderTree, SourceTable, validate_table
from .dataset import Dataset, QAPair, Split
from .hitab import cell_text

KPI = "kpi-driven"
TABLE_DRIVEN = "table-driven"
ROW_HIERARCHY = "row-header-hierarchy"
NO_ROW_HIERARCHY = "no-row-header-hierarchy"
AITQA_TAGS = frozenset({KPI, TABLE_DRIVEN, ROW_HIERARCHY, NO_ROW_HIERARCHY})

KPI_FIELDS = ("type", "question_type", "is_kpi", "kpi")
HIERARCHY_FIELDS = ("row_hierarchy_needed", "row_header_hierarchy", "row_header_hierarchy_needed",
                    "row_hierarchy")


def _require(rec: Mapping, name: str, where: str) -> Any:
    if name not in rec:
        raise SchemaError(f"{where}: missing field {name!r}", name)
    return rec[name]


def _paths(raw: Any, n: int, name: str, where: str) -> list[list[str]]:
    if not isinstance(raw, list) or len(raw) != n:
        raise SchemaError(f"{where}: {name} must list one header path per index ({n})", name)
    paths = []
    for i, p in enumerate(raw):
        items = [cell_text(v).strip() for v in (p if isinstance(p, list) else [p])]
        while len(items) > 1 and items[-1] == "":
            items.pop()
        if not items:
            items = [""]
        paths.append(items)
    return paths


def tree_from_paths(axis: Axis, paths: Sequence[Sequence[str]]) -> HeaderTree:
    """Group consecutive indices with a common path prefix under shared header nodes."""

    def build(indices: list[int], depth: int) -> list[HeaderNode]:
        nodes = []
        i = 0
        while i < len(indices):
            k = indices[i]
            label = paths[k][depth]
            if len(paths[k]) == depth + 1:
                nodes.append(HeaderNode(label, k, k))
                i += 1
                continue
            j = i
            while (j < len(indices) and len(paths[indices[j]]) > depth + 1
                   and paths[indices[j]][depth] == label):
                j += 1
            group = indices[i:j]
            children = build(group, depth + 1)
            nodes.append(HeaderNode(label, group[0], group[-1], tuple(children)))
            i = j
        return nodes

    return HeaderTree.build(axis, build(list(range(len(paths))), 0))


def adapt_aitqa_table(record: Mapping) -> SourceTable:
    table_id = cell_text(_require(record, "id", "aitqa table"))
    where = f"aitqa table {table_id}"
    data = _require(record, "data", where)
    if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
        raise SchemaError(f"{where}: data must be a list of rows", "data")
    rows = len(data)
    cols = max((len(r) for r in data), default=0)
    col_paths = _paths(_require(record, "column_header", where), cols, "column_header", where)
    row_paths = _paths(_require(record, "row_header", where), rows, "row_header", where)
    cells = {}
    for r, row in enumerate(data):
        for c, v in enumerate(row):
            text = cell_text(v)
            if text != "":
                cells[(r, c)] = text
    table = SourceTable(
        table_id=table_id,
        title=cell_text(record.get("title", "")),
        column_tree=tree_from_paths(Axis.COLUMN, col_paths),
        row_tree=tree_from_paths(Axis.ROW, row_paths),
        grid=CellGrid(rows, cols, cells),
        source_text=json.dumps(record, ensure_ascii=False),
    )
    report = validate_table(table)
    if report:
        raise IntegrityError(f"{where}: cannot be mapped faithfully: {report[0]}", report)
    return table


def _flag(value: Any, truthy: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    text = str(value).strip().lower()
    if text in ("true", "yes", "y", "1"):
        return True
    if text in ("false", "no", "n", "0", ""):
        return False
    return truthy in text


def _lookup(rec: Mapping, names: Sequence[str], where: str) -> Any:
    for name in names:
        if name in rec:
            return rec[name]
    raise SchemaError(f"{where}: missing subset flag (tried {', '.join(names)})", names[0])


def adapt_aitqa_question(rec: Mapping) -> QAPair:
    where = f"aitqa question {rec.get('id', '?')}"
    question = _require(rec, "question", where)
    if not isinstance(question, str) or not question.strip():
        raise SchemaError(f"{where}: empty question", "question")
    answers = _require(rec, "answers", where)
    answers = answers if isinstance(answers, list) else [answers]
    if not answers:
        raise SchemaError(f"{where}: empty answers", "answers")
    kpi = _flag(_lookup(rec, KPI_FIELDS, where), "kpi")
    hierarchy = _flag(_lookup(rec, HIERARCHY_FIELDS, where), "hierarch")
    tags = {KPI if kpi else TABLE_DRIVEN, ROW_HIERARCHY if hierarchy else NO_ROW_HIERARCHY}
    return QAPair(cell_text(_require(rec, "id", where)), cell_text(_require(rec, "table_id", where)),
                  question, tuple(cell_text(a) for a in answers), Split.UNSPLIT, frozenset(tags))


def adapt_aitqa(record: Mapping, questions: Sequence[Mapping] = ()) -> tuple[SourceTable, list[QAPair]]:
    table = adapt_aitqa_table(record)
    pairs = [adapt_aitqa_question(q) for q in questions]
    for p in pairs:
        if p.table_id != table.table_id:
            raise IntegrityError(f"question {p.qa_id} belongs to table {p.table_id}, not {table.table_id}")
    return table, pairs


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_aitqa(root: str | os.PathLike) -> Dataset:
    root = Path(root)
    base = root if (root / "aitqa_tables.jsonl").exists() else root / "data"
    tables = {}
    for rec in _read_jsonl(base / "aitqa_tables.jsonl"):
        table = adapt_aitqa_table(rec)
        tables[table.table_id] = table
    pairs = tuple(adapt_aitqa_question(q) for q in _read_jsonl(base / "aitqa_questions.jsonl"))
    return Dataset("aitqa", tables, pairs, AITQA_TAGS)
