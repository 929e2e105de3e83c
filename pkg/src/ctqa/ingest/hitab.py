"""Adapter for the HiTab release.

Release layout (``root`` may also be the repository root holding ``data/``)::

    tables/raw/<table_id>.json
    train_samples.jsonl, dev_samples.jsonl, test_samples.jsonl

Table record fields used (everything else is ignored):

``texts``
    full cell grid including header rows/columns.
``top_header_rows_num`` / ``left_header_columns_num``
    size of the header band; the data region is ``texts[H:][W:]``.
``top_root`` / ``left_root``
    header trees; each node has ``row_index``, ``column_index`` (grid
    coordinates of the header cell) and ``children``. The root is virtual.
``merged_regions``
    ``{first_row, last_row, first_column, last_column}`` in grid coordinates;
    only regions inside the data region are kept.
``title``

Header values are read from ``texts`` at the node's coordinates. Column and
row spans come from the leaves below each node. A row header that sits on its
own grid row above its children (indented outline style) is handled in one of
two ways: if that row has no data it is removed from the data region;
otherwise a leaf carrying the same text is added under the header so the row
stays addressable.

QA sample fields: ``id``, ``table_id``, ``question``, ``answer`` (list).
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..errors import IntegrityError, SchemaError
from ..table_model import Axis, CellGrid, HeaderNode, HeaderTree, SourceTable, validate_table
from .dataset import Dataset, QAPair, Split

log = logging.getLogger(__name__)

SPLIT_FILES = {Split.TRAIN: "train_samples.jsonl", Split.DEV: "dev_samples.jsonl",
               Split.TEST: "test_samples.jsonl"}


def _require(rec: Mapping, name: str, where: str) -> Any:
    if name not in rec:
        raise SchemaError(f"{where}: missing field {name!r}", name)
    return rec[name]


def cell_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def _region_bounds(region: Mapping) -> tuple[int, int, int, int]:
    for keys in (("first_row", "last_row", "first_column", "last_column"),
                 ("FirstRow", "LastRow", "FirstColumn", "LastColumn")):
        if all(k in region for k in keys):
            return tuple(int(region[k]) for k in keys)
    raise SchemaError("merged region lacks first_row/last_row/first_column/last_column", "merged_regions")


class _TreeBuilder:
    def __init__(self, texts, axis: Axis, offset: int, extent: int, data_rows=None):
        self.texts = texts
        self.axis = axis
        self.offset = offset
        self.extent = extent
        self.data_rows = data_rows
        self.self_rows: list[int] = []  # row headers that occupy their own data row

    def value(self, node: Mapping) -> str:
        r, c = node["row_index"], node["column_index"]
        try:
            return cell_text(self.texts[r][c]).strip()
        except (IndexError, TypeError):
            raise SchemaError(f"header node at ({r}, {c}) lies outside texts", "row_index") from None

    def own_index(self, node: Mapping) -> int:
        grid_index = node["row_index"] if self.axis is Axis.ROW else node["column_index"]
        return grid_index - self.offset

    def build(self, node: Mapping, where: str) -> HeaderNode:
        for key in ("row_index", "column_index"):
            _require(node, key, where)
        value = self.value(node)
        children = [self.build(c, f"{where}.children[{i}]")
                    for i, c in enumerate(node.get("children") or [])]
        own = self.own_index(node)
        if not children:
            if not 0 <= own < self.extent:
                raise SchemaError(f"{where}: leaf header {value!r} outside the data region", "children")
            return HeaderNode(value, own, own)
        children.sort(key=lambda n: n.span_start)
        start, end = children[0].span_start, children[-1].span_end
        if self.axis is Axis.ROW and 0 <= own < self.extent and not (start <= own <= end and
                                                                     _covered(children, own)):
            self.self_rows.append(own)
            children.append(HeaderNode(value, own, own))
            children.sort(key=lambda n: n.span_start)
            start, end = min(start, own), max(end, own)
        return HeaderNode(value, start, end, tuple(children))


def _covered(nodes: Sequence[HeaderNode], index: int) -> bool:
    for n in nodes:
        if n.span_start <= index <= n.span_end:
            return True if not n.children else _covered(n.children, index)
    return False


def _drop_rows(node: HeaderNode, drop: set[int], remap: dict[int, int]) -> HeaderNode | None:
    if not node.children:
        if node.span_start in drop:
            return None
        i = remap[node.span_start]
        return HeaderNode(node.value, i, i)
    kids = tuple(k for k in (_drop_rows(c, drop, remap) for c in node.children) if k is not None)
    if not kids:
        return None
    if len(kids) == 1 and kids[0].value == node.value and not kids[0].children:
        # self leaf that now stands alone collapses back into the header
        return kids[0]
    return HeaderNode(node.value, kids[0].span_start, kids[-1].span_end, kids)


def adapt_hitab_table(record: Mapping, table_id: str) -> SourceTable:
    where = f"hitab table {table_id}"
    texts = _require(record, "texts", where)
    if not isinstance(texts, list) or not texts or not all(isinstance(r, list) for r in texts):
        raise SchemaError(f"{where}: texts must be a non-empty list of rows", "texts")
    n_head_rows = int(_require(record, "top_header_rows_num", where))
    n_head_cols = int(_require(record, "left_header_columns_num", where))
    top_root = _require(record, "top_root", where)
    left_root = _require(record, "left_root", where)
    width = max(len(r) for r in texts)
    rows, cols = len(texts) - n_head_rows, width - n_head_cols
    if rows < 0 or cols < 0:
        raise SchemaError(f"{where}: header band larger than the grid", "top_header_rows_num")

    cells = {}
    for r in range(rows):
        row = texts[n_head_rows + r]
        for c in range(cols):
            j = n_head_cols + c
            if j < len(row):
                text = cell_text(row[j])
                if text != "":
                    cells[(r, c)] = text

    col_builder = _TreeBuilder(texts, Axis.COLUMN, n_head_cols, cols)
    row_builder = _TreeBuilder(texts, Axis.ROW, n_head_rows, rows)
    col_roots = [col_builder.build(n, f"{where}.top_root[{i}]")
                 for i, n in enumerate(top_root.get("children") or [])]
    row_roots = [row_builder.build(n, f"{where}.left_root[{i}]")
                 for i, n in enumerate(left_root.get("children") or [])]

    regions = []
    for region in record.get("merged_regions") or []:
        r0, r1, c0, c1 = _region_bounds(region)
        if r0 >= n_head_rows and c0 >= n_head_cols:
            regions.append((r0 - n_head_rows, r1 - n_head_rows, c0 - n_head_cols, c1 - n_head_cols))

    drop = {r for r in row_builder.self_rows if not any((r, c) in cells for c in range(cols))}
    if drop:
        keep = [r for r in range(rows) if r not in drop]
        remap = {old: new for new, old in enumerate(keep)}
        row_roots = [n for n in (_drop_rows(n, drop, remap) for n in row_roots) if n is not None]
        cells = {(remap[r], c): v for (r, c), v in cells.items()}
        kept_regions = []
        for r0, r1, c0, c1 in regions:
            inside = [remap[r] for r in range(r0, r1 + 1) if r in remap]
            if inside:
                kept_regions.append((inside[0], inside[-1], c0, c1))
        regions = kept_regions
        rows = len(keep)

    col_roots.sort(key=lambda n: n.span_start)
    row_roots.sort(key=lambda n: n.span_start)
    table = SourceTable(
        table_id=table_id,
        title=cell_text(record.get("title", "")),
        column_tree=HeaderTree.build(Axis.COLUMN, col_roots),
        row_tree=HeaderTree.build(Axis.ROW, row_roots),
        grid=CellGrid(rows, cols, cells, tuple(regions)),
        source_text=json.dumps(record, ensure_ascii=False),
    )
    report = validate_table(table)
    if report:
        raise IntegrityError(f"{where}: cannot be mapped faithfully: {report[0]}", report)
    return table


def adapt_hitab_sample(sample: Mapping, split: Split) -> QAPair:
    where = f"hitab sample {sample.get('id', '?')}"
    qa_id = cell_text(_require(sample, "id", where))
    question = _require(sample, "question", where)
    if not isinstance(question, str) or not question.strip():
        raise SchemaError(f"{where}: empty question", "question")
    answer = _require(sample, "answer", where)
    answers = answer if isinstance(answer, list) else [answer]
    if not answers:
        raise SchemaError(f"{where}: empty answer list", "answer")
    return QAPair(qa_id, cell_text(_require(sample, "table_id", where)), question,
                  tuple(cell_text(a) for a in answers), split)


def adapt_hitab(record: Mapping, samples: Sequence[Mapping] = (), split: Split | None = None,
                table_id: str | None = None) -> tuple[SourceTable, list[QAPair]]:
    """Map one release table plus its QA samples into canonical form.

    A sample may carry its split under ``"split"``; otherwise ``split`` applies.
    """
    table_id = table_id or cell_text(record.get("table_id") or record.get("id") or "")
    if not table_id:
        raise SchemaError("hitab table: no table id given", "table_id")
    table = adapt_hitab_table(record, table_id)
    pairs = []
    for s in samples:
        sp = Split.parse(s["split"]) if "split" in s else (split or Split.UNSPLIT)
        pair = adapt_hitab_sample({k: v for k, v in s.items() if k != "split"}, sp)
        if pair.table_id != table_id:
            raise IntegrityError(f"sample {pair.qa_id} belongs to table {pair.table_id}, not {table_id}")
        pairs.append(pair)
    return table, pairs


def _find(root: Path, *candidates: str) -> Path:
    for c in candidates:
        if (root / c).exists():
            return root / c
    raise FileNotFoundError(f"none of {candidates} under {root}")


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_hitab(root: str | os.PathLike) -> Dataset:
    root = Path(root)
    base = root / "data" if (root / "data").is_dir() and not (root / "tables").exists() else root
    table_dir = _find(base, "tables/raw", "raw")
    by_table: dict[str, list[tuple[dict, Split]]] = {}
    for split, name in SPLIT_FILES.items():
        path = base / name
        if not path.exists():
            log.warning("HiTab split file %s missing", path)
            continue
        for sample in _read_jsonl(path):
            by_table.setdefault(cell_text(sample.get("table_id")), []).append((sample, split))

    tables, pairs = {}, []
    for path in sorted(table_dir.glob("*.json")):
        table_id = path.stem
        record = json.loads(path.read_text(encoding="utf-8"))
        table = adapt_hitab_table(record, table_id)
        tables[table_id] = table
        for sample, split in by_table.get(table_id, []):
            pairs.append(adapt_hitab_sample(sample, split))
    missing = sorted(set(by_table) - set(tables))
    if missing:
        raise IntegrityError(f"{len(missing)} table id(s) referenced by samples have no table file, e.g. {missing[0]}")
    return Dataset("hitab", tables, tuple(pairs))
