"""Tuple encoding of hierarchical tables.

Header cells become five-element tuples ``(T|L, level, start, end, value)``
and data cells four-element tuples ``(C, row, col, value)``. The textual form
produced here is the grammar that prompts carry and that
:func:`ctqa.retrieval.parse_tuples` reads back.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import IntegrityError
from .table_model import Axis, HeaderTree, SourceTable, validate_table


@dataclass(frozen=True)
class HeaderTuple:
    axis: Axis
    level: int
    span_start: int
    span_end: int
    value: str

    def covers(self, index: int) -> bool:
        return self.span_start <= index <= self.span_end


@dataclass(frozen=True)
class DataTuple:
    row: int
    col: int
    value: str


@dataclass(frozen=True)
class ReconstructedTable:
    title: str
    column_tuples: tuple[HeaderTuple, ...]
    row_tuples: tuple[HeaderTuple, ...]
    data_tuples: tuple[DataTuple, ...]


def _header_tuples(tree: HeaderTree) -> tuple[HeaderTuple, ...]:
    tuples = [HeaderTuple(tree.axis, n.level, n.span_start, n.span_end, n.value) for n in tree.nodes()]
    tuples.sort(key=lambda t: (t.level, t.span_start))
    return tuple(tuples)


def reconstruct(table: SourceTable) -> ReconstructedTable:
    report = validate_table(table)
    if report:
        raise IntegrityError(f"table {table.table_id!r} is invalid: {report[0]}", report)
    grid = table.grid
    data = tuple(DataTuple(r, c, grid.value(r, c)) for r in range(grid.rows) for c in range(grid.cols))
    return ReconstructedTable(
        title=table.title,
        column_tuples=_header_tuples(table.column_tree),
        row_tuples=_header_tuples(table.row_tree),
        data_tuples=data,
    )


# Characters that would confuse the tuple scanner (comma, parentheses, quote)
# or the "Label: value" answer-line scanner (colon).
_NEEDS_QUOTES = re.compile(r'[,()":\\\n\r]')


def format_value(value: str) -> str:
    if value == "" or value != value.strip() or _NEEDS_QUOTES.search(value):
        escaped = (value.replace("\\", "\\\\").replace('"', '\\"')
                   .replace("\n", "\\n").replace("\r", "\\r"))
        return f'"{escaped}"'
    return value


def serialize_tuple(t: HeaderTuple | DataTuple) -> str:
    if isinstance(t, HeaderTuple):
        return f"({t.axis.tag}, {t.level}, {t.span_start}, {t.span_end}, {format_value(t.value)})"
    return f"(C, {t.row}, {t.col}, {format_value(t.value)})"


def serialize_tuples(tuples) -> str:
    return ", ".join(serialize_tuple(t) for t in tuples)


@dataclass(frozen=True)
class SerializedTable:
    title: str
    column_header: str
    row_header: str
    non_header: str

    def __iter__(self):
        return iter((self.title, self.column_header, self.row_header, self.non_header))


def serialize_table(rt: ReconstructedTable) -> SerializedTable:
    return SerializedTable(
        title=rt.title,
        column_header=serialize_tuples(rt.column_tuples),
        row_header=serialize_tuples(rt.row_tuples),
        non_header=serialize_tuples(rt.data_tuples),
    )
