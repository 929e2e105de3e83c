"""Code-assistant step: read tuples out of model text and pull the matching cells.

Selection is positional only. A data tuple is returned when its row falls in
the span of some selected row header and its column falls in the span of some
selected column header.
"""

from __future__ import annotations

import bisect
import logging
import re
from dataclasses import dataclass, field

from .reconstruct import DataTuple, HeaderTuple
from .table_model import Axis

log = logging.getLogger(__name__)

_INT = re.compile(r"\s*(\d+)\s*\Z")
_SIGNED = re.compile(r"\s*-\d+\s*\Z")
_FIELD_NAMES = {
    "header": ("level", "span start", "span end"),
    "data": ("row", "column"),
}


@dataclass
class TupleParse:
    tuples: list[HeaderTuple | DataTuple] = field(default_factory=list)
    rejects: list[tuple[str, str]] = field(default_factory=list)

    def headers(self, axis: Axis) -> list[HeaderTuple]:
        return [t for t in self.tuples if isinstance(t, HeaderTuple) and t.axis is axis]

    @property
    def data(self) -> list[DataTuple]:
        return [t for t in self.tuples if isinstance(t, DataTuple)]


def _find_close(text: str, start: int) -> int:
    """Index of the ')' closing the '(' at ``start``, or -1."""
    depth = 0
    in_quote = False
    i = start
    while i < len(text):
        ch = text[i]
        if in_quote:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_quote = False
        elif ch == '"':
            in_quote = True
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return -1


def _split_fields(content: str, maxsplit: int) -> list[str]:
    parts: list[str] = []
    buf: list[str] = []
    in_quote = False
    depth = 0
    i = 0
    while i < len(content):
        ch = content[i]
        if len(parts) == maxsplit:
            buf.append(content[i:])
            break
        if in_quote:
            buf.append(ch)
            if ch == "\\" and i + 1 < len(content):
                buf.append(content[i + 1])
                i += 1
            elif ch == '"':
                in_quote = False
        elif ch == '"':
            in_quote = True
            buf.append(ch)
        elif ch in "([":
            depth += 1
            buf.append(ch)
        elif ch in ")]":
            depth -= 1
            buf.append(ch)
        elif ch == "," and depth == 0:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
        i += 1
    parts.append("".join(buf))
    return parts


_UNESCAPE = re.compile(r"\\(.)", re.S)


def _unquote(raw: str) -> str:
    value = raw.strip()
    if len(value) >= 2 and value[0] == value[-1] == '"':
        body = value[1:-1]
        return _UNESCAPE.sub(lambda m: {"n": "\n", "r": "\r"}.get(m.group(1), m.group(1)), body)
    if len(value) >= 2 and value[0] == value[-1] == "'":
        return value[1:-1]
    return value


def _parse_candidate(content: str) -> tuple[HeaderTuple | DataTuple | None, str]:
    inner = content.strip()
    while inner.startswith("(") and inner.endswith(")") and _find_close(inner, 0) == len(inner) - 1:
        inner = inner[1:-1].strip()
    tag = inner.split(",", 1)[0].strip().strip("\"'").upper()
    if tag in ("T", "L"):
        parts = _split_fields(inner, 4)
        names = _FIELD_NAMES["header"]
    elif tag == "C":
        parts = _split_fields(inner, 3)
        names = _FIELD_NAMES["data"]
    else:
        return None, f"unknown tag {tag[:20]!r}" if tag else "empty tuple"
    if len(parts) < len(names) + 2:
        return None, f"expected {len(names) + 2} fields, got {len(parts)}"
    ints = []
    for name, raw in zip(names, parts[1:1 + len(names)]):
        m = _INT.match(raw)
        if not m:
            if _SIGNED.match(raw):
                return None, f"negative {name}"
            return None, f"non-integer {name} {raw.strip()[:20]!r}"
        ints.append(int(m.group(1)))
    value = _unquote(parts[-1])
    if tag == "C":
        return DataTuple(ints[0], ints[1], value), ""
    level, start, end = ints
    if start > end:
        return None, f"reversed span {start}-{end}"
    axis = Axis.COLUMN if tag == "T" else Axis.ROW
    return HeaderTuple(axis, level, start, end, value), ""


def parse_tuples(text: str) -> TupleParse:
    """Leniently extract every parenthesised tuple from free text.

    Each parenthesised fragment ends up either as a parsed tuple or as a
    ``(fragment, reason)`` reject.
    """
    result = TupleParse()
    i = 0
    while True:
        start = text.find("(", i)
        if start < 0:
            break
        end = _find_close(text, start)
        if end < 0:
            nxt = text.find("(", start + 1)
            fragment = text[start:nxt if nxt >= 0 else len(text)]
            result.rejects.append((fragment, "unterminated parenthesis"))
            i = start + 1
            continue
        fragment = text[start:end + 1]
        parsed, reason = _parse_candidate(text[start + 1:end])
        if parsed is None:
            result.rejects.append((fragment, reason))
        else:
            result.tuples.append(parsed)
        i = end + 1
    return result


def _merged_spans(headers: list[HeaderTuple]) -> tuple[list[int], list[int]]:
    spans = sorted((h.span_start, h.span_end) for h in headers)
    starts: list[int] = []
    ends: list[int] = []
    for s, e in spans:
        if starts and s <= ends[-1] + 1:
            ends[-1] = max(ends[-1], e)
        else:
            starts.append(s)
            ends.append(e)
    return starts, ends


def _inside(index: int, starts: list[int], ends: list[int]) -> bool:
    k = bisect.bisect_right(starts, index) - 1
    return k >= 0 and index <= ends[k]


def select_cells(row_headers, col_headers, data) -> list[DataTuple]:
    """Data tuples whose (row, col) falls under a selected row header and column header.

    Headers on the wrong axis are dropped. Output is row-major and duplicate-free.
    """
    rows = [h for h in row_headers if h.axis is Axis.ROW]
    cols = [h for h in col_headers if h.axis is Axis.COLUMN]
    dropped = len(row_headers) - len(rows) + len(col_headers) - len(cols)
    if dropped:
        log.info("select_cells: dropped %d header tuple(s) on the wrong axis", dropped)
    if not rows or not cols:
        return []
    row_starts, row_ends = _merged_spans(rows)
    col_starts, col_ends = _merged_spans(cols)
    picked = {
        t for t in data
        if _inside(t.row, row_starts, row_ends) and _inside(t.col, col_starts, col_ends)
    }
    return sorted(picked, key=lambda t: (t.row, t.col, t.value))
