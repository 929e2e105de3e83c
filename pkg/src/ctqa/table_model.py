"""In-memory model of a hierarchical table.

A table is a data region (``CellGrid``) plus two header trees, one per axis.
Header spans and cell coordinates index the data region only and are 0-based;
header rows/columns of the rendered table are never counted.

Levels start at 0 for the top-level headers (children of the virtual root)
and grow by one per tree edge.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping


class Axis(Enum):
    COLUMN = "T"
    ROW = "L"

    @property
    def tag(self) -> str:
        return self.value


@dataclass(frozen=True)
class HeaderNode:
    value: str
    span_start: int
    span_end: int
    children: tuple["HeaderNode", ...] = ()
    level: int = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterator["HeaderNode"]:
        """Pre-order traversal including this node."""
        yield self
        for child in self.children:
            yield from child.walk()


def header(value: str, start: int, end: int | None = None, children=()) -> HeaderNode:
    """Convenience constructor; levels are assigned when the tree is built."""
    return HeaderNode(str(value), start, start if end is None else end, tuple(children))


def _relevel(node: HeaderNode, level: int) -> HeaderNode:
    kids = tuple(_relevel(c, level + 1) for c in node.children)
    return dataclasses.replace(node, level=level, children=kids)


@dataclass(frozen=True)
class HeaderTree:
    axis: Axis
    roots: tuple[HeaderNode, ...] = ()

    @classmethod
    def build(cls, axis: Axis, roots) -> "HeaderTree":
        """Build a tree, assigning levels from depth (top-level headers get 0)."""
        return cls(axis, tuple(_relevel(r, 0) for r in roots))

    def nodes(self) -> Iterator[HeaderNode]:
        for root in self.roots:
            yield from root.walk()

    def node_count(self) -> int:
        return sum(1 for _ in self.nodes())

    def depth(self) -> int:
        return max((n.level + 1 for n in self.nodes()), default=0)


Region = tuple[int, int, int, int]  # row_start, row_end, col_start, col_end (inclusive)


@dataclass(frozen=True)
class CellGrid:
    rows: int
    cols: int
    cells: Mapping[tuple[int, int], str] = field(default_factory=dict)
    merged_regions: tuple[Region, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cells", dict(self.cells))
        object.__setattr__(self, "merged_regions", tuple(tuple(r) for r in self.merged_regions))

    def __hash__(self):
        return hash((self.rows, self.cols, tuple(sorted(self.cells.items())), self.merged_regions))

    def region_at(self, row: int, col: int) -> Region | None:
        for region in self.merged_regions:
            r0, r1, c0, c1 = region
            if r0 <= row <= r1 and c0 <= col <= c1:
                return region
        return None

    def value(self, row: int, col: int) -> str:
        """Resolved cell text; coordinates inside a merged region take the region's value."""
        region = self.region_at(row, col)
        if region is not None:
            return _region_value(self.cells, region)
        return self.cells.get((row, col), "")


def _region_value(cells: Mapping[tuple[int, int], str], region: Region) -> str:
    r0, r1, c0, c1 = region
    if (r0, c0) in cells:
        return cells[(r0, c0)]
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            if (r, c) in cells:
                return cells[(r, c)]
    return ""


@dataclass(frozen=True)
class SourceTable:
    table_id: str
    title: str
    column_tree: HeaderTree
    row_tree: HeaderTree
    grid: CellGrid
    # Release-format text of the table (e.g. the dataset's JSON record), used by
    # the simple-prompt mode and token statistics. Not part of table identity.
    source_text: str = field(default="", compare=False, repr=False)


# --------------------------------------------------------------------------
# validation


class ViolationKind(Enum):
    PARENT = "parent"
    LEVEL = "level"
    SPAN = "span"
    NESTING = "nesting"
    LEAF = "leaf"
    SIBLINGS = "siblings"
    COVERAGE = "coverage"
    OVERLAP = "overlap"
    RANGE = "range"
    MERGE = "merge"
    AXIS = "axis"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    location: str
    message: str

    def __str__(self):
        return f"[{self.kind.value}] {self.location}: {self.message}"


class ValidationReport(list):
    """List of ``Violation``; empty means valid."""

    @property
    def ok(self) -> bool:
        return not self

    def kinds(self) -> list[ViolationKind]:
        return [v.kind for v in self]


def _node_label(axis: Axis, path: tuple[int, ...], node: HeaderNode) -> str:
    idx = ".".join(str(i) for i in path)
    return f"{axis.name.lower()} header {idx} {node.value!r}"


def _check_tree(tree: HeaderTree, expected_axis: Axis, extent: int, report: ValidationReport) -> None:
    axis_name = expected_axis.name.lower()
    if tree.axis is not expected_axis:
        report.append(Violation(ViolationKind.AXIS, f"{axis_name} tree",
                                f"tree declares axis {tree.axis.name}"))

    seen: dict[int, str] = {}
    leaves: list[tuple[HeaderNode, str]] = []

    def visit(node: HeaderNode, path: tuple[int, ...], expected_level: int, parent: HeaderNode | None):
        where = _node_label(expected_axis, path, node)
        if id(node) in seen:
            report.append(Violation(ViolationKind.PARENT, where,
                                    f"node also reachable as {seen[id(node)]}; every header needs a unique parent"))
            return
        seen[id(node)] = where
        if node.level != expected_level:
            report.append(Violation(ViolationKind.LEVEL, where,
                                    f"level {node.level}, expected {expected_level}"))
        if node.span_start > node.span_end:
            report.append(Violation(ViolationKind.SPAN, where,
                                    f"span {node.span_start}-{node.span_end} is reversed"))
        if parent is not None and not (parent.span_start <= node.span_start
                                       and node.span_end <= parent.span_end):
            report.append(Violation(ViolationKind.NESTING, where,
                                    f"span {node.span_start}-{node.span_end} escapes parent span "
                                    f"{parent.span_start}-{parent.span_end}"))
        if node.is_leaf:
            if node.span_start != node.span_end:
                report.append(Violation(ViolationKind.LEAF, where,
                                        f"leaf spans {node.span_start}-{node.span_end}; leaves must cover one index"))
            leaves.append((node, where))
        prev = None
        for i, child in enumerate(node.children):
            if prev is not None and not prev.span_end < child.span_start:
                report.append(Violation(ViolationKind.SIBLINGS, _node_label(expected_axis, path + (i,), child),
                                        f"span {child.span_start}-{child.span_end} not after sibling "
                                        f"span {prev.span_start}-{prev.span_end}"))
            prev = child
            visit(child, path + (i,), expected_level + 1, node)

    prev_root = None
    for i, root in enumerate(tree.roots):
        if prev_root is not None and not prev_root.span_end < root.span_start:
            report.append(Violation(ViolationKind.SIBLINGS, _node_label(expected_axis, (i,), root),
                                    f"span {root.span_start}-{root.span_end} not after sibling "
                                    f"span {prev_root.span_start}-{prev_root.span_end}"))
        prev_root = root
        visit(root, (i,), 0, None)

    # leaf coverage of [0, extent-1]
    hits = [0] * max(extent, 0)
    for node, where in leaves:
        lo, hi = min(node.span_start, node.span_end), max(node.span_start, node.span_end)
        if lo < 0 or hi >= extent:
            report.append(Violation(ViolationKind.RANGE, where,
                                    f"span {node.span_start}-{node.span_end} outside {axis_name} extent 0-{extent - 1}"))
        for i in range(max(lo, 0), min(hi, extent - 1) + 1):
            hits[i] += 1
    for start, end in _runs(i for i, h in enumerate(hits) if h == 0):
        names = f"{axis_name} {start}" if start == end else f"{axis_name}s {start}-{end}"
        report.append(Violation(ViolationKind.COVERAGE, f"{axis_name} tree",
                                f"no leaf header covers {names}"))
    for start, end in _runs(i for i, h in enumerate(hits) if h > 1):
        names = f"{axis_name} {start}" if start == end else f"{axis_name}s {start}-{end}"
        report.append(Violation(ViolationKind.OVERLAP, f"{axis_name} tree",
                                f"several leaf headers cover {names}"))


def _runs(indices) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    for i in indices:
        if runs and runs[-1][1] == i - 1:
            runs[-1] = (runs[-1][0], i)
        else:
            runs.append((i, i))
    return runs


def _check_grid(grid: CellGrid, report: ValidationReport) -> None:
    if grid.rows < 0 or grid.cols < 0:
        report.append(Violation(ViolationKind.RANGE, "grid", f"negative extent {grid.rows}x{grid.cols}"))
    for (r, c) in grid.cells:
        if not (0 <= r < grid.rows and 0 <= c < grid.cols):
            report.append(Violation(ViolationKind.RANGE, f"cell ({r}, {c})",
                                    f"outside grid {grid.rows}x{grid.cols}"))
    regions = list(grid.merged_regions)
    for i, region in enumerate(regions):
        if len(region) != 4:
            report.append(Violation(ViolationKind.MERGE, f"merged region {i}", f"expected 4 bounds, got {region!r}"))
            continue
        r0, r1, c0, c1 = region
        where = f"merged region {i} rows {r0}-{r1} cols {c0}-{c1}"
        if r0 > r1 or c0 > c1:
            report.append(Violation(ViolationKind.MERGE, where, "reversed bounds"))
            continue
        if r0 < 0 or c0 < 0 or r1 >= grid.rows or c1 >= grid.cols:
            report.append(Violation(ViolationKind.RANGE, where, f"outside grid {grid.rows}x{grid.cols}"))
        for j in range(i):
            other = regions[j]
            if len(other) == 4 and not (r1 < other[0] or other[1] < r0 or c1 < other[2] or other[3] < c0):
                report.append(Violation(ViolationKind.MERGE, where, f"overlaps merged region {j}"))
        values = {grid.cells[(r, c)] for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)
                  if (r, c) in grid.cells}
        if len(values) > 1:
            report.append(Violation(ViolationKind.MERGE, where,
                                    f"covered cells disagree: {sorted(values)!r}"))


def validate_table(table: SourceTable) -> ValidationReport:
    """Collect every invariant violation of ``table``; never raises on malformed input."""
    report = ValidationReport()
    _check_grid(table.grid, report)
    _check_tree(table.column_tree, Axis.COLUMN, table.grid.cols, report)
    _check_tree(table.row_tree, Axis.ROW, table.grid.rows, report)
    return report


def header_leaves(tree: HeaderTree) -> list[HeaderNode]:
    """Leaf headers ordered by span (for a valid tree, one per axis index)."""
    leaves = [n for n in tree.nodes() if n.is_leaf]
    return sorted(leaves, key=lambda n: (n.span_start, n.span_end))
