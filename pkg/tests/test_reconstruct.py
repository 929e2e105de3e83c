import random

import pytest
from hypothesis import given, settings, strategies as st

from ctqa.errors import IntegrityError
from ctqa.reconstruct import (DataTuple, HeaderTuple, format_value, reconstruct, serialize_table,
                              serialize_tuple)
from ctqa.retrieval import parse_tuples
from ctqa.table_model import Axis, CellGrid, HeaderTree, SourceTable, header, header_leaves
from tables import club_table, compensation_table, random_table, single_g_table


def test_compensation_row_header_tuple():
    rt = reconstruct(compensation_table())
    assert serialize_tuple(rt.row_tuples[0]) == '(L, 0, 0, 3, "Compensation cost:")'


def test_g_leaf_tuple_in_one_by_one_table():
    rt = reconstruct(single_g_table())
    assert "(T, 1, 0, 0, g)" in [serialize_tuple(t) for t in rt.column_tuples]


def test_club_table_tuples():
    rt = reconstruct(club_table())
    assert "(L, 0, 6, 6, karlsruher sc)" in [serialize_tuple(t) for t in rt.row_tuples]
    assert "(C, 7, 0, 416)" in [serialize_tuple(t) for t in rt.data_tuples]


def test_serialize_examples():
    assert serialize_tuple(HeaderTuple(Axis.ROW, 0, 6, 6, "karlsruher sc")) == "(L, 0, 6, 6, karlsruher sc)"
    assert serialize_tuple(DataTuple(7, 0, "416")) == "(C, 7, 0, 416)"
    assert serialize_tuple(HeaderTuple(Axis.COLUMN, 1, 0, 0, "g")) == "(T, 1, 0, 0, g)"


@pytest.mark.parametrize("value,expected", [
    ("plain", "plain"),
    ("", '""'),
    (" pad", '" pad"'),
    ("a, b", '"a, b"'),
    ("x (y)", '"x (y)"'),
    ('say "hi"', r'"say \"hi\""'),
    ("back\\slash", r'"back\\slash"'),
    ("two\nlines", r'"two\nlines"'),
    ("Compensation cost:", '"Compensation cost:"'),
    ("57.5%", "57.5%"),
])
def test_quoting_rule(value, expected):
    assert format_value(value) == expected


def test_column_block_starts_with_parent():
    _, cols, _, _ = serialize_table(reconstruct(compensation_table()))
    assert cols == ('(T, 0, 0, 2, "Year ended December 31,"), (T, 1, 0, 0, 2018), '
                    '(T, 1, 1, 1, 2017), (T, 1, 2, 2, 2016)')


def test_empty_data_region():
    t = SourceTable("e", "", HeaderTree.build(Axis.COLUMN, []), HeaderTree.build(Axis.ROW, []), CellGrid(0, 0))
    assert serialize_table(reconstruct(t)).non_header == ""


def test_invalid_table_raises():
    t = SourceTable("bad", "", HeaderTree.build(Axis.COLUMN, [header("a", 0)]),
                    HeaderTree.build(Axis.ROW, []), CellGrid(1, 1))
    with pytest.raises(IntegrityError) as info:
        reconstruct(t)
    assert info.value.violations


def _census_oracle(table):
    """Expected value for each coordinate, computed straight from the grid description."""
    g = table.grid
    expected = {(r, c): g.cells.get((r, c), "") for r in range(g.rows) for c in range(g.cols)}
    for r0, r1, c0, c1 in g.merged_regions:
        anchor = g.cells.get((r0, c0), "")
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                expected[(r, c)] = anchor
    return expected


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_census_and_span_faithfulness(seed):
    table = random_table(random.Random(seed), 6, 4, merged=2)
    rt = reconstruct(table)
    coords = [(t.row, t.col) for t in rt.data_tuples]
    assert sorted(coords) == coords and len(set(coords)) == len(coords) == 24
    assert {(t.row, t.col): t.value for t in rt.data_tuples} == _census_oracle(table)
    assert len(rt.column_tuples) == table.column_tree.node_count()
    assert len(rt.row_tuples) == table.row_tree.node_count()
    node_spans = sorted((n.level, n.span_start, n.span_end, n.value) for n in table.column_tree.nodes())
    assert sorted((t.level, t.span_start, t.span_end, t.value) for t in rt.column_tuples) == node_spans
    keys = [(t.level, t.span_start) for t in rt.row_tuples]
    assert keys == sorted(keys)
    row_leaves, col_leaves = header_leaves(table.row_tree), header_leaves(table.column_tree)
    for t in rt.data_tuples:
        assert any(n.span_start <= t.row <= n.span_end for n in row_leaves)
        assert any(n.span_start <= t.col <= n.span_end for n in col_leaves)


@settings(max_examples=300, deadline=None)
@given(value=st.text(max_size=20), level=st.integers(0, 9), a=st.integers(0, 50), w=st.integers(0, 5),
       axis=st.sampled_from(list(Axis)))
def test_serialize_parse_round_trip(value, level, a, w, axis):
    h = HeaderTuple(axis, level, a, a + w, value)
    d = DataTuple(a, w, value)
    assert parse_tuples(serialize_tuple(h)).tuples == [h]
    assert parse_tuples(serialize_tuple(d)).tuples == [d]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_blocks_round_trip_through_parser(seed):
    rt = reconstruct(random_table(random.Random(seed), merged=1))
    s = serialize_table(rt)
    assert parse_tuples(s.column_header).tuples == list(rt.column_tuples)
    assert parse_tuples(s.row_header).tuples == list(rt.row_tuples)
    assert parse_tuples(s.non_header).tuples == list(rt.data_tuples)
