import random

from hypothesis import given, settings, strategies as st

from ctqa.reconstruct import DataTuple, HeaderTuple, reconstruct
from ctqa.retrieval import parse_tuples, select_cells
from ctqa.table_model import Axis
from retrieval_oracle import naive_select
from tables import club_table

L, T = Axis.ROW, Axis.COLUMN



def test_parse_single_header():
    p = parse_tuples("(L, 0, 6, 6, karlsruher sc)")
    assert p.tuples == [HeaderTuple(L, 0, 6, 6, "karlsruher sc")] and p.rejects == []


def test_parse_empty():
    p = parse_tuples("")
    assert p.tuples == [] and p.rejects == []


def test_parse_reject_and_accept():
    p = parse_tuples("(T, one, 0, 0, g) and (C, 7, 0, 416)")
    assert p.tuples == [DataTuple(7, 0, "416")]
    assert len(p.rejects) == 1
    fragment, reason = p.rejects[0]
    assert fragment == "(T, one, 0, 0, g)" and "level" in reason


def test_parse_lenient_forms():
    p = parse_tuples("1. Column header: (t, 1, 0, 0, 'g'), (L,0,6,6,\"karlsruher sc\") (X, 1) (C, 2, 1)")
    assert p.tuples == [HeaderTuple(T, 1, 0, 0, "g"), HeaderTuple(L, 0, 6, 6, "karlsruher sc")]
    assert len(p.rejects) == 2
    p = parse_tuples("(L, 0, 3, 1, x) (C, -1, 0, y) (C, 1, 2, value with, comma) (L, 0, 1")
    assert p.tuples == [DataTuple(1, 2, "value with, comma")]
    reasons = " | ".join(r for _, r in p.rejects)
    assert "reversed" in reasons and "negative" in reasons and "unterminated" in reasons


def test_select_example():
    data = [DataTuple(7, 0, "416"), DataTuple(6, 0, "12")]
    got = select_cells([HeaderTuple(L, 0, 6, 6, "k")], [HeaderTuple(T, 1, 0, 0, "g")], data)
    assert got == [DataTuple(6, 0, "12")]


def test_select_empty_and_full():
    rt = reconstruct(club_table())
    assert select_cells([], list(rt.column_tuples), rt.data_tuples) == []
    assert select_cells(list(rt.row_tuples), [], rt.data_tuples) == []
    assert select_cells(list(rt.row_tuples), list(rt.column_tuples), rt.data_tuples) == list(rt.data_tuples)


def test_wrong_axis_headers_are_dropped():
    rt = reconstruct(club_table())
    got = select_cells([HeaderTuple(T, 0, 0, 7, "x")], list(rt.column_tuples), rt.data_tuples)
    assert got == []


def _case(rng):
    rows, cols = rng.randint(0, 12), rng.randint(0, 12)
    data = [DataTuple(r, c, str(rng.randint(0, 9))) for r in range(rows) for c in range(cols)]
    rng.shuffle(data)
    data += rng.sample(data, min(len(data), rng.randint(0, 3)))  # duplicates

    def headers(axis, extent):
        kind = rng.random()
        if kind < 0.1 or extent == 0:
            return []
        if kind < 0.2:
            return [HeaderTuple(axis, 0, 0, extent - 1, "all")]
        out = []
        for _ in range(rng.randint(1, 4)):
            s = rng.randint(0, extent + 1)  # may run past the data region
            out.append(HeaderTuple(axis, rng.randint(0, 3), s, s + rng.randint(0, 3), "h"))
        if rng.random() < 0.2:
            out.append(HeaderTuple(T if axis is L else L, 0, 0, extent, "wrong"))
        return out

    return headers(L, rows), headers(T, cols), data


@settings(max_examples=1200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_select_matches_naive_oracle(seed):
    rows, cols, data = _case(random.Random(seed))
    assert select_cells(rows, cols, data) == naive_select(rows, cols, data)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_select_is_monotone(seed):
    rng = random.Random(seed)
    rows, cols, data = _case(rng)
    more_rows, more_cols, _ = _case(rng)
    small = set(select_cells(rows, cols, data))
    assert small <= set(select_cells(rows + more_rows, cols, data))
    assert small <= set(select_cells(rows, cols + more_cols, data))
