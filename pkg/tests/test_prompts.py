import hashlib
import random

import pytest
from hypothesis import given, settings, strategies as st

from ctqa import prompts
from ctqa.errors import ExtraSlot, MissingSlot, SlotInjection
from ctqa.prompts import (DECLARED_SLOTS, Route, TemplateId, TokenBudget, fill, load_template, route,
                          route_for_count)
from ctqa.reconstruct import reconstruct, serialize_table
from ctqa.tokens import ByteFallbackCounter
from latex_text import expected_templates
from tables import compensation_table

COUNTER = ByteFallbackCounter()


def bindings_for(template_id, question="how much was the total compensation cost in 2018?"):
    title, cols, rows, cells = serialize_table(reconstruct(compensation_table()))
    every = {prompts.TITLE: title, prompts.COLUMN_HEADER: cols, prompts.ROW_HEADER: rows,
             prompts.NON_HEADER: cells, prompts.QUESTION: question, prompts.ANSWER_1: "compensation cost, 2018",
             prompts.ANSWER_2: "1. Column header: (T, 1, 0, 0, 2018)", prompts.CODE_OUTPUT: "(C, 3, 0, 61)",
             prompts.ORIGINAL_TABLE: '{"texts": [["a"]]}'}
    return {k: every[k] for k in DECLARED_SLOTS[template_id]}


@pytest.mark.parametrize("template_id", list(TemplateId))
def test_asset_matches_rendered_source(template_id):
    assert load_template(template_id).body == expected_templates()[template_id.value]


@pytest.mark.parametrize("template_id", list(TemplateId))
def test_declared_slots_match_body(template_id):
    assert load_template(template_id).slots == DECLARED_SLOTS[template_id]


def test_checksums_pinned():
    for t in TemplateId:
        body = load_template(t).body.encode("utf-8")
        assert hashlib.sha256(body).hexdigest() == prompts.TEMPLATE_SHA256[t]


def test_single_turn_keeps_source_spelling_of_question_slot():
    assert "[QUSTION_HERE]" in load_template(TemplateId.SINGLE_TURN).body


@pytest.mark.parametrize("template_id", list(TemplateId))
def test_fill_leaves_no_slots(template_id):
    filled = fill(template_id, bindings_for(template_id), COUNTER)
    assert filled.unfilled_slots == ()
    for slot in prompts.ALL_SLOTS | set(prompts.SLOT_ALIASES):
        assert slot not in filled.text
    assert filled.token_count == COUNTER.count(filled.text)


def test_fill_is_substitution_only():
    b = bindings_for(TemplateId.SINGLE_TURN)
    filled = fill(TemplateId.SINGLE_TURN, b, COUNTER).text
    body = load_template(TemplateId.SINGLE_TURN).body
    expected = (body.replace("[TABLE_TITLE_HERE]", f"[{b[prompts.TITLE]}]")
                .replace("[TABLE_COLUMN_HEADER_HERE]", f"[{b[prompts.COLUMN_HEADER]}]")
                .replace("[TABLE_ROW_HEADER_HERE]", f"[{b[prompts.ROW_HEADER]}]")
                .replace("[TABLE_NON_HEADER_HERE]", f"[{b[prompts.NON_HEADER]}]")
                .replace("[QUSTION_HERE]", b[prompts.QUESTION]))
    assert filled == expected
    assert "Title: [tab-102]" in filled


def test_multi_turn_1_ending():
    q = "how much was the total compensation cost in 2018?"
    text = fill(TemplateId.MULTI_TURN_1, {prompts.QUESTION: q}, COUNTER).text
    assert text.endswith(f"Extract the key words in the question.\nQ: {q}\nA:")


def test_missing_and_extra_slots():
    b = bindings_for(TemplateId.SINGLE_TURN)
    del b[prompts.NON_HEADER]
    with pytest.raises(MissingSlot) as info:
        fill(TemplateId.SINGLE_TURN, b, COUNTER)
    assert info.value.slots == [prompts.NON_HEADER]
    with pytest.raises(ExtraSlot):
        fill(TemplateId.MULTI_TURN_1, {prompts.QUESTION: "q", prompts.TITLE: "t"}, COUNTER)


def test_alias_binding_accepted():
    b = bindings_for(TemplateId.SINGLE_TURN)
    b["QUSTION_HERE"] = b.pop(prompts.QUESTION)
    assert fill(TemplateId.SINGLE_TURN, b, COUNTER).unfilled_slots == ()


@pytest.mark.parametrize("value", ["[QUESTION_HERE]", "see TABLE_TITLE_HERE", "QUSTION_HERE"])
def test_slot_injection_rejected(value):
    with pytest.raises(SlotInjection):
        fill(TemplateId.MULTI_TURN_1, {prompts.QUESTION: value}, COUNTER)


@settings(max_examples=200, deadline=None)
@given(question=st.text(min_size=1, max_size=60))
def test_no_binding_leaves_a_marker(question):
    try:
        filled = fill(TemplateId.SIMPLE, {prompts.QUESTION: question, prompts.ORIGINAL_TABLE: question}, COUNTER)
    except SlotInjection:
        return
    assert filled.unfilled_slots == ()


def test_budget_validation():
    assert TokenBudget().max_prompt_tokens == 3585
    for bad in [(4097, 0), (4097, 4097), (100, 200)]:
        with pytest.raises(ValueError):
            TokenBudget(*bad)


@pytest.mark.parametrize("count,expected", [(1000, Route.SINGLE), (3585, Route.SINGLE),
                                            (3586, Route.MULTI), (4000, Route.MULTI)])
def test_route_boundary(count, expected):
    assert route_for_count(count, TokenBudget(4097, 512)) is expected
    assert route(prompts.FilledPrompt(TemplateId.SINGLE_TURN, "", count), TokenBudget()) is expected


def test_route_monotone():
    rng = random.Random(11)
    counts = sorted(rng.randint(0, 10000) for _ in range(1000))
    routes = [route_for_count(c, TokenBudget()) for c in counts]
    first_multi = routes.index(Route.MULTI)
    assert all(r is Route.SINGLE for r in routes[:first_multi])
    assert all(r is Route.MULTI for r in routes[first_multi:])
