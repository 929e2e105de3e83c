"""Prompt templates, slot filling and single/multi-turn routing.

Template bodies live in ``templates/*.txt`` and mark each slot as
``[SLOT_NAME]``. How a binding replaces the marker depends on the slot:

* table blocks (title, header and non-header tuples, code output) are written
  inside the brackets, giving e.g. ``Title: [tab-102]``;
* free text (question, earlier model answers, the original-format table)
  replaces the whole marker, brackets included.

The single-turn asset spells its question slot ``QUSTION_HERE``; callers
always bind ``QUESTION_HERE``.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .errors import ExtraSlot, MissingSlot, SlotInjection
from .tokens import TokenCounter, get_counter


class TemplateId(Enum):
    SINGLE_TURN = "single_turn"
    MULTI_TURN_1 = "multi_turn_1"
    MULTI_TURN_2 = "multi_turn_2"
    MULTI_TURN_3 = "multi_turn_3"
    SIMPLE = "simple"


TITLE = "TABLE_TITLE_HERE"
COLUMN_HEADER = "TABLE_COLUMN_HEADER_HERE"
ROW_HEADER = "TABLE_ROW_HEADER_HERE"
NON_HEADER = "TABLE_NON_HEADER_HERE"
QUESTION = "QUESTION_HERE"
ANSWER_1 = "ANSWER_OF_TURN_1"
ANSWER_2 = "ANSWER_OF_TURN_2"
CODE_OUTPUT = "OUTPUT_OF_CODE"
ORIGINAL_TABLE = "ORIGINAL_TABLE"

SLOT_ALIASES = {"QUSTION_HERE": QUESTION}
ALL_SLOTS = frozenset({TITLE, COLUMN_HEADER, ROW_HEADER, NON_HEADER, QUESTION,
                       ANSWER_1, ANSWER_2, CODE_OUTPUT, ORIGINAL_TABLE})
BRACKETED_SLOTS = frozenset({TITLE, COLUMN_HEADER, ROW_HEADER, NON_HEADER, CODE_OUTPUT})

DECLARED_SLOTS: dict[TemplateId, frozenset[str]] = {
    TemplateId.SINGLE_TURN: frozenset({TITLE, COLUMN_HEADER, ROW_HEADER, NON_HEADER, QUESTION}),
    TemplateId.MULTI_TURN_1: frozenset({QUESTION}),
    TemplateId.MULTI_TURN_2: frozenset({QUESTION, ANSWER_1, TITLE, COLUMN_HEADER, ROW_HEADER}),
    TemplateId.MULTI_TURN_3: frozenset({ANSWER_2, CODE_OUTPUT, COLUMN_HEADER, ROW_HEADER}),
    TemplateId.SIMPLE: frozenset({ORIGINAL_TABLE, QUESTION}),
}

TEMPLATE_SHA256 = {
    TemplateId.SINGLE_TURN: "79eaa4ca2d707da9829639c3afad29ff246275305277311e54b2762767b068a6",
    TemplateId.MULTI_TURN_1: "1f97f1aa2078e9418e2296e008b73e8f4356d9f37f91961d9464001997269ed8",
    TemplateId.MULTI_TURN_2: "ffa80ac1ce62977204da429d2243b3d5bb41d07a6402c8cf92a5699b6b00f5b8",
    TemplateId.MULTI_TURN_3: "5c551e8d1cc70da37ae3111d5f6db704e690d900370055e4d4d2e582cc3c0651",
    TemplateId.SIMPLE: "7c9a2b2edfd0000bf33b58e7e8c409c0eb41e123aeda796194b9c40986ef33d6",
}

_MARKER = re.compile(r"\[([A-Z][A-Z0-9_]*)\]")
_SLOT_NAME = re.compile("|".join(sorted(ALL_SLOTS | set(SLOT_ALIASES), key=len, reverse=True)))


@dataclass(frozen=True)
class PromptTemplate:
    template_id: TemplateId
    body: str

    @property
    def slots(self) -> frozenset[str]:
        return frozenset(SLOT_ALIASES.get(m.group(1), m.group(1))
                         for m in _MARKER.finditer(self.body) if _is_slot(m.group(1)))


def _is_slot(name: str) -> bool:
    return name in ALL_SLOTS or name in SLOT_ALIASES


@lru_cache(maxsize=None)
def load_template(template_id: TemplateId) -> PromptTemplate:
    raw = resources.files("ctqa").joinpath("templates", f"{template_id.value}.txt").read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != TEMPLATE_SHA256[template_id]:
        raise RuntimeError(f"template asset {template_id.value} checksum mismatch ({digest})")
    return PromptTemplate(template_id, raw.decode("utf-8"))


@dataclass(frozen=True)
class FilledPrompt:
    template_id: TemplateId
    text: str
    token_count: int
    unfilled_slots: tuple[str, ...] = ()


def fill(template_id: TemplateId, bindings: Mapping[str, str],
         counter: TokenCounter | None = None) -> FilledPrompt:
    """Substitute ``bindings`` into the template; nothing else in the text changes."""
    template = load_template(template_id)
    keys = {SLOT_ALIASES.get(k, k): v for k, v in bindings.items()}
    declared = DECLARED_SLOTS[template_id]
    missing = declared - keys.keys()
    if missing:
        raise MissingSlot(missing)
    extra = keys.keys() - declared
    if extra:
        raise ExtraSlot(extra)
    for slot, value in keys.items():
        hit = _SLOT_NAME.search(value)
        if hit:
            raise SlotInjection(slot, hit.group(0))

    def substitute(m: re.Match) -> str:
        name = SLOT_ALIASES.get(m.group(1), m.group(1))
        if name not in declared:
            return m.group(0)
        value = keys[name]
        return f"[{value}]" if name in BRACKETED_SLOTS else value

    text = _MARKER.sub(substitute, template.body)
    leftover = tuple(sorted({SLOT_ALIASES.get(m.group(1), m.group(1))
                             for m in _MARKER.finditer(text) if _is_slot(m.group(1))}))
    counter = counter or get_counter()
    return FilledPrompt(template_id, text, counter.count(text), leftover)


def count_tokens(text: str, counter: TokenCounter | None = None) -> int:
    return (counter or get_counter()).count(text)


@dataclass(frozen=True)
class TokenBudget:
    context_limit: int = 4097
    generation_reserve: int = 512

    def __post_init__(self):
        if not 0 < self.generation_reserve < self.context_limit:
            raise ValueError(
                f"need 0 < generation_reserve < context_limit, got "
                f"{self.generation_reserve} / {self.context_limit}")

    @property
    def max_prompt_tokens(self) -> int:
        return self.context_limit - self.generation_reserve


class Route(Enum):
    SINGLE = "SINGLE"
    MULTI = "MULTI"
    SIMPLE = "SIMPLE"


def route_for_count(token_count: int, budget: TokenBudget) -> Route:
    if token_count + budget.generation_reserve <= budget.context_limit:
        return Route.SINGLE
    return Route.MULTI


def route(filled_single_turn: FilledPrompt, budget: TokenBudget) -> Route:
    """SINGLE when the prompt plus the generation reserve fits the context limit."""
    return route_for_count(filled_single_turn.token_count, budget)
