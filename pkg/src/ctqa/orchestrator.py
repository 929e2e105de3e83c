"""Per-question QA flow: reconstruct, route, prompt, parse.

Single-turn sends one prompt holding the whole tuple-encoded table. The
multi-turn scheme makes three model calls with a deterministic retrieval step
between the second and third:

1. extract keywords from the question;
2. pick header tuples given title, headers and the keywords;
3. (code) parse the picked headers and select the covered data tuples;
4. answer from the picked headers plus the selected data tuples.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum

from . import prompts
from .errors import ContextLengthExceeded, CtqaError, GatewayError, PromptError
from .gateway import CompletionRequest, Gateway
from .prompts import Route, TemplateId, TokenBudget
from .reconstruct import (DataTuple, HeaderTuple, ReconstructedTable, reconstruct,
                          serialize_table, serialize_tuples)
from .retrieval import parse_tuples, select_cells
from .table_model import Axis, SourceTable
from .tokens import TokenCounter, get_counter

log = logging.getLogger(__name__)


class Mode(Enum):
    AUTO = "auto"
    SINGLE_ONLY = "single_only"
    MULTI_ONLY = "multi_only"
    SIMPLE = "simple"


@dataclass
class StructuredAnswer:
    column_headers: list[HeaderTuple] = field(default_factory=list)
    row_headers: list[HeaderTuple] = field(default_factory=list)
    cells: list[DataTuple] = field(default_factory=list)
    operation: str = ""
    answer: str = ""
    idn: bool = False
    raw_text: str = ""
    notes: list[str] = field(default_factory=list)


@dataclass
class Prediction:
    qa_id: str
    route_taken: Route
    structured: StructuredAnswer | None = None
    transcript_ref: str = ""
    failure: str | None = None
    flags: list[str] = field(default_factory=list)
    code_output: list[DataTuple] | None = None
    detail: str = ""  # error message behind ``failure``

    @property
    def answer(self) -> str:
        return self.structured.answer if self.structured else ""

    @property
    def idn(self) -> bool:
        return bool(self.structured and self.structured.idn)

    def to_record(self) -> dict:
        s = self.structured
        return {
            "qa_id": self.qa_id,
            "route": self.route_taken.value,
            "column_headers": serialize_tuples(s.column_headers) if s else None,
            "row_headers": serialize_tuples(s.row_headers) if s else None,
            "cells": serialize_tuples(s.cells) if s else None,
            "operation": s.operation if s else None,
            "answer": s.answer if s else None,
            "idn": s.idn if s else False,
            "notes": list(s.notes) if s else [],
            "transcript_ref": self.transcript_ref,
            "failure": self.failure,
            "detail": self.detail,
            "flags": list(self.flags),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Prediction":
        structured = None
        if rec.get("failure") is None:
            structured = StructuredAnswer(
                column_headers=parse_tuples(rec.get("column_headers") or "").headers(Axis.COLUMN),
                row_headers=parse_tuples(rec.get("row_headers") or "").headers(Axis.ROW),
                cells=parse_tuples(rec.get("cells") or "").data,
                operation=rec.get("operation") or "",
                answer=rec.get("answer") or "",
                idn=bool(rec.get("idn")),
                notes=list(rec.get("notes") or []),
            )
        return cls(rec["qa_id"], Route(rec["route"]), structured, rec.get("transcript_ref", ""),
                   rec.get("failure"), list(rec.get("flags") or []), detail=rec.get("detail", ""))


# --------------------------------------------------------------------------
# answer parsing

_LABELS = {
    "column header": "column",
    "column headers": "column",
    "row header": "row",
    "row headers": "row",
    "cell": "cell",
    "cells": "cell",
    "non-header": "cell",
    "operation": "operation",
    "answer": "answer",
}
_LABEL_LINE = re.compile(
    r"^\s*(?:\d+\s*[.)]\s*)?(?:[-*]\s*)?(?:\*\*)?"
    r"(column headers?|row headers?|cells?|non-header|operation|answer)(?:\*\*)?\s*:(?:\*\*)?\s*(.*)$",
    re.IGNORECASE)
_IDN = re.compile(r"i\s+(?:don['’`]?t|do\s+not)\s+know", re.IGNORECASE)


def parse_structured_answer(text: str) -> StructuredAnswer:
    """Read the five labelled lines out of a model response.

    Labels are matched case-insensitively, with or without list numbering, in
    any order. Unlabelled lines continue the previous field. Without an
    ``Answer:`` line the whole response becomes the answer.
    """
    fields: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        m = _LABEL_LINE.match(line)
        if m:
            current = _LABELS[m.group(1).lower()]
            fields.setdefault(current, []).append(m.group(2).strip())
        elif current is not None and line.strip():
            fields[current].append(line.strip())

    out = StructuredAnswer(raw_text=text)
    joined = {k: "\n".join(v).strip() for k, v in fields.items()}
    out.column_headers = parse_tuples(joined.get("column", "")).headers(Axis.COLUMN)
    out.row_headers = parse_tuples(joined.get("row", "")).headers(Axis.ROW)
    out.cells = parse_tuples(joined.get("cell", "")).data
    out.operation = joined.get("operation", "")
    if "answer" in fields:
        out.answer = joined["answer"]
    else:
        out.answer = text.strip()
        out.notes.append("format violation: no 'Answer:' line")
    missing = [name for name in ("column", "row", "cell", "operation") if name not in fields]
    if missing and "answer" in fields:
        out.notes.append("missing field(s): " + ", ".join(missing))
    out.idn = bool(_IDN.search(out.answer))
    return out


# --------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineConfig:
    model_name: str = "text-davinci-003"
    max_generated_tokens: int = 512
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()
    budget: TokenBudget = field(default_factory=TokenBudget)
    mode: Mode = Mode.AUTO
    timeout_s: float = 120.0


class _Timeout(CtqaError):
    pass


class Pipeline:
    def __init__(self, gateway: Gateway, config: PipelineConfig | None = None,
                 counter: TokenCounter | None = None, clock=time.monotonic):
        self.gateway = gateway
        self.config = config or PipelineConfig()
        self.counter = counter or get_counter()
        self._clock = clock

    # -- helpers -------------------------------------------------------

    def _request(self, prompt: str) -> CompletionRequest:
        c = self.config
        return CompletionRequest(prompt, c.model_name, c.max_generated_tokens, c.temperature,
                                 tuple(c.stop_sequences))

    def _call(self, session, prompt: str, deadline: float) -> str:
        if self._clock() > deadline:
            raise _Timeout("question timed out")
        text = session.complete(self._request(prompt)).text
        if self._clock() > deadline:
            raise _Timeout("question timed out")
        return text

    def _fill(self, template_id: TemplateId, bindings) -> prompts.FilledPrompt:
        return prompts.fill(template_id, bindings, self.counter)

    def single_turn_prompt(self, rt: ReconstructedTable, question: str) -> prompts.FilledPrompt:
        title, cols, rows, cells = serialize_table(rt)
        return self._fill(TemplateId.SINGLE_TURN, {
            prompts.TITLE: title, prompts.COLUMN_HEADER: cols, prompts.ROW_HEADER: rows,
            prompts.NON_HEADER: cells, prompts.QUESTION: question})

    # -- entry point ---------------------------------------------------

    def answer(self, table: SourceTable, question: str, qa_id: str = "") -> Prediction:
        """Run the configured mode; AUTO routes on the single-turn prompt size."""
        qa_id = qa_id or table.table_id
        mode = self.config.mode
        if mode is Mode.SIMPLE:
            return self.answer_simple(table, question, qa_id)
        if mode is Mode.MULTI_ONLY:
            return self.answer_multi_turn(table, question, qa_id)
        if mode is Mode.SINGLE_ONLY:
            return self.answer_single_turn(table, question, qa_id, fallback=False)
        rt = reconstruct(table)
        filled = self.single_turn_prompt(rt, question)
        if prompts.route(filled, self.config.budget) is Route.SINGLE:
            return self.answer_single_turn(table, question, qa_id)
        return self.answer_multi_turn(table, question, qa_id)

    def _run(self, qa_id: str, route: Route, body) -> Prediction:
        pred = Prediction(qa_id, route, transcript_ref=self.gateway.transcript_ref(qa_id))
        deadline = self._clock() + self.config.timeout_s
        with self.gateway.session(qa_id) as session:
            try:
                body(session, deadline, pred)
            except _Timeout as exc:
                pred.failure, pred.detail = "timeout", str(exc)
            except GatewayError as exc:
                pred.failure = pred.failure or exc.tag
                pred.detail = str(exc)
                log.warning("%s: %s", qa_id, exc)
            except PromptError as exc:
                pred.failure, pred.detail = "prompt", str(exc)
                log.warning("%s: %s", qa_id, exc)
        if pred.failure:
            pred.structured = None
        return pred

    def answer_single_turn(self, table: SourceTable, question: str, qa_id: str = "",
                           fallback: bool = True) -> Prediction:
        qa_id = qa_id or table.table_id
        rt = reconstruct(table)
        filled = self.single_turn_prompt(rt, question)
        fell_back = False

        def body(session, deadline, pred):
            nonlocal fell_back
            try:
                text = self._call(session, filled.text, deadline)
            except ContextLengthExceeded:
                if not fallback:
                    raise
                fell_back = True
                pred.route_taken = Route.MULTI
                pred.flags.append("single-turn over length; fell back to multi-turn")
                self._multi_turn_body(rt, question, session, deadline, pred)
                return
            pred.structured = parse_structured_answer(text)

        return self._run(qa_id, Route.SINGLE, body)

    def answer_multi_turn(self, table: SourceTable, question: str, qa_id: str = "") -> Prediction:
        qa_id = qa_id or table.table_id
        rt = reconstruct(table)

        def body(session, deadline, pred):
            self._multi_turn_body(rt, question, session, deadline, pred)

        return self._run(qa_id, Route.MULTI, body)

    def _multi_turn_body(self, rt: ReconstructedTable, question: str, session, deadline, pred: Prediction):
        title, cols, rows, _ = serialize_table(rt)
        turn = 0
        try:
            turn = 1
            p1 = self._fill(TemplateId.MULTI_TURN_1, {prompts.QUESTION: question})
            keywords = self._call(session, p1.text, deadline).strip()

            turn = 2
            p2 = self._fill(TemplateId.MULTI_TURN_2, {
                prompts.QUESTION: question, prompts.ANSWER_1: keywords, prompts.TITLE: title,
                prompts.COLUMN_HEADER: cols, prompts.ROW_HEADER: rows})
            selection_text = self._call(session, p2.text, deadline).strip()

            parsed = parse_tuples(selection_text)
            if parsed.rejects:
                log.info("turn-2 output: %d unparseable fragment(s): %s", len(parsed.rejects),
                         "; ".join(f"{frag!r} ({why})" for frag, why in parsed.rejects[:5]))
            selected = select_cells(parsed.headers(Axis.ROW), parsed.headers(Axis.COLUMN), rt.data_tuples)
            pred.code_output = selected

            turn = 3
            p3 = self._fill(TemplateId.MULTI_TURN_3, {
                prompts.ANSWER_2: selection_text, prompts.CODE_OUTPUT: serialize_tuples(selected),
                prompts.COLUMN_HEADER: cols, prompts.ROW_HEADER: rows})
            final = self._call(session, p3.text, deadline)
        except GatewayError as exc:
            pred.failure = f"{exc.tag}@turn{turn}"
            raise
        pred.structured = parse_structured_answer(final)

    def simple_prompt(self, table: SourceTable, question: str) -> tuple[prompts.FilledPrompt, bool]:
        """Fill the simple template, cutting the table text from the tail to fit the budget."""
        original = original_table_text(table)
        budget = self.config.budget
        filled = self._fill(TemplateId.SIMPLE, {prompts.ORIGINAL_TABLE: original, prompts.QUESTION: question})
        if filled.token_count <= budget.max_prompt_tokens:
            return filled, False
        frame = self._fill(TemplateId.SIMPLE, {prompts.ORIGINAL_TABLE: "", prompts.QUESTION: question})
        room = max(budget.max_prompt_tokens - frame.token_count, 0)
        cut = self.counter.truncate(original, room)
        filled = self._fill(TemplateId.SIMPLE, {prompts.ORIGINAL_TABLE: cut, prompts.QUESTION: question})
        while filled.token_count > budget.max_prompt_tokens and cut:
            # re-tokenisation at the seam can add a token or two
            cut = self.counter.truncate(cut, max(self.counter.count(cut) - 1, 0))
            filled = self._fill(TemplateId.SIMPLE, {prompts.ORIGINAL_TABLE: cut, prompts.QUESTION: question})
        return filled, True

    def answer_simple(self, table: SourceTable, question: str, qa_id: str = "") -> Prediction:
        qa_id = qa_id or table.table_id
        filled, truncated = self.simple_prompt(table, question)

        def body(session, deadline, pred):
            if truncated:
                pred.flags.append("truncated")
            pred.structured = parse_structured_answer(self._call(session, filled.text, deadline))

        return self._run(qa_id, Route.SIMPLE, body)


def original_table_text(table: SourceTable) -> str:
    """The table as the dataset shipped it; canonical JSON when no release text is attached."""
    if table.source_text:
        return table.source_text
    from .ingest.canonical import table_to_document

    return json.dumps(table_to_document(table), ensure_ascii=False)
