"""Answer scoring and evaluation reports.

A generated answer counts as correct for a gold answer when any of these hold
after normalisation:

* the normalised strings are equal;
* both have a leading numeric value and the values agree within a relative
  tolerance of 1e-6;
* the gold's tokens occur as a contiguous run of whole tokens in the answer
  (numeric tokens compared by value), which covers verbose generations.

Gold lists with several entries are multi-part answers: every part must be
found in the answer, in any order. "I don't know" answers are never correct.
"""

from __future__ import annotations

import json
import math
import random
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .errors import MissingPair

REL_TOL = 1e-6

_QUOTES = "\"'`“”‘’"
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}(?!\d))")
_LEADING_NUMBER = re.compile(r"^[$€£¥]?\s*([-+]?(?:\d+(?:\.\d+)?|\.\d+))(?![\d.]*[a-z])")
_NUMERIC = re.compile(r"-?(?:\d+(?:\.\d+)?|\.\d+)")
# a minus sign directly before a digit belongs to the number
_TOKEN = re.compile(r"(?<![\w.])-?(?:\d+(?:\.\d+)?|\.\d+)|\d+(?:\.\d+)?|[^\W_]+")


@dataclass(frozen=True)
class NormalForm:
    text: str
    number: float | None = None
    percent: bool = False


def normalize_answer(text: str) -> NormalForm:
    s = " ".join(str(text).lower().split())
    while len(s) >= 2 and s[0] in _QUOTES and s[-1] in _QUOTES:
        s = s[1:-1].strip()
    s = s.rstrip(".,;:!?").strip()
    while len(s) >= 2 and s[0] in _QUOTES and s[-1] in _QUOTES:
        s = s[1:-1].strip()
    s = _THOUSANDS.sub("", s)
    percent = "%" in s
    if percent:
        s = " ".join(s.replace("%", " ").split())
    m = _LEADING_NUMBER.match(s)
    number = float(m.group(1)) if m else None
    return NormalForm(s, number, percent)


def _close(a: float, b: float) -> bool:
    return a == b or math.isclose(a, b, rel_tol=REL_TOL)


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text)


def _token_eq(a: str, b: str) -> bool:
    if a == b:
        return True
    if _NUMERIC.fullmatch(a) and _NUMERIC.fullmatch(b):
        try:
            return _close(float(a), float(b))
        except ValueError:
            return False
    return False


def _contains(haystack: list[str], needle: list[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    for i in range(len(haystack) - len(needle) + 1):
        if all(_token_eq(h, n) for h, n in zip(haystack[i:i + len(needle)], needle)):
            return True
    return False


def matches(answer: str, gold: str) -> bool:
    a, g = normalize_answer(answer), normalize_answer(gold)
    if not g.text:
        return not a.text
    if a.text == g.text:
        return True
    if a.number is not None and g.number is not None and _close(a.number, g.number):
        return True
    return _contains(_tokens(a.text), _tokens(g.text))


def is_correct(answer: str, gold_answers: Sequence[str], idn: bool = False) -> bool:
    if idn or not gold_answers:
        return False
    return all(matches(answer, g) for g in gold_answers)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class PairResult:
    qa_id: str
    correct: bool
    route: str
    idn: bool
    answer: str
    gold: tuple[str, ...]
    split: str
    subset_tags: tuple[str, ...]
    failure: str | None = None


@dataclass
class EvalReport:
    overall_accuracy: float
    by_split: dict[str, float]
    by_subset: dict[str, float]
    by_route: dict[str, float]
    idn_rate: float
    n_failed: int
    n_total: int
    n_correct: int
    n_idn: int
    n_missing: int
    per_pair: list[PairResult] = field(default_factory=list)
    counter: str = ""
    judge_accuracy: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_pair"] = [asdict(p) for p in self.per_pair]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=1, sort_keys=True) + "\n"

    def summary_table(self) -> str:
        lines = [f"{'group':<32} {'accuracy':>9}"]
        lines.append("-" * 42)
        lines.append(f"{'overall':<32} {100 * self.overall_accuracy:>8.2f}%")
        for title, mapping in (("split", self.by_split), ("subset", self.by_subset), ("route", self.by_route)):
            for key in sorted(mapping):
                lines.append(f"{title + ': ' + key:<32} {100 * mapping[key]:>8.2f}%")
        lines.append("-" * 42)
        lines.append(f"pairs {self.n_total}, correct {self.n_correct}, idn {self.n_idn} "
                     f"({100 * self.idn_rate:.1f}%), failed {self.n_failed}, missing {self.n_missing}")
        if self.counter:
            lines.append(f"token counter: {self.counter}")
        if self.judge_accuracy is not None:
            lines.append(f"llm-judge accuracy (not part of headline): {100 * self.judge_accuracy:.2f}%")
        return "\n".join(lines) + "\n"


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def evaluate(predictions: Iterable, dataset, strict: bool = False, counter_name: str = "",
             judge=None) -> EvalReport:
    """Score predictions (``orchestrator.Prediction``) against ``dataset``'s gold answers."""
    by_id = {}
    for pred in predictions:
        by_id[pred.qa_id] = pred
    known = {p.qa_id: p for p in dataset.pairs}
    unknown = sorted(set(by_id) - set(known))
    if unknown:
        raise ValueError(f"prediction(s) for unknown qa_id(s): {', '.join(unknown[:5])}")
    missing = [q for q in known if q not in by_id]
    if strict and missing:
        raise MissingPair(missing)

    results = []
    judged = 0
    for qa_id in sorted(by_id):
        pair, pred = known[qa_id], by_id[qa_id]
        answer = pred.answer if pred.failure is None else ""
        idn = pred.idn if pred.failure is None else False
        correct = pred.failure is None and is_correct(answer, pair.gold_answers, idn)
        if judge is not None and pred.failure is None and not idn:
            judged += judge.equivalent(pair.question, answer, pair.gold_answers)
        results.append(PairResult(qa_id, correct, pred.route_taken.value, idn, answer,
                                  tuple(pair.gold_answers), pair.split.value,
                                  tuple(sorted(pair.subset_tags)), pred.failure))

    def group(key_fn) -> dict[str, float]:
        hit, tot = Counter(), Counter()
        for r in results:
            for key in key_fn(r):
                tot[key] += 1
                hit[key] += r.correct
        return {k: _ratio(hit[k], tot[k]) for k in sorted(tot)}

    n = len(results)
    n_correct = sum(r.correct for r in results)
    n_idn = sum(r.idn for r in results)
    return EvalReport(
        overall_accuracy=_ratio(n_correct, n),
        by_split=group(lambda r: [r.split]),
        by_subset=group(lambda r: r.subset_tags),
        by_route=group(lambda r: [r.route]),
        idn_rate=_ratio(n_idn, n),
        n_failed=sum(r.failure is not None for r in results),
        n_total=n,
        n_correct=n_correct,
        n_idn=n_idn,
        n_missing=len(missing),
        per_pair=results,
        counter=counter_name,
        judge_accuracy=_ratio(judged, n) if judge is not None else None,
    )


@dataclass(frozen=True)
class ErrorSample:
    qa_id: str
    gold: tuple[str, ...]
    answer: str
    route: str


def error_sample(report: EvalReport, n: int, seed: int) -> list[ErrorSample]:
    """Seeded sample of incorrect pairs, allocated across routes in proportion to their error counts."""
    errors = sorted((r for r in report.per_pair if not r.correct), key=lambda r: r.qa_id)
    if n >= len(errors):
        chosen = errors
    else:
        strata: dict[str, list[PairResult]] = defaultdict(list)
        for r in errors:
            strata[r.route].append(r)
        quotas = {k: n * len(v) / len(errors) for k, v in strata.items()}
        alloc = {k: int(math.floor(q)) for k, q in quotas.items()}
        leftover = n - sum(alloc.values())
        for k in sorted(quotas, key=lambda k: (-(quotas[k] - alloc[k]), k))[:leftover]:
            alloc[k] += 1
        rng = random.Random(seed)
        chosen = []
        for k in sorted(strata):
            chosen.extend(rng.sample(strata[k], alloc[k]))
    return [ErrorSample(r.qa_id, r.gold, r.answer, r.route) for r in chosen]


_JUDGE_PROMPT = (
    "Question: {question}\n"
    "Reference answer: {gold}\n"
    "Candidate answer: {answer}\n"
    "Does the candidate answer have the same meaning as the reference answer? Reply Yes or No.\n"
    "Reply:"
)


class LLMJudge:
    """Optional model-based equivalence check, reported beside (never instead of) the rule-based score."""

    def __init__(self, gateway, model_name: str = "text-davinci-003"):
        self.gateway = gateway
        self.model_name = model_name

    def equivalent(self, question: str, answer: str, gold: Sequence[str]) -> bool:
        from .gateway import CompletionRequest

        prompt = _JUDGE_PROMPT.format(question=question, gold="; ".join(gold), answer=answer)
        reply = self.gateway.complete(CompletionRequest(prompt, self.model_name, 3, 0.0)).text
        return reply.strip().lower().startswith("yes")
