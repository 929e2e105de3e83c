"""QA records and datasets.

On-disk layout of a canonical dataset directory::

    <root>/dataset.json        optional: {"name": ..., "subset_tags": [...]}
    <root>/tables/<id>.json    one canonical table document per table
    <root>/qa.jsonl            one QA record per line
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import IntegrityError, SchemaError
from ..table_model import SourceTable
from .canonical import dump_canonical, load_canonical_file


class Split(Enum):
    TRAIN = "TRAIN"
    DEV = "DEV"
    TEST = "TEST"
    UNSPLIT = "UNSPLIT"

    @classmethod
    def parse(cls, value: str) -> "Split":
        try:
            return cls(str(value).upper())
        except ValueError:
            raise SchemaError(f"unknown split {value!r}", "split") from None


@dataclass(frozen=True)
class QAPair:
    qa_id: str
    table_id: str
    question: str
    gold_answers: tuple[str, ...]
    split: Split = Split.UNSPLIT
    subset_tags: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "gold_answers", tuple(self.gold_answers))
        object.__setattr__(self, "subset_tags", frozenset(self.subset_tags))
        if not self.gold_answers:
            raise SchemaError(f"QA pair {self.qa_id!r} has no gold answer", "gold_answers")
        if not self.question.strip():
            raise SchemaError(f"QA pair {self.qa_id!r} has an empty question", "question")

    def to_record(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "table_id": self.table_id,
            "question": self.question,
            "gold_answers": list(self.gold_answers),
            "split": self.split.value,
            "subset_tags": sorted(self.subset_tags),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "QAPair":
        fields = ("qa_id", "table_id", "question", "gold_answers", "split", "subset_tags")
        for name in fields:
            if name not in rec:
                raise SchemaError(f"QA record missing field {name!r}", name)
        extra = sorted(set(rec) - set(fields))
        if extra:
            raise SchemaError(f"QA record has unexpected field(s) {extra}", extra[0])
        answers = rec["gold_answers"]
        if not isinstance(answers, list):
            raise SchemaError("gold_answers must be a list", "gold_answers")
        return cls(str(rec["qa_id"]), str(rec["table_id"]), str(rec["question"]),
                   tuple(str(a) for a in answers), Split.parse(rec["split"]),
                   frozenset(rec["subset_tags"]))


@dataclass(frozen=True)
class Dataset:
    name: str
    tables: Mapping[str, SourceTable]
    pairs: tuple[QAPair, ...]
    tag_vocabulary: frozenset[str] = field(default=frozenset())

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        dangling = [p.qa_id for p in self.pairs if p.table_id not in self.tables]
        if dangling:
            raise IntegrityError(f"{len(dangling)} QA pair(s) reference unknown tables, e.g. {dangling[0]!r}")
        if self.tag_vocabulary:
            for p in self.pairs:
                unknown = p.subset_tags - self.tag_vocabulary
                if unknown:
                    raise IntegrityError(f"QA pair {p.qa_id!r} has undeclared subset tag(s) {sorted(unknown)}")

    def pair(self, qa_id: str) -> QAPair:
        for p in self.pairs:
            if p.qa_id == qa_id:
                return p
        raise KeyError(qa_id)

    def counts(self) -> dict[str, int]:
        out = {"tables": len(self.tables), "pairs": len(self.pairs)}
        for split in Split:
            n = sum(1 for p in self.pairs if p.split is split)
            if n:
                out[split.value.lower()] = n
        return out


def read_qa_file(path: str | os.PathLike) -> list[QAPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                pairs.append(QAPair.from_record(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return pairs


def write_qa_file(path: str | os.PathLike, pairs: Iterable[QAPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")


def load_dataset(root: str | os.PathLike) -> Dataset:
    root = Path(root)
    meta = {}
    if (root / "dataset.json").exists():
        meta = json.loads((root / "dataset.json").read_text(encoding="utf-8"))
    tables = {}
    for path in sorted((root / "tables").glob("*.json")):
        table = load_canonical_file(path)
        tables[table.table_id] = table
    pairs = read_qa_file(root / "qa.jsonl")
    return Dataset(meta.get("name", root.name), tables, tuple(pairs),
                   frozenset(meta.get("subset_tags", ())))


def write_dataset(dataset: Dataset, root: str | os.PathLike) -> None:
    root = Path(root)
    (root / "tables").mkdir(parents=True, exist_ok=True)
    meta = {"name": dataset.name, "subset_tags": sorted(dataset.tag_vocabulary)}
    (root / "dataset.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    for table_id, table in dataset.tables.items():
        dump_canonical(table, root / "tables" / f"{table_id}.json")
    write_qa_file(root / "qa.jsonl", dataset.pairs)
