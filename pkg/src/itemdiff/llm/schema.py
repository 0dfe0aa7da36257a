"""Feature schemas: the structured questions asked about every item.

A schema is a data file, not code, so question sets can be revised without
touching the pipeline.  Every schema implicitly ends with an overall 1-100
difficulty rating (key ``overall_rating``, answered on the RATING line).
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional

OVERALL_KEY = "overall_rating"
OVERALL_LO, OVERALL_HI = 1, 100

_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")


@dataclass(frozen=True)
class Question:
    key: str
    question: str
    kind: str  # "integer_range" | "binary"
    lo: Optional[int] = None
    hi: Optional[int] = None

    def __post_init__(self) -> None:
        if not _KEY_RE.match(self.key):
            raise ValueError(f"invalid question key {self.key!r}")
        if self.key == OVERALL_KEY:
            raise ValueError(f"{OVERALL_KEY!r} is reserved for the overall rating")
        if self.kind == "integer_range":
            if self.lo is None or self.hi is None or self.lo >= self.hi:
                raise ValueError(f"question {self.key!r}: integer_range needs lo < hi")
        elif self.kind == "binary":
            pass
        else:
            raise ValueError(f"question {self.key!r}: unknown kind {self.kind!r}")

    def answer_format(self) -> str:
        """The exact response instruction shown to the model."""
        if self.kind == "binary":
            return "Respond with Y or N."
        assert self.lo is not None and self.hi is not None
        span = self.hi - self.lo + 1
        if span <= 4:
            values = [str(v) for v in range(self.lo, self.hi + 1)]
            return f"Respond with {', '.join(values[:-1])}, or {values[-1]}."
        return f"Respond with an integer from {self.lo} to {self.hi}."


@dataclass(frozen=True)
class FeatureSchema:
    subject: str
    questions: tuple[Question, ...]

    def __post_init__(self) -> None:
        keys = [q.key for q in self.questions]
        seen = set()
        for key in keys:
            if key in seen:
                raise ValueError(f"duplicate question key {key!r}")
            seen.add(key)
        if not self.questions:
            raise ValueError("schema must define at least one question")

    def feature_keys(self, include_overall: bool = True) -> list[str]:
        keys = [q.key for q in self.questions]
        if include_overall:
            keys.append(OVERALL_KEY)
        return keys

    @property
    def n_questions(self) -> int:
        return len(self.questions)

    def question_for(self, key: str) -> Question:
        for q in self.questions:
            if q.key == key:
                return q
        raise KeyError(key)


def schema_from_dict(data: dict) -> FeatureSchema:
    questions = []
    for q in data["questions"]:
        questions.append(
            Question(
                key=q["key"],
                question=q["question"],
                kind=q["kind"],
                lo=q.get("lo"),
                hi=q.get("hi"),
            )
        )
    return FeatureSchema(subject=data["subject"], questions=tuple(questions))


def load_schema(path: str | os.PathLike) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return schema_from_dict(json.load(fh))


def builtin_schema(subject: str) -> FeatureSchema:
    """The packaged schema for a subject (math: 20 questions, reading: 13)."""
    ref = resources.files("itemdiff").joinpath("data", "schemas", f"{subject}.json")
    return schema_from_dict(json.loads(ref.read_text(encoding="utf-8")))
