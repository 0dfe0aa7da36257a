"""Parsers for the two answer contracts.

Rejections are total: a response either yields a fully validated result
or raises, never a partially populated vector.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

from .schema import FeatureSchema, OVERALL_HI, OVERALL_KEY, OVERALL_LO


class ParseError(ValueError):
    """Base class for answer-contract violations."""


class MissingMarkerError(ParseError):
    """The required marker line (e.g. RATING:) is absent."""


class MalformedValueError(ParseError):
    """A value is present but not of the required type."""


class ValueOutOfRangeError(ParseError):
    """A value parsed but falls outside its declared range."""


class FeatureParseError(ParseError):
    """Aggregate of per-key failures from a feature response."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        detail = "; ".join(f"{key}: {msg}" for key, msg in errors)
        super().__init__(f"{len(errors)} invalid feature answer(s): {detail}")


@dataclass(frozen=True)
class FeatureVector:
    """Validated answers to one subject's feature questions for one item."""

    item_id: str
    values: Mapping[str, int] = field(default_factory=dict)

    def as_ordered(self, keys: list[str]) -> list[int]:
        return [self.values[k] for k in keys]


_RATING_RE = re.compile(r"^\s*RATING:\s*(.*?)\s*$", re.MULTILINE)
_INT_RE = re.compile(r"^[+-]?\d+$")
_KV_RE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*)\s*:\s*(.*?)\s*$")

_BINARY_VALUES = {"y": 1, "yes": 1, "1": 1, "n": 0, "no": 0, "0": 0}


def _response_text(response) -> str:
    return response if isinstance(response, str) else response.response_text


def parse_direct(response) -> int:
    """Extract the final RATING line as an integer in [1, 100]."""
    text = _response_text(response)
    matches = _RATING_RE.findall(text)
    if not matches:
        raise MissingMarkerError(
            f"no RATING line found in response: {text[:120]!r}"
        )
    raw = matches[-1]
    if not _INT_RE.match(raw):
        raise MalformedValueError(f"RATING value is not an integer: {raw!r}")
    value = int(raw)
    if not (OVERALL_LO <= value <= OVERALL_HI):
        raise ValueOutOfRangeError(
            f"RATING {value} outside [{OVERALL_LO}, {OVERALL_HI}]"
        )
    return value


def parse_features(response, schema: FeatureSchema, item_id: str = "") -> FeatureVector:
    """Validate one "key: value" line per schema question plus the RATING.

    Binary answers map Y/N (and 0/1) to {0, 1}; integer-range answers must
    fall inside their declared bounds.  All per-key problems are collected
    and reported together.
    """
    text = _response_text(response)
    answers: dict[str, str] = {}
    for line in text.splitlines():
        kv = _KV_RE.match(line)
        if kv:
            answers[kv.group(1)] = kv.group(2)  # last occurrence wins

    errors: list[tuple[str, str]] = []
    values: dict[str, int] = {}
    for q in schema.questions:
        if q.key not in answers:
            errors.append((q.key, "missing answer line"))
            continue
        raw = answers[q.key]
        if q.kind == "binary":
            mapped = _BINARY_VALUES.get(raw.strip().lower())
            if mapped is None:
                errors.append((q.key, f"expected Y or N, got {raw!r}"))
                continue
            values[q.key] = mapped
        else:
            if not _INT_RE.match(raw):
                errors.append((q.key, f"expected an integer, got {raw!r}"))
                continue
            value = int(raw)
            if not (q.lo <= value <= q.hi):
                errors.append((q.key, f"{value} outside [{q.lo}, {q.hi}]"))
                continue
            values[q.key] = value

    try:
        values[OVERALL_KEY] = parse_direct(text)
    except ParseError as exc:
        errors.append((OVERALL_KEY, str(exc)))

    if errors:
        raise FeatureParseError(errors)
    return FeatureVector(item_id=item_id, values=values)
