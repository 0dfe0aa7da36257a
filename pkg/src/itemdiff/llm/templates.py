"""Prompt templates and the two prompt builders.

Templates are versioned data files with ``{placeholder}`` substitution;
placeholders resolve from the item (id, subject, grade_label, item_type,
prompt_text, stem, options_block) plus, for feature prompts, the rendered
questions_block and the answer contract.  Substitution never rescans
substituted values, so braces inside item content are harmless.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from importlib import resources

from ..item_pool import Item, grade_label
from .schema import FeatureSchema

#: Literal contract phrases; the mock provider keys off the feature marker
#: to tell the two prompt families apart.
FEATURE_PROMPT_MARKER = 'in the exact form "KEY: value"'
RATING_MARKER = "RATING:"

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class PromptError(ValueError):
    """Template/item mismatch: unresolved placeholder or wrong subject/kind."""


@dataclass(frozen=True)
class PromptTemplate:
    kind: str  # "direct" | "features"
    subject: str
    template_text: str
    answer_contract: str

    def __post_init__(self) -> None:
        if self.kind not in ("direct", "features"):
            raise ValueError(f"unknown template kind {self.kind!r}")


def template_from_dict(data: dict) -> PromptTemplate:
    return PromptTemplate(
        kind=data["kind"],
        subject=data["subject"],
        template_text=data["template_text"],
        answer_contract=data["answer_contract"],
    )


def load_template(path: str | os.PathLike) -> PromptTemplate:
    with open(path, encoding="utf-8") as fh:
        return template_from_dict(json.load(fh))


def builtin_template(kind: str, subject: str) -> PromptTemplate:
    ref = resources.files("itemdiff").joinpath("data", "templates", f"{kind}_{subject}.json")
    return template_from_dict(json.loads(ref.read_text(encoding="utf-8")))


def _options_block(item: Item) -> str:
    if not item.options:
        return ""
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    lines = ["Response options:"]
    for i, option in enumerate(item.options):
        label = letters[i] if i < len(letters) else str(i + 1)
        lines.append(f"{label}) {option}")
    return "\n" + "\n".join(lines) + "\n"


def _render(template_text: str, values: dict[str, str]) -> str:
    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise PromptError(f"unresolved placeholder {{{name}}} in template")
        return values[name]

    return _PLACEHOLDER_RE.sub(sub, template_text)


def _base_values(item: Item) -> dict[str, str]:
    return {
        "id": item.id,
        "subject": item.subject,
        "grade": str(item.grade),
        "grade_label": grade_label(item.grade),
        "item_type": item.item_type,
        "prompt_text": item.prompt_text,
        "stem": item.stem,
        "options_block": _options_block(item),
    }


def build_direct_prompt(item: Item, template: PromptTemplate) -> str:
    """Render the single-rating prompt for one item."""
    if template.kind != "direct":
        raise PromptError(f"expected a direct template, got kind {template.kind!r}")
    if template.subject != item.subject:
        raise PromptError(
            f"template subject {template.subject!r} does not match item "
            f"subject {item.subject!r} (item {item.id})"
        )
    values = _base_values(item)
    values["answer_contract"] = template.answer_contract
    return _render(template.template_text, values)


def build_feature_prompt(item: Item, schema: FeatureSchema,
                         template: PromptTemplate | None = None) -> str:
    """Render the structured feature-extraction prompt for one item.

    Enumerates every schema question with its exact answer format; the
    contract then asks for one "key: value" line per question plus the
    final overall RATING line.
    """
    if template is None:
        template = builtin_template("features", item.subject)
    if template.kind != "features":
        raise PromptError(f"expected a features template, got kind {template.kind!r}")
    if template.subject != item.subject:
        raise PromptError(
            f"template subject {template.subject!r} does not match item "
            f"subject {item.subject!r} (item {item.id})"
        )
    if schema.subject != item.subject:
        raise PromptError(
            f"schema subject {schema.subject!r} does not match item "
            f"subject {item.subject!r} (item {item.id})"
        )
    lines = []
    for i, q in enumerate(schema.questions, start=1):
        lines.append(f"{i}. {q.key}: {q.question} {q.answer_format()}")
    values = _base_values(item)
    values["questions_block"] = "\n".join(lines)
    values["answer_contract"] = template.answer_contract
    return _render(template.template_text, values)
