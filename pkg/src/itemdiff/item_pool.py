"""Item pools: loading, validation, summaries, and stratified splitting.

Items live in flat files, either a delimited table (CSV, options joined
with ``||``) or record-lines (JSONL, one object per line).  Grade K is
encoded as integer 0.  All operations are pure: splitting returns a new
pool and never mutates its input.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

SUBJECTS = ("math", "reading")
SPLITS = ("train", "test", "unassigned")
GRADE_MIN, GRADE_MAX = 0, 5

#: Separator joining answer options inside the CSV ``options`` field.
OPTION_SEPARATOR = "||"

CSV_COLUMNS = (
    "id",
    "subject",
    "grade",
    "item_type",
    "prompt_text",
    "stem",
    "options",
    "rasch_difficulty",
    "split",
)
_REQUIRED_COLUMNS = CSV_COLUMNS[:7]


class PoolLoadError(ValueError):
    """Raised for malformed item files (bad row, missing column, duplicate id)."""


@dataclass(frozen=True)
class Item:
    """One assessment item; difficulty is in Rasch logit units when present."""

    id: str
    subject: str
    grade: int
    item_type: str
    prompt_text: str
    stem: str
    options: tuple[str, ...] = ()
    rasch_difficulty: Optional[float] = None
    split: str = "unassigned"

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("item id must be non-empty")
        if self.subject not in SUBJECTS:
            raise ValueError(f"unknown subject {self.subject!r} (item {self.id})")
        if not (GRADE_MIN <= self.grade <= GRADE_MAX):
            raise ValueError(
                f"grade out of range: {self.grade} (item {self.id}, expected "
                f"{GRADE_MIN}..{GRADE_MAX}, K encoded as 0)"
            )
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r} (item {self.id})")
        object.__setattr__(self, "options", tuple(self.options))


def grade_label(grade: int) -> str:
    """Human-facing grade name: 0 renders as K."""
    return "K" if grade == 0 else str(grade)


def word_count(item: Item) -> int:
    """Whitespace-delimited token count over prompt, stem, and options."""
    text = " ".join((item.prompt_text, item.stem) + item.options)
    return len(text.split())


class ItemPool:
    """Immutable, id-unique ordered collection of items."""

    def __init__(self, items: Iterable[Item]):
        self._items = tuple(items)
        by_id: dict[str, Item] = {}
        for item in self._items:
            if item.id in by_id:
                raise PoolLoadError(f"duplicate item id: {item.id!r}")
            by_id[item.id] = item
        self._by_id = by_id

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self._items)

    @property
    def items(self) -> tuple[Item, ...]:
        return self._items

    def get(self, item_id: str) -> Item:
        return self._by_id[item_id]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._by_id

    def subset(self, *, subject: str | None = None, split: str | None = None,
               grade: int | None = None) -> "ItemPool":
        picked = [
            it
            for it in self._items
            if (subject is None or it.subject == subject)
            and (split is None or it.split == split)
            and (grade is None or it.grade == grade)
        ]
        return ItemPool(picked)

    def subjects(self) -> list[str]:
        return [s for s in SUBJECTS if any(it.subject == s for it in self._items)]

    def ids(self) -> list[str]:
        return [it.id for it in self._items]

    def missing_difficulty_ids(self) -> list[str]:
        return [it.id for it in self._items if it.rasch_difficulty is None]


def _parse_row(row: dict, where: str) -> Item:
    try:
        grade = int(row["grade"])
    except (TypeError, ValueError):
        raise PoolLoadError(f"{where}: grade {row.get('grade')!r} is not an integer")
    raw_difficulty = row.get("rasch_difficulty")
    difficulty: Optional[float]
    if raw_difficulty is None or raw_difficulty == "":
        difficulty = None
    else:
        try:
            difficulty = float(raw_difficulty)
        except (TypeError, ValueError):
            raise PoolLoadError(
                f"{where}: rasch_difficulty {raw_difficulty!r} is not a number"
            )
    split = row.get("split") or "unassigned"
    options = row["options"]
    if isinstance(options, str):
        options = tuple(options.split(OPTION_SEPARATOR)) if options else ()
    elif isinstance(options, list):
        if not all(isinstance(o, str) for o in options):
            raise PoolLoadError(f"{where}: options must be a list of strings")
        options = tuple(options)
    else:
        raise PoolLoadError(f"{where}: options must be a string or list")
    try:
        return Item(
            id=str(row["id"]),
            subject=row["subject"],
            grade=grade,
            item_type=row["item_type"],
            prompt_text=row["prompt_text"],
            stem=row["stem"],
            options=options,
            rasch_difficulty=difficulty,
            split=split,
        )
    except ValueError as exc:
        raise PoolLoadError(f"{where}: {exc}") from exc


def load_items(path: str | os.PathLike, format: str | None = None) -> ItemPool:
    """Load an item pool from a delimited table (CSV) or record-lines (JSONL).

    ``format`` is ``"delimited-table"`` or ``"record-lines"``; when omitted it
    is inferred from the file extension (.csv vs .jsonl/.ndjson).
    """
    path = os.fspath(path)
    if format is None:
        ext = os.path.splitext(path)[1].lower()
        format = "record-lines" if ext in (".jsonl", ".ndjson") else "delimited-table"
    if format == "delimited-table":
        return _load_csv(path)
    if format == "record-lines":
        return _load_jsonl(path)
    raise ValueError(f"unknown item file format {format!r}")


def _load_csv(path: str) -> ItemPool:
    items: list[Item] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PoolLoadError(f"{path}: empty file, header row required")
        missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise PoolLoadError(f"{path}: missing required column(s): {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            items.append(_parse_row(row, f"{path}:{lineno}"))
    return ItemPool(items)


def _load_jsonl(path: str) -> ItemPool:
    items: list[Item] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PoolLoadError(f"{path}:{lineno}: invalid record: {exc}") from exc
            missing = [c for c in _REQUIRED_COLUMNS if c not in row]
            if missing:
                raise PoolLoadError(
                    f"{path}:{lineno}: missing required field(s): {', '.join(missing)}"
                )
            items.append(_parse_row(row, f"{path}:{lineno}"))
    return ItemPool(items)


def save_items(pool: ItemPool, path: str | os.PathLike, format: str | None = None) -> None:
    """Write a pool back to disk in either supported format."""
    path = os.fspath(path)
    if format is None:
        ext = os.path.splitext(path)[1].lower()
        format = "record-lines" if ext in (".jsonl", ".ndjson") else "delimited-table"
    if format == "delimited-table":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for it in pool:
                writer.writerow([
                    it.id,
                    it.subject,
                    it.grade,
                    it.item_type,
                    it.prompt_text,
                    it.stem,
                    OPTION_SEPARATOR.join(it.options),
                    "" if it.rasch_difficulty is None else repr(it.rasch_difficulty),
                    it.split,
                ])
    elif format == "record-lines":
        with open(path, "w", encoding="utf-8") as fh:
            for it in pool:
                record = dataclasses.asdict(it)
                record["options"] = list(it.options)
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown item file format {format!r}")


@dataclass(frozen=True)
class SummaryRow:
    subject: str
    grade: int
    split: str
    count: int
    n_missing: int
    mean_difficulty: Optional[float]
    sd_difficulty: Optional[float]
    min_difficulty: Optional[float]
    max_difficulty: Optional[float]


@dataclass(frozen=True)
class PoolSummary:
    rows: tuple[SummaryRow, ...] = field(default_factory=tuple)

    def total_count(self) -> int:
        return sum(r.count for r in self.rows)


def summarize(pool: ItemPool) -> PoolSummary:
    """One row per (subject, grade, split); moments over rasch_difficulty.

    Items without a difficulty are counted and flagged via ``n_missing``.
    A single-difficulty group reports sd 0.0 (flagged by count == 1).
    """
    groups: dict[tuple[str, int, str], list[Item]] = {}
    for item in pool:
        groups.setdefault((item.subject, item.grade, item.split), []).append(item)
    split_order = {s: i for i, s in enumerate(SPLITS)}
    rows = []
    for (subject, grade, split) in sorted(groups, key=lambda k: (k[0], k[1], split_order[k[2]])):
        members = groups[(subject, grade, split)]
        diffs = [it.rasch_difficulty for it in members if it.rasch_difficulty is not None]
        if diffs:
            mean = sum(diffs) / len(diffs)
            sd = _sd_or_zero(diffs, mean)
            lo, hi = min(diffs), max(diffs)
        else:
            mean = sd = lo = hi = None
        rows.append(
            SummaryRow(
                subject=subject,
                grade=grade,
                split=split,
                count=len(members),
                n_missing=len(members) - len(diffs),
                mean_difficulty=mean,
                sd_difficulty=sd,
                min_difficulty=lo,
                max_difficulty=hi,
            )
        )
    return PoolSummary(rows=tuple(rows))


def _sd_or_zero(values: Sequence[float], mean: float) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1)))


def stratified_split(
    pool: ItemPool,
    holdout_fraction: float,
    n_bins: int = 10,
    seed: int = 0,
) -> ItemPool:
    """Assign train/test splits with matched difficulty distributions.

    Within each (subject, grade), items are ranked by difficulty and cut
    into ``n_bins`` quantile bins; round(count * fraction) items of each
    bin (half rounds up) go to the holdout.  Deterministic for a fixed
    seed.
    """
    if not (0.0 <= holdout_fraction < 1.0):
        raise ValueError(f"holdout_fraction must be in [0, 1), got {holdout_fraction}")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    missing = pool.missing_difficulty_ids()
    if missing:
        preview = ", ".join(missing[:5])
        raise ValueError(
            f"{len(missing)} item(s) lack rasch_difficulty (e.g. {preview}); "
            "a split requires difficulties"
        )

    rng = np.random.default_rng(seed)
    test_ids: set[str] = set()
    groups: dict[tuple[str, int], list[Item]] = {}
    for item in pool:
        groups.setdefault((item.subject, item.grade), []).append(item)
    for key in sorted(groups):
        ordered = sorted(groups[key], key=lambda it: (it.rasch_difficulty, it.id))
        for chunk in _rank_bins(ordered, n_bins):
            n_test = int(len(chunk) * holdout_fraction + 0.5)
            if n_test == 0:
                continue
            picks = rng.choice(len(chunk), size=n_test, replace=False)
            test_ids.update(chunk[i].id for i in sorted(picks))

    return ItemPool(
        dataclasses.replace(it, split="test" if it.id in test_ids else "train")
        for it in pool
    )


def _rank_bins(ordered: Sequence[Item], n_bins: int) -> list[Sequence[Item]]:
    """Cut a difficulty-ordered group into n_bins near-equal rank chunks."""
    n = len(ordered)
    k = min(n_bins, n)
    base, extra = divmod(n, k)
    chunks = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        chunks.append(ordered[start:start + size])
        start += size
    return chunks
