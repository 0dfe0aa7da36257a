"""Synthetic item pools with planted feature signal, for offline runs.

Difficulty is a standardized nonlinear function of six schema features
(signal SD 1.0 over the pool) plus Gaussian noise.  The generator also
emits mock-provider fixtures holding each item's feature answers and a
direct 1-100 rating, so the entire pipeline can run without a network.

Two columns are planted for the variance-filter checks: a near-constant
binary (about 97/3) and a balanced no-signal binary (about 50/50).
"""

from __future__ import annotations

import argparse
import json
import os
from dataclasses import dataclass

import numpy as np

from .item_pool import Item, ItemPool, save_items
from .llm.schema import FeatureSchema, builtin_schema

#: Signal features per subject, in the order their weights apply.
SIGNAL_KEYS = {
    "math": (
        "skill_difficulty",
        "cognitive_load",
        "dok_level",
        "multi_step_reasoning",
        "concept_integration",
        "number_size",
    ),
    "reading": (
        "skill_challenge",
        "vocabulary_complexity",
        "cognitive_load",
        "dok_level",
        "inference_required",
        "passage_length_demand",
    ),
}

#: Near-constant binary (planted ~97/3) per subject.
RARE_KEYS = {"math": "evaluates_others_work", "reading": "multi_construct"}

#: Balanced binary kept free of signal (planted ~50/50) per subject.
BALANCED_KEYS = {"math": "word_problem", "reading": "abstract_language"}

_WORDS = (
    "number line sum share group pattern story question answer value "
    "sentence passage idea detail reason model part whole table graph"
).split()

_ITEM_TYPES = ("multiple_choice", "constructed_response")


@dataclass
class SyntheticPool:
    pool: ItemPool
    fixtures: dict[str, dict[str, str]]


def _scaled(question, value: float) -> float:
    """Map an answer onto [-1, 1] within its declared range."""
    if question.kind == "binary":
        return 2.0 * value - 1.0
    mid = (question.lo + question.hi) / 2.0
    half = (question.hi - question.lo) / 2.0
    return (value - mid) / half


def _signal(z: np.ndarray) -> np.ndarray:
    """Nonlinear combination of the six scaled signal features."""
    return (
        1.0 * z[:, 0]
        + 0.8 * z[:, 1]
        + 0.6 * z[:, 2]
        + 0.5 * z[:, 3]
        + 0.4 * z[:, 4]
        + 0.3 * z[:, 5]
        + 0.5 * z[:, 0] * z[:, 3]
        + 0.3 * z[:, 1] ** 2
    )


def generate_pool(
    subject: str,
    n_items: int,
    seed: int,
    *,
    noise_sd: float = 0.3,
    base_difficulty: float = -1.0,
    direct_mode: str = "affine",
    direct_slope: float = 10.0,
    direct_intercept: float = 55.0,
    direct_noise_sd: float = 1.0,
    schema: FeatureSchema | None = None,
) -> SyntheticPool:
    """Generate ``n_items`` synthetic items plus their mock fixtures.

    ``direct_mode="affine"`` plants ratings = intercept + slope*difficulty
    + noise; ``"noise"`` plants uninformative uniform ratings.
    """
    if direct_mode not in ("affine", "noise"):
        raise ValueError(f"unknown direct_mode {direct_mode!r}")
    if schema is None:
        schema = builtin_schema(subject)
    subject_tag = 0 if subject == "math" else 1
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, subject_tag]))

    signal_keys = SIGNAL_KEYS[subject]
    rare_key = RARE_KEYS[subject]
    balanced_key = BALANCED_KEYS[subject]

    answers: list[dict[str, int]] = []
    for _ in range(n_items):
        row: dict[str, int] = {}
        for q in schema.questions:
            if q.kind == "binary":
                p = 0.03 if q.key == rare_key else 0.5
                row[q.key] = int(rng.random() < p)
            else:
                row[q.key] = int(rng.integers(q.lo, q.hi + 1))
        answers.append(row)

    z = np.array(
        [[_scaled(schema.question_for(k), row[k]) for k in signal_keys] for row in answers]
    )
    raw = _signal(z)
    signal = (raw - raw.mean()) / raw.std(ddof=1)
    difficulty = base_difficulty + signal + rng.normal(0.0, noise_sd, size=n_items)

    if direct_mode == "affine":
        ratings = direct_intercept + direct_slope * difficulty + rng.normal(
            0.0, direct_noise_sd, size=n_items
        )
    else:
        ratings = rng.uniform(1, 101, size=n_items)
    ratings = np.clip(np.rint(ratings), 1, 100).astype(int)

    # Overall rating inside the feature prompt: weakly informative, like a
    # holistic judgement would be.
    overall = np.clip(
        np.rint(50.0 + 5.0 * signal + rng.normal(0.0, 10.0, size=n_items)), 1, 100
    ).astype(int)

    items: list[Item] = []
    fixtures: dict[str, dict[str, str]] = {}
    for i in range(n_items):
        item_id = f"{subject}-{i:05d}"
        grade = int(rng.integers(0, 6))
        item_type = _ITEM_TYPES[int(rng.random() < 0.3)]
        n_words = int(rng.integers(5, 30))
        stem_words = [str(_WORDS[j]) for j in rng.integers(0, len(_WORDS), size=n_words)]
        options: tuple[str, ...] = ()
        if item_type == "multiple_choice":
            options = tuple(str(v) for v in rng.integers(1, 100, size=4))
        items.append(
            Item(
                id=item_id,
                subject=subject,
                grade=grade,
                item_type=item_type,
                prompt_text=f"Read the {subject} task and answer.",
                stem=" ".join(stem_words),
                options=options,
                rasch_difficulty=float(difficulty[i]),
            )
        )
        lines = []
        for q in schema.questions:
            v = answers[i][q.key]
            lines.append(f"{q.key}: {'Y' if v else 'N'}" if q.kind == "binary" else f"{q.key}: {v}")
        lines.append(f"RATING: {overall[i]}")
        fixtures[item_id] = {
            "features": "\n".join(lines),
            "direct": f"Synthetic rating for {item_id}.\nRATING: {ratings[i]}",
        }
    return SyntheticPool(pool=ItemPool(items), fixtures=fixtures)


def merge_pools(*pools: SyntheticPool) -> SyntheticPool:
    items: list[Item] = []
    fixtures: dict[str, dict[str, str]] = {}
    for p in pools:
        items.extend(p.pool)
        fixtures.update(p.fixtures)
    return SyntheticPool(pool=ItemPool(items), fixtures=fixtures)


def write_fixtures(fixtures: dict[str, dict[str, str]], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fixtures, fh, sort_keys=True, indent=1)
        fh.write("\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m itemdiff.synthetic",
        description="Generate a synthetic item pool plus mock-provider fixtures.",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--subjects", nargs="+", default=["math", "reading"],
                        choices=["math", "reading"])
    parser.add_argument("--n", type=int, default=600, help="items per subject")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--direct-mode", default="affine", choices=["affine", "noise"])
    args = parser.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    merged = merge_pools(
        *(generate_pool(s, args.n, args.seed, direct_mode=args.direct_mode)
          for s in args.subjects)
    )
    items_path = os.path.join(args.out, "items.csv")
    fixtures_path = os.path.join(args.out, "fixtures.json")
    save_items(merged.pool, items_path)
    write_fixtures(merged.fixtures, fixtures_path)
    print(f"wrote {len(merged.pool)} items to {items_path}")
    print(f"wrote fixtures to {fixtures_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
