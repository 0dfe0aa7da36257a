"""Readers/writers for the pipeline's flat-file artifacts.

All writers emit deterministic bytes (sorted rows where order is not
meaningful, repr-formatted floats, LF line endings).
"""

from __future__ import annotations

import csv
import os
from typing import Mapping, Sequence

from .llm.schema import FeatureSchema


def write_ratings(ratings: Mapping[str, int], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "rating"])
        for item_id in sorted(ratings):
            writer.writerow([item_id, ratings[item_id]])


def read_ratings(path: str | os.PathLike) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["item_id"]] = int(row["rating"])
    return out


def write_features(
    values_by_id: Mapping[str, Mapping[str, int]],
    schema: FeatureSchema,
    path: str | os.PathLike,
) -> None:
    keys = schema.feature_keys(include_overall=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id"] + keys)
        for item_id in sorted(values_by_id):
            row = values_by_id[item_id]
            writer.writerow([item_id] + [row[k] for k in keys])


def read_features(path: str | os.PathLike) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            item_id = row.pop("item_id")
            out[item_id] = {k: int(v) for k, v in row.items()}
    return out


def write_predictions(
    predictions: Mapping[str, float], path: str | os.PathLike
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "prediction"])
        for item_id in sorted(predictions):
            writer.writerow([item_id, repr(float(predictions[item_id]))])


def read_predictions(path: str | os.PathLike) -> dict[str, float]:
    out: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["item_id"]] = float(row["prediction"])
    return out


def write_errors(
    errors: Sequence[tuple[str, str, str]], path: str | os.PathLike
) -> None:
    """Per-item extraction failures: (item_id, stage, message) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "stage", "error"])
        for item_id, stage, message in sorted(errors):
            writer.writerow([item_id, stage, message])


def write_dropped_report(
    dropped: Sequence[tuple[str, str]], path: str | os.PathLike
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["column", "reason"])
        for name, reason in dropped:
            writer.writerow([name, reason])
