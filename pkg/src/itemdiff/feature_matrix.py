"""Design matrix assembly: LLM features + item metadata, NZV filtering.

Models are trained per subject, so subject is never a within-matrix
column.  Metadata columns are the numeric grade, a one-hot block for
item_type, and the surface word count.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .item_pool import Item, word_count
from .llm.schema import FeatureSchema


@dataclass(frozen=True)
class DesignMatrix:
    """Dense numeric grid; rows align one-to-one with item_ids."""

    item_ids: tuple[str, ...]
    column_names: tuple[str, ...]
    values: np.ndarray
    dropped_columns: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.item_ids), len(self.column_names)):
            raise ValueError(
                f"shape {values.shape} does not match {len(self.item_ids)} items "
                f"x {len(self.column_names)} columns"
            )
        if len(set(self.column_names)) != len(self.column_names):
            raise ValueError("column names must be unique")
        if values.size and not np.isfinite(values).all():
            raise ValueError("design matrix cells must be finite")

    @property
    def n_rows(self) -> int:
        return len(self.item_ids)

    @property
    def n_cols(self) -> int:
        return len(self.column_names)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]


def item_type_column(level: str) -> str:
    return f"item_type={level}"


def assemble(
    items: Sequence[Item],
    features,
    schema: FeatureSchema,
    *,
    include_overall_rating: bool = True,
    item_type_levels: Optional[Sequence[str]] = None,
) -> DesignMatrix:
    """Build the per-subject design matrix from items and feature vectors.

    Columns are the schema feature keys, then grade, then one item_type
    indicator per level, then word_count.  ``item_type_levels`` pins the
    one-hot block (used at predict time); levels unseen in it map to an
    all-zero block with a warning.
    """
    by_id = _features_by_id(features)
    known = {it.id for it in items}
    unknown = sorted(set(by_id) - known)
    if unknown:
        raise ValueError(f"feature vector(s) for unknown item id(s): {', '.join(unknown[:5])}")
    missing = [it.id for it in items if it.id not in by_id]
    if missing:
        raise ValueError(
            f"{len(missing)} item(s) have no feature vector (e.g. {', '.join(missing[:5])})"
        )

    feature_keys = schema.feature_keys(include_overall=include_overall_rating)
    if item_type_levels is None:
        levels = sorted({it.item_type for it in items})
    else:
        levels = list(item_type_levels)
        unseen = sorted({it.item_type for it in items} - set(levels))
        if unseen:
            warnings.warn(
                f"item_type level(s) not in the trained one-hot block, encoded as "
                f"all-zero: {', '.join(unseen)}",
                stacklevel=2,
            )
    columns = list(feature_keys) + ["grade"] + [item_type_column(l) for l in levels] + ["word_count"]

    rows = np.zeros((len(items), len(columns)))
    level_pos = {l: len(feature_keys) + 1 + i for i, l in enumerate(levels)}
    for r, item in enumerate(items):
        vec = by_id[item.id]
        for c, key in enumerate(feature_keys):
            if key not in vec:
                raise ValueError(f"feature vector for item {item.id!r} lacks key {key!r}")
            rows[r, c] = float(vec[key])
        rows[r, len(feature_keys)] = float(item.grade)
        pos = level_pos.get(item.item_type)
        if pos is not None:
            rows[r, pos] = 1.0
        rows[r, -1] = float(word_count(item))

    return DesignMatrix(
        item_ids=tuple(it.id for it in items),
        column_names=tuple(columns),
        values=rows,
    )


def _features_by_id(features) -> dict[str, Mapping[str, float]]:
    if isinstance(features, Mapping):
        return {str(k): v for k, v in features.items()}
    by_id = {}
    for vec in features:
        by_id[vec.item_id] = vec.values
    return by_id


def near_zero_variance_filter(
    m: DesignMatrix,
    freq_ratio_cutoff: float = 19.0,
    unique_pct_cutoff: float = 10.0,
) -> DesignMatrix:
    """Drop almost-constant columns.

    A column is dropped when the most-common/second-most-common frequency
    ratio is >= ``freq_ratio_cutoff`` AND the percentage of unique values
    is <= ``unique_pct_cutoff``; constant columns are always dropped.
    Idempotent; drops are recorded with their reason.
    """
    if m.n_rows == 0:
        raise ValueError("cannot filter an empty matrix")
    keep: list[int] = []
    dropped = list(m.dropped_columns)
    n = m.n_rows
    for j, name in enumerate(m.column_names):
        _, counts = np.unique(m.values[:, j], return_counts=True)
        if len(counts) == 1:
            dropped.append((name, "constant"))
            continue
        top2 = np.sort(counts)[-2:]
        ratio = top2[1] / top2[0]
        unique_pct = 100.0 * len(counts) / n
        if ratio >= freq_ratio_cutoff and unique_pct <= unique_pct_cutoff:
            dropped.append(
                (name, f"near-zero variance (freq ratio {ratio:.1f}, {unique_pct:.1f}% unique)")
            )
            continue
        keep.append(j)
    return DesignMatrix(
        item_ids=m.item_ids,
        column_names=tuple(m.column_names[j] for j in keep),
        values=m.values[:, keep],
        dropped_columns=tuple(dropped),
    )


def select_columns(m: DesignMatrix, names: Sequence[str]) -> DesignMatrix:
    """Reorder/restrict the matrix to exactly ``names`` (e.g. model columns)."""
    missing = [c for c in names if c not in m.column_names]
    if missing:
        raise ValueError(f"matrix lacks required column(s): {', '.join(missing)}")
    idx = [m.column_names.index(c) for c in names]
    return DesignMatrix(
        item_ids=m.item_ids,
        column_names=tuple(names),
        values=m.values[:, idx],
        dropped_columns=m.dropped_columns,
    )


def matrix_to_csv(m: DesignMatrix, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("item_id",) + m.column_names)
        for i, item_id in enumerate(m.item_ids):
            writer.writerow([item_id] + [repr(v) for v in m.values[i].tolist()])


def matrix_from_csv(path: str | os.PathLike) -> DesignMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "item_id":
            raise ValueError(f"{path}: not a design matrix file (bad header)")
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    values = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, len(header) - 1))
    return DesignMatrix(
        item_ids=tuple(ids),
        column_names=tuple(header[1:]),
        values=values,
    )
