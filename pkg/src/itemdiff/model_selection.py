"""k-fold cross-validation and exhaustive grid search on CV RMSE.

Fold assignment is shared across configurations within one search so that
every configuration is scored on identical folds.  Per-fit seeds derive
from ``SeedSequence([seed, config_index, fold_index])``; the winning
configuration is refit on the full training data with fold index k.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .evaluation import rmse

GBM_GRID_PARAM_ORDER = (
    "nrounds",
    "max_depth",
    "eta",
    "gamma",
    "colsample_bytree",
    "min_child_weight",
    "subsample",
)


@dataclass(frozen=True)
class Grid:
    """Ordered per-parameter value lists; enumeration is lexicographic."""

    parameters: tuple[tuple[str, tuple], ...]

    @classmethod
    def from_dict(cls, values: dict[str, Sequence]) -> "Grid":
        for name, vals in values.items():
            if len(vals) == 0:
                raise ValueError(f"grid parameter {name!r} has no values")
        return cls(parameters=tuple((k, tuple(v)) for k, v in values.items()))

    @property
    def size(self) -> int:
        return math.prod(len(v) for _, v in self.parameters)

    def configs(self) -> list[dict]:
        names = [k for k, _ in self.parameters]
        out = []
        for combo in itertools.product(*(v for _, v in self.parameters)):
            out.append(dict(zip(names, combo)))
        return out


def paper_gbm_grid() -> Grid:
    """The seven-parameter boosting grid (2^7 = 128 configurations)."""
    return Grid.from_dict(
        {
            "nrounds": (100, 200),
            "max_depth": (3, 6),
            "eta": (0.01, 0.1),
            "gamma": (0, 1),
            "colsample_bytree": (0.8, 1.0),
            "min_child_weight": (1, 5),
            "subsample": (0.8, 1.0),
        }
    )


def mtry_candidates(n_features: int) -> list[int]:
    """Forest mtry values to try: integers from 2 to floor(sqrt(p)).

    Collapses to a single sensible value when floor(sqrt(p)) < 2.
    """
    if n_features < 1:
        raise ValueError(f"n_features must be >= 1, got {n_features}")
    hi = math.isqrt(n_features)
    if hi < 2:
        return [max(1, hi)]
    return list(range(2, hi + 1))


def mtry_grid(n_features: int) -> Grid:
    return Grid.from_dict({"mtry": mtry_candidates(n_features)})


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffled indices cut into k folds whose sizes differ by at most 1."""
    if not (2 <= k <= n):
        raise ValueError(f"k must satisfy 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(perm, k)]


@dataclass(frozen=True)
class CvRow:
    config: dict
    fold_rmses: tuple[float, ...]
    mean_rmse: float
    sd_rmse: float


@dataclass(frozen=True)
class CvTable:
    rows: tuple[CvRow, ...]
    best_index: int
    k: int
    seed: int

    @property
    def best_config(self) -> dict:
        return self.rows[self.best_index].config

    def to_csv(self, path: str | os.PathLike) -> None:
        names = list(self.rows[0].config)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["config_index"] + names
                + [f"fold{i}_rmse" for i in range(self.k)]
                + ["mean_rmse", "sd_rmse", "best"]
            )
            for i, row in enumerate(self.rows):
                writer.writerow(
                    [i]
                    + [row.config[n] for n in names]
                    + [repr(v) for v in row.fold_rmses]
                    + [repr(row.mean_rmse), repr(row.sd_rmse),
                       int(i == self.best_index)]
                )


def fit_seed(seed: int, config_index: int, fold_index: int) -> int:
    """Deterministic per-(config, fold) fit seed; fold_index=k is the refit."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, config_index, fold_index])
    return int(ss.generate_state(1)[0])


Trainer = Callable[[np.ndarray, np.ndarray, dict, int], object]


def grid_search(
    grid: Grid,
    trainer: Trainer,
    X: np.ndarray,
    y: Sequence[float],
    k: int = 5,
    seed: int = 0,
) -> CvTable:
    """Score every configuration by mean held-fold RMSE; lowest wins.

    ``trainer(X_train, y_train, config, fit_seed)`` must return an object
    with ``predict``.  Ties resolve to the earliest enumerated config.
    """
    configs = grid.configs()
    if not configs:
        raise ValueError("empty grid")
    values = np.asarray(X.values if hasattr(X, "values") else X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = values.shape[0]
    folds = kfold_split(n, k, seed)
    all_idx = np.arange(n)

    rows: list[CvRow] = []
    for ci, config in enumerate(configs):
        fold_rmses = []
        for fi, fold in enumerate(folds):
            train_idx = np.setdiff1d(all_idx, fold, assume_unique=True)
            try:
                model = trainer(values[train_idx], y[train_idx], config, fit_seed(seed, ci, fi))
            except Exception as exc:
                raise RuntimeError(
                    f"trainer failed for config #{ci} {config} on fold {fi}: {exc}"
                ) from exc
            pred = model.predict(values[fold])
            fold_rmses.append(rmse(pred, y[fold]))
        mean_rmse = float(np.mean(fold_rmses))
        sd_rmse = float(np.std(fold_rmses, ddof=1)) if len(fold_rmses) > 1 else 0.0
        rows.append(
            CvRow(
                config=config,
                fold_rmses=tuple(fold_rmses),
                mean_rmse=mean_rmse,
                sd_rmse=sd_rmse,
            )
        )

    best_index = min(range(len(rows)), key=lambda i: (rows[i].mean_rmse, i))
    return CvTable(rows=tuple(rows), best_index=best_index, k=k, seed=seed)
