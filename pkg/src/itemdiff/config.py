"""Run configuration: a JSON file parameterizing the whole workflow.

All randomness flows from the seeds declared here; there are no
wall-clock defaults.  Relative paths resolve against the config file's
directory.  The API key is named by ``provider.api_key_env`` and read
from the environment, never stored in the file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class ProviderConfig:
    kind: str = "http"  # "http" | "mock"
    base_url: str = "https://api.openai.com/v1"
    model_id: str = "gpt-4o-2024-11-20"
    api_key_env: str = "ITEMDIFF_API_KEY"
    temperature: float = 0.0
    concurrency: int = 1
    retries: int = 3
    mock_fixtures: Optional[str] = None
    mock_fallback_seed: Optional[int] = None


@dataclass
class SplitConfig:
    holdout_fraction: float
    n_bins: int
    seed: int


@dataclass
class RfConfig:
    n_trees: int = 500
    min_node_size: int = 5
    mtry_values: Optional[list[int]] = None  # None: 2..floor(sqrt(p))


@dataclass
class TuningConfig:
    k: int
    seed: int
    rf: RfConfig = field(default_factory=RfConfig)
    gbm_grid: Optional[dict[str, list]] = None  # None: the 128-config grid
    reg_lambda: float = 1.0


@dataclass
class Toggles:
    direct: bool = True
    features: bool = True
    per_grade_rescale: bool = False
    include_overall_rating_feature: bool = True


@dataclass
class RunConfig:
    items: str
    out_dir: str
    cache: str
    templates_dir: Optional[str]
    schemas_dir: Optional[str]
    provider: ProviderConfig
    split: SplitConfig
    tuning: TuningConfig
    subjects: list[str]
    toggles: Toggles
    raw: dict = field(default_factory=dict, repr=False)


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required config key {where}.{key}")
    return section[key]


def load_config(path: str | os.PathLike) -> RunConfig:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: Optional[str]) -> Optional[str]:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base, p)

    paths = raw.get("paths", {})
    items = resolve(_require(paths, "items", "paths"))
    out_dir = resolve(_require(paths, "out_dir", "paths"))
    cache = resolve(paths.get("cache")) or os.path.join(out_dir, "cache.jsonl")

    provider = ProviderConfig(**raw.get("provider", {}))
    if provider.kind not in ("http", "mock"):
        raise ConfigError(f"provider.kind must be 'http' or 'mock', got {provider.kind!r}")
    if provider.mock_fixtures is not None:
        provider.mock_fixtures = resolve(provider.mock_fixtures)

    split_raw = raw.get("split", {})
    split = SplitConfig(
        holdout_fraction=float(_require(split_raw, "holdout_fraction", "split")),
        n_bins=int(split_raw.get("n_bins", 10)),
        seed=int(_require(split_raw, "seed", "split")),
    )
    if not (0.0 <= split.holdout_fraction < 1.0):
        raise ConfigError(
            f"split.holdout_fraction must be in [0, 1), got {split.holdout_fraction}"
        )

    tuning_raw = raw.get("tuning", {})
    tuning = TuningConfig(
        k=int(tuning_raw.get("k", 5)),
        seed=int(_require(tuning_raw, "seed", "tuning")),
        rf=RfConfig(**tuning_raw.get("rf", {})),
        gbm_grid=tuning_raw.get("gbm_grid"),
        reg_lambda=float(tuning_raw.get("reg_lambda", 1.0)),
    )
    if tuning.k < 2:
        raise ConfigError(f"tuning.k must be >= 2, got {tuning.k}")

    subjects = raw.get("subjects", ["math", "reading"])
    bad = [s for s in subjects if s not in ("math", "reading")]
    if bad:
        raise ConfigError(f"unknown subject(s) in config: {', '.join(bad)}")

    toggles = Toggles(**raw.get("toggles", {}))

    config = RunConfig(
        items=items,
        out_dir=out_dir,
        cache=cache,
        templates_dir=resolve(paths.get("templates_dir")),
        schemas_dir=resolve(paths.get("schemas_dir")),
        provider=provider,
        split=split,
        tuning=tuning,
        subjects=list(subjects),
        toggles=toggles,
        raw=raw,
    )
    _validate_paths(config)
    return config


def _validate_paths(config: RunConfig) -> None:
    if not os.path.exists(config.items):
        raise ConfigError(f"paths.items does not exist: {config.items}")
    for label, d in (("templates_dir", config.templates_dir),
                     ("schemas_dir", config.schemas_dir)):
        if d is not None and not os.path.isdir(d):
            raise ConfigError(f"paths.{label} is not a directory: {d}")
    if config.provider.mock_fixtures is not None and not os.path.exists(
        config.provider.mock_fixtures
    ):
        raise ConfigError(
            f"provider.mock_fixtures does not exist: {config.provider.mock_fixtures}"
        )
