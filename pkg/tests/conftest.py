"""Shared fixtures: item builders and disposable CLI workspaces."""

from __future__ import annotations

import json
import os

import pytest

from itemdiff.cli import main
from itemdiff.item_pool import Item, save_items
from itemdiff.synthetic import generate_pool, merge_pools, write_fixtures


def make_item(
    id="m-1",
    subject="math",
    grade=3,
    item_type="multiple_choice",
    prompt_text="Solve the problem.",
    stem="What is 2 + 2?",
    options=("3", "4"),
    rasch_difficulty=-1.0,
    split="unassigned",
) -> Item:
    return Item(
        id=id,
        subject=subject,
        grade=grade,
        item_type=item_type,
        prompt_text=prompt_text,
        stem=stem,
        options=options,
        rasch_difficulty=rasch_difficulty,
        split=split,
    )


DEFAULT_TUNING = {
    "k": 3,
    "seed": 29,
    "rf": {"n_trees": 30, "min_node_size": 5, "mtry_values": [3, 5]},
    "gbm_grid": {
        "nrounds": [40],
        "max_depth": [3],
        "eta": [0.1],
        "gamma": [0],
        "colsample_bytree": [1.0],
        "min_child_weight": [1],
        "subsample": [1.0],
    },
}


class Workspace:
    """A temp directory holding a synthetic pool, fixtures, and a config."""

    def __init__(
        self,
        root,
        n_per_subject=120,
        seed=7,
        subjects=("math", "reading"),
        direct_mode="affine",
        split=None,
        tuning=None,
        toggles=None,
        n_bins=4,
    ):
        self.root = str(root)
        merged = merge_pools(
            *(generate_pool(s, n_per_subject, seed, direct_mode=direct_mode)
              for s in subjects)
        )
        self.pool = merged.pool
        self.items_path = os.path.join(self.root, "items.csv")
        self.fixtures_path = os.path.join(self.root, "fixtures.json")
        save_items(self.pool, self.items_path)
        write_fixtures(merged.fixtures, self.fixtures_path)
        self.out_dir = os.path.join(self.root, "out")
        self.config = {
            "paths": {"items": "items.csv", "out_dir": "out"},
            "provider": {"kind": "mock", "mock_fixtures": "fixtures.json"},
            "split": split or {"holdout_fraction": 0.23, "n_bins": n_bins, "seed": 13},
            "tuning": tuning or DEFAULT_TUNING,
            "subjects": list(subjects),
            "toggles": toggles or {"direct": True, "features": True},
        }
        self.config_path = os.path.join(self.root, "config.json")
        self.write_config()

    def write_config(self) -> None:
        with open(self.config_path, "w", encoding="utf-8") as fh:
            json.dump(self.config, fh, indent=1)

    def run(self, *argv: str) -> int:
        return main([*argv, "--config", self.config_path])

    def out(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def read_bytes(self, name: str) -> bytes:
        with open(self.out(name), "rb") as fh:
            return fh.read()


@pytest.fixture
def workspace_factory(tmp_path):
    counter = [0]

    def factory(**kwargs) -> Workspace:
        counter[0] += 1
        root = tmp_path / f"ws{counter[0]}"
        root.mkdir()
        return Workspace(root, **kwargs)

    return factory
