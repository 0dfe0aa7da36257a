"""Pool loading, summaries, stratified splitting, word counts."""

import csv

import numpy as np
import pytest
from scipy import stats as scipy_stats

from conftest import make_item
from itemdiff.item_pool import (
    Item,
    ItemPool,
    PoolLoadError,
    load_items,
    save_items,
    stratified_split,
    summarize,
    word_count,
)

CSV_HEADER = "id,subject,grade,item_type,prompt_text,stem,options,rasch_difficulty,split\n"


def write_csv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER)
        for row in rows:
            fh.write(row + "\n")


class TestLoadItems:
    def test_round_trip_both_formats(self, tmp_path):
        items = [
            make_item(id="a", options=("1", "2", "3")),
            make_item(id="b", subject="reading", grade=0, options=(),
                      rasch_difficulty=None, stem="Read the story."),
        ]
        pool = ItemPool(items)
        for name in ("pool.csv", "pool.jsonl"):
            path = tmp_path / name
            save_items(pool, path)
            loaded = load_items(path)
            assert [it for it in loaded] == items

    def test_empty_file_with_header(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_csv(path, [])
        assert len(load_items(path)) == 0

    def test_grade_out_of_range(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, ['x,math,7,mc,p,s,1||2,-1.0,'])
        with pytest.raises(PoolLoadError, match="grade out of range"):
            load_items(path)

    def test_parse_failure_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        write_csv(path, ['x,math,3,mc,p,s,1||2,-1.0,', 'y,math,oops,mc,p,s,,,'])
        with pytest.raises(PoolLoadError, match=":3"):
            load_items(path)

    def test_missing_required_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,subject,grade\n", encoding="utf-8")
        with pytest.raises(PoolLoadError, match="missing required column"):
            load_items(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "dup.csv"
        write_csv(path, ['x,math,3,mc,p,s,,-1.0,', 'x,math,4,mc,p,s,,-0.5,'])
        with pytest.raises(PoolLoadError, match="duplicate item id"):
            load_items(path)

    def test_large_pool_count(self, tmp_path):
        path = tmp_path / "big.csv"
        write_csv(path, [f"r{i},reading,{i % 6},mc,p,s,a||b,{-2 + i * 0.001},"
                         for i in range(2606)])
        pool = load_items(path)
        assert len(pool) == 2606
        assert all(it.subject == "reading" for it in pool)


class TestSummarize:
    def test_hand_computed_means(self):
        diffs = [-2.0, -1.0, 0.0, 1.0, 2.0, -3.0, -1.5, 0.5, 1.5, 3.0]
        pool = ItemPool(
            make_item(id=f"i{k}", grade=1, rasch_difficulty=d, split="train")
            for k, d in enumerate(diffs)
        )
        summary = summarize(pool)
        assert len(summary.rows) == 1
        row = summary.rows[0]
        assert row.count == 10
        assert row.mean_difficulty == pytest.approx(sum(diffs) / 10)
        assert row.min_difficulty == -3.0
        assert row.max_difficulty == 3.0

    def test_single_item_sd_zero(self):
        pool = ItemPool([make_item(rasch_difficulty=0.7, split="test")])
        row = summarize(pool).rows[0]
        assert row.count == 1
        assert row.sd_difficulty == 0.0

    def test_counts_sum_to_pool_size(self):
        rng = np.random.default_rng(5)
        pool = ItemPool(
            make_item(
                id=f"i{k}",
                subject="math" if k % 2 else "reading",
                grade=int(rng.integers(0, 6)),
                rasch_difficulty=float(rng.normal()),
                split=("train", "test")[k % 3 == 0],
            )
            for k in range(97)
        )
        assert summarize(pool).total_count() == 97

    def test_missing_difficulty_flagged(self):
        pool = ItemPool([
            make_item(id="a", rasch_difficulty=None),
            make_item(id="b", rasch_difficulty=-1.0),
        ])
        row = summarize(pool).rows[0]
        assert row.count == 2
        assert row.n_missing == 1


class TestStratifiedSplit:
    def make_uniform_pool(self, n, seed=0, grade=2):
        rng = np.random.default_rng(seed)
        return ItemPool(
            make_item(id=f"u{k}", grade=grade, rasch_difficulty=float(d))
            for k, d in enumerate(rng.uniform(-3, 3, size=n))
        )

    def test_fraction_zero_all_train(self):
        pool = self.make_uniform_pool(50)
        out = stratified_split(pool, 0.0, n_bins=10, seed=1)
        assert all(it.split == "train" for it in out)

    def test_each_bin_contributes_exactly(self):
        # 100 items, 10 bins, fraction 0.2 -> 2 test items from each rank bin.
        pool = self.make_uniform_pool(100, seed=3)
        out = stratified_split(pool, 0.2, n_bins=10, seed=9)
        ordered = sorted(out, key=lambda it: it.rasch_difficulty)
        for b in range(10):
            chunk = ordered[b * 10:(b + 1) * 10]
            assert sum(it.split == "test" for it in chunk) == 2

    def test_partition_property(self):
        pool = self.make_uniform_pool(83, seed=4)
        out = stratified_split(pool, 0.23, n_bins=10, seed=2)
        assert {it.split for it in out} <= {"train", "test"}
        assert len(out) == len(pool)
        assert set(out.ids()) == set(pool.ids())

    def test_deterministic(self):
        pool = self.make_uniform_pool(120, seed=6)
        a = stratified_split(pool, 0.23, n_bins=10, seed=5)
        b = stratified_split(pool, 0.23, n_bins=10, seed=5)
        assert [(it.id, it.split) for it in a] == [(it.id, it.split) for it in b]
        c = stratified_split(pool, 0.23, n_bins=10, seed=6)
        assert [(it.id, it.split) for it in a] != [(it.id, it.split) for it in c]

    def test_holdout_size_close_to_fraction(self):
        rng = np.random.default_rng(8)
        pool = ItemPool(
            make_item(id=f"r{k}", subject="reading", grade=int(rng.integers(0, 6)),
                      rasch_difficulty=float(rng.normal(-1, 1.2)))
            for k in range(2606)
        )
        out = stratified_split(pool, 0.23, n_bins=10, seed=11)
        n_test = len(out.subset(split="test"))
        assert abs(n_test - round(0.23 * 2606)) <= 30

    def test_ks_statistic_between_train_and_test(self):
        pool = self.make_uniform_pool(240, seed=10)
        out = stratified_split(pool, 0.25, n_bins=10, seed=3)
        train = [it.rasch_difficulty for it in out.subset(split="train")]
        test = [it.rasch_difficulty for it in out.subset(split="test")]
        ks = scipy_stats.ks_2samp(train, test).statistic
        assert ks <= 0.15

    def test_missing_difficulty_rejected(self):
        pool = ItemPool([make_item(id="a", rasch_difficulty=None),
                         make_item(id="b", rasch_difficulty=1.0)])
        with pytest.raises(ValueError, match="lack rasch_difficulty"):
            stratified_split(pool, 0.2, seed=0)

    def test_fraction_out_of_range(self):
        pool = self.make_uniform_pool(10)
        with pytest.raises(ValueError, match="holdout_fraction"):
            stratified_split(pool, 1.0, seed=0)


class TestWordCount:
    def test_empty_content(self):
        item = make_item(prompt_text="", stem="", options=())
        assert word_count(item) == 0

    def test_manual_token_count(self):
        item = make_item(prompt_text="", stem="What is 2 + 2?", options=("3", "4"))
        assert word_count(item) == 7

    def test_whitespace_normalization(self):
        a = make_item(prompt_text="", stem="a  b\n\nc\td", options=())
        b = make_item(prompt_text="", stem="a b c d", options=())
        assert word_count(a) == word_count(b) == 4


class TestItemValidation:
    def test_unknown_subject(self):
        with pytest.raises(ValueError, match="unknown subject"):
            make_item(subject="science")

    def test_grade_bounds(self):
        with pytest.raises(ValueError, match="grade out of range"):
            make_item(grade=-1)
        with pytest.raises(ValueError, match="grade out of range"):
            make_item(grade=6)
