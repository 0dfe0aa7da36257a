"""Command-line orchestrator for the seven-step workflow.

Subcommands: ingest, split, extract, calibrate, train, evaluate, report,
predict, run-all.  Every command is deterministic given an unchanged
cache and config; the manifest plus the cache reproduce all numeric
outputs exactly.

Exit codes: 0 success, 2 validation/config failure, 3 partial LLM
failure (some items failed extraction), 4 provider failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .artifacts import (
    read_features,
    read_predictions,
    read_ratings,
    write_dropped_report,
    write_errors,
    write_features,
    write_predictions,
    write_ratings,
)
from .calibration import (
    fit_ols,
    fit_rescale,
    format_p,
    predict_calibrated,
    rescale,
)
from .config import ConfigError, RunConfig, load_config
from .evaluation import build_report, dummy_predict
from .feature_matrix import (
    DesignMatrix,
    assemble,
    item_type_column,
    near_zero_variance_filter,
    select_columns,
)
from .item_pool import (
    ItemPool,
    PoolLoadError,
    grade_label,
    load_items,
    save_items,
    summarize,
)
from .llm import (
    MockProvider,
    HttpProvider,
    ParseError,
    PromptError,
    ProviderError,
    ResponseCache,
    build_direct_prompt,
    build_feature_prompt,
    builtin_schema,
    builtin_template,
    load_schema,
    load_template,
    parse_direct,
    parse_features,
    run_requests,
)
from .manifest import Manifest, append_run_log
from .model_selection import (
    Grid,
    fit_seed,
    grid_search,
    mtry_candidates,
    paper_gbm_grid,
)
from .plots import scatter_plot
from .tabletext import format_table
from .tree_ensembles import (
    ColumnMismatchError,
    GbmParams,
    fit_gbm,
    fit_random_forest,
    load_model,
    save_model,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARTIAL_LLM = 3
EXIT_PROVIDER = 4

SPLIT_FILE = "items_split.csv"
RATINGS_FILE = "ratings.csv"
LOCK_FILE = ".lock"

_SUBJECT_TAG = {"math": 0, "reading": 1}
_MODEL_TAG = {"rf": 0, "gbm": 1}


class ValidationError(ValueError):
    """Pipeline-level precondition failure (exit code 2)."""


@contextlib.contextmanager
def _lock(out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, LOCK_FILE)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"output directory is locked by another run; remove {path} if stale"
        )
    try:
        os.write(fd, f"pid {os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.remove(path)


def _provider(config: RunConfig):
    p = config.provider
    if p.kind == "mock":
        return MockProvider(
            fixtures=p.mock_fixtures, fallback_seed=p.mock_fallback_seed
        )
    return HttpProvider(base_url=p.base_url, api_key_env=p.api_key_env)


def _template(config: RunConfig, kind: str, subject: str):
    if config.templates_dir:
        return load_template(os.path.join(config.templates_dir, f"{kind}_{subject}.json"))
    return builtin_template(kind, subject)


def _schema(config: RunConfig, subject: str):
    if config.schemas_dir:
        return load_schema(os.path.join(config.schemas_dir, f"{subject}.json"))
    return builtin_schema(subject)


def _config_snapshot(config: RunConfig) -> dict:
    snap = dataclasses.asdict(config)
    snap.pop("raw", None)
    return snap


def _pool_for_extraction(config: RunConfig) -> ItemPool:
    split_path = os.path.join(config.out_dir, SPLIT_FILE)
    source = split_path if os.path.exists(split_path) else config.items
    pool = load_items(source)
    return ItemPool(it for it in pool if it.subject in config.subjects)


def _split_pool(config: RunConfig) -> ItemPool:
    split_path = os.path.join(config.out_dir, SPLIT_FILE)
    if not os.path.exists(split_path):
        raise ValidationError(f"{SPLIT_FILE} not found in {config.out_dir}; run 'split' first")
    pool = load_items(split_path)
    pool = ItemPool(it for it in pool if it.subject in config.subjects)
    unassigned = [it.id for it in pool if it.split == "unassigned"]
    if unassigned:
        raise ValidationError(
            f"{len(unassigned)} item(s) in {SPLIT_FILE} have no split assignment"
        )
    return pool


def _assert_no_leakage(pool: ItemPool) -> None:
    train_ids = {it.id for it in pool if it.split == "train"}
    test_ids = {it.id for it in pool if it.split == "test"}
    if train_ids & test_ids:
        raise ValidationError(
            f"train/holdout overlap detected: {sorted(train_ids & test_ids)[:5]}"
        )


def _subject_seed(seed: int, subject: str, model: str) -> int:
    ss = np.random.SeedSequence(
        [seed & 0xFFFFFFFFFFFFFFFF, _SUBJECT_TAG[subject], _MODEL_TAG[model]]
    )
    return int(ss.generate_state(1)[0])


def _write_summary(pool: ItemPool, out_dir: str, manifest: Manifest) -> None:
    summary = summarize(pool)
    csv_path = os.path.join(out_dir, "pool_summary.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["subject", "grade", "split", "count", "n_missing",
             "mean_difficulty", "sd_difficulty", "min_difficulty", "max_difficulty"]
        )
        for r in summary.rows:
            writer.writerow([
                r.subject, grade_label(r.grade), r.split, r.count, r.n_missing,
                *("" if v is None else repr(v)
                  for v in (r.mean_difficulty, r.sd_difficulty,
                            r.min_difficulty, r.max_difficulty)),
            ])
    txt_path = os.path.join(out_dir, "pool_summary.txt")
    body = []
    for r in summary.rows:
        flags = []
        if r.count == 1:
            flags.append("n=1")
        if r.n_missing:
            flags.append(f"{r.n_missing} missing difficulty")
        body.append([
            r.subject, grade_label(r.grade), r.split, str(r.count),
            "" if r.mean_difficulty is None else f"{r.mean_difficulty:.2f}",
            "" if r.sd_difficulty is None else f"{r.sd_difficulty:.2f}",
            "" if r.min_difficulty is None else f"{r.min_difficulty:.2f}",
            "" if r.max_difficulty is None else f"{r.max_difficulty:.2f}",
            ", ".join(flags),
        ])
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(format_table(
            ["subject", "grade", "split", "count", "mean", "sd", "min", "max", "flags"],
            body,
        ))
    manifest.record_artifact("pool_summary.csv")
    manifest.record_artifact("pool_summary.txt")


def cmd_ingest(config: RunConfig, manifest: Manifest, args) -> int:
    pool = load_items(config.items)
    pool = ItemPool(it for it in pool if it.subject in config.subjects)
    if len(pool) == 0:
        raise ValidationError("item pool is empty after subject filtering")
    _write_summary(pool, config.out_dir, manifest)
    print(f"ingested {len(pool)} items "
          f"({', '.join(s + ': ' + str(len(pool.subset(subject=s))) for s in pool.subjects())})")
    return EXIT_OK


def cmd_split(config: RunConfig, manifest: Manifest, args) -> int:
    from .item_pool import stratified_split

    pool = load_items(config.items)
    pool = ItemPool(it for it in pool if it.subject in config.subjects)
    assigned = stratified_split(
        pool,
        holdout_fraction=config.split.holdout_fraction,
        n_bins=config.split.n_bins,
        seed=config.split.seed,
    )
    split_path = os.path.join(config.out_dir, SPLIT_FILE)
    save_items(assigned, split_path)
    manifest.record_artifact(SPLIT_FILE)
    manifest.set_section(
        "split",
        {
            "holdout_fraction": config.split.holdout_fraction,
            "n_bins": config.split.n_bins,
            "seed": config.split.seed,
            "n_train": len(assigned.subset(split="train")),
            "n_test": len(assigned.subset(split="test")),
        },
    )
    _write_summary(assigned, config.out_dir, manifest)
    print(f"split {len(assigned)} items: "
          f"{len(assigned.subset(split='train'))} train, "
          f"{len(assigned.subset(split='test'))} test")
    return EXIT_OK


def cmd_extract(config: RunConfig, manifest: Manifest, args) -> int:
    mode = args.mode
    pool = _pool_for_extraction(config)
    provider = _provider(config)
    cache = ResponseCache(config.cache)
    errors: list[tuple[str, str, str]] = []

    prompts: dict[str, str] = {}
    schemas = {s: _schema(config, s) for s in config.subjects}
    for item in pool:
        try:
            if mode == "direct":
                prompts[item.id] = build_direct_prompt(item, _template(config, "direct", item.subject))
            else:
                prompts[item.id] = build_feature_prompt(
                    item, schemas[item.subject], _template(config, "features", item.subject)
                )
        except PromptError as exc:
            errors.append((item.id, "prompt", str(exc)))

    responses, request_errors = run_requests(
        prompts,
        provider,
        model_id=config.provider.model_id,
        temperature=config.provider.temperature,
        cache=cache,
        retries=config.provider.retries,
        concurrency=config.provider.concurrency,
    )
    errors.extend((item_id, "request", msg) for item_id, msg in request_errors)

    if prompts and not responses:
        write_errors(errors, os.path.join(config.out_dir, f"extract_errors_{mode}.csv"))
        print(f"extract {mode}: all {len(prompts)} requests failed", file=sys.stderr)
        return EXIT_PROVIDER

    if mode == "direct":
        ratings: dict[str, int] = {}
        for item_id, response in responses.items():
            try:
                ratings[item_id] = parse_direct(response)
            except ParseError as exc:
                errors.append((item_id, "parse", str(exc)))
        write_ratings(ratings, os.path.join(config.out_dir, RATINGS_FILE))
        manifest.record_artifact(RATINGS_FILE)
        print(f"extract direct: {len(ratings)} ratings, {len(errors)} failure(s)")
    else:
        by_subject: dict[str, dict[str, dict[str, int]]] = {s: {} for s in config.subjects}
        for item in pool:
            if item.id not in responses:
                continue
            try:
                vec = parse_features(responses[item.id], schemas[item.subject], item_id=item.id)
            except ParseError as exc:
                errors.append((item.id, "parse", str(exc)))
                continue
            by_subject[item.subject][item.id] = dict(vec.values)
        for subject in config.subjects:
            values = by_subject[subject]
            if not values:
                continue
            name = f"features_{subject}.csv"
            write_features(values, schemas[subject], os.path.join(config.out_dir, name))
            manifest.record_artifact(name)
            dropped = _variability_report(values, schemas[subject])
            report_name = f"dropped_features_{subject}.csv"
            write_dropped_report(dropped, os.path.join(config.out_dir, report_name))
            manifest.record_artifact(report_name)
            print(f"extract features [{subject}]: {len(values)} vectors, "
                  f"{len(dropped)} low-variability feature(s)")

    if errors:
        name = f"extract_errors_{mode}.csv"
        write_errors(errors, os.path.join(config.out_dir, name))
        manifest.record_artifact(name)
        print(f"extract {mode}: {len(errors)} item(s) failed; see {name}", file=sys.stderr)
        return EXIT_PARTIAL_LLM
    return EXIT_OK


def _variability_report(values_by_id, schema) -> list[tuple[str, str]]:
    """Near-zero-variance review of the raw schema answers (workflow step 5)."""
    keys = schema.feature_keys(include_overall=True)
    ids = sorted(values_by_id)
    grid = np.array([[values_by_id[i][k] for k in keys] for i in ids], dtype=np.float64)
    matrix = DesignMatrix(item_ids=tuple(ids), column_names=tuple(keys), values=grid)
    return list(near_zero_variance_filter(matrix).dropped_columns)


def cmd_calibrate(config: RunConfig, manifest: Manifest, args) -> int:
    pool = _split_pool(config)
    _assert_no_leakage(pool)
    ratings_path = os.path.join(config.out_dir, RATINGS_FILE)
    if not os.path.exists(ratings_path):
        raise ValidationError(f"{RATINGS_FILE} not found; run 'extract --mode direct' first")
    ratings = read_ratings(ratings_path)

    coeff_rows = []
    calibration_section: dict = {}
    predictions: dict[str, float] = {}
    for subject in config.subjects:
        train = list(pool.subset(subject=subject, split="train"))
        test = list(pool.subset(subject=subject, split="test"))
        missing = [it.id for it in train + test if it.id not in ratings]
        if missing:
            raise ValidationError(
                f"{len(missing)} item(s) lack direct ratings (e.g. "
                f"{', '.join(missing[:5])}); re-run extract"
            )
        entry: dict = {"rescale": {}, "models": {}, "skipped": {}}

        def params_for(grade: Optional[int]):
            members = [it for it in train if grade is None or it.grade == grade]
            raw = [float(ratings[it.id]) for it in members]
            target = [it.rasch_difficulty for it in members]
            return fit_rescale(raw, target)

        if config.toggles.per_grade_rescale:
            grade_params = {}
            for grade in sorted({it.grade for it in train}):
                try:
                    grade_params[grade] = params_for(grade)
                except ValueError as exc:
                    entry["skipped"][grade_label(grade)] = f"rescale: {exc}"
            entry["rescale"] = {
                "per_grade": {grade_label(g): dataclasses.asdict(p)
                              for g, p in grade_params.items()}
            }

            def rescaler(grade: int):
                return grade_params.get(grade)
        else:
            pooled = params_for(None)
            entry["rescale"] = {"pooled": dataclasses.asdict(pooled)}

            def rescaler(grade: int):
                return pooled

        models = {}
        for grade in sorted({it.grade for it in train}):
            params = rescaler(grade)
            label = grade_label(grade)
            if params is None:
                continue
            members = [it for it in train if it.grade == grade]
            if len(members) < 3:
                entry["skipped"][label] = f"only {len(members)} training item(s), need 3"
                manifest.add_flag(f"calibration skipped: {subject} grade {label} "
                                  f"({entry['skipped'][label]})")
                continue
            x = rescale(params, [float(ratings[it.id]) for it in members])
            y = [it.rasch_difficulty for it in members]
            try:
                model = fit_ols(x, y, subject=subject, grade=grade)
            except ValueError as exc:
                entry["skipped"][label] = str(exc)
                manifest.add_flag(f"calibration skipped: {subject} grade {label} ({exc})")
                continue
            models[grade] = model
            entry["models"][label] = {
                "beta0": model.beta0,
                "beta1": model.beta1,
                "n": model.n,
                "r2": model.r2,
                "r2_adj": model.r2_adj,
                "f_stat": model.f_stat if np.isfinite(model.f_stat) else None,
                "df": list(model.df),
                "p_value": model.p_value,
                "significant": model.significant,
            }
            if not model.significant:
                manifest.add_flag(
                    f"calibration not significant: {subject} grade {label} "
                    f"(p={format_p(model.p_value)})"
                )
            coeff_rows.append((subject, grade, model))

        for item in test:
            model = models.get(item.grade)
            params = rescaler(item.grade)
            if model is None or params is None:
                continue
            x = rescale(params, [float(ratings[item.id])])
            predictions[item.id] = predict_calibrated(model, x)[0]
        calibration_section[subject] = entry

    _write_coefficients(coeff_rows, config.out_dir)
    manifest.record_artifact("calibration_coefficients.csv")
    manifest.record_artifact("calibration_coefficients.txt")
    write_predictions(predictions, os.path.join(config.out_dir, "predictions_direct.csv"))
    manifest.record_artifact("predictions_direct.csv")
    manifest.set_section("calibration", calibration_section)
    print(f"calibrated {len(coeff_rows)} (subject, grade) model(s); "
          f"{len(predictions)} holdout prediction(s)")
    return EXIT_OK


def _write_coefficients(rows, out_dir: str) -> None:
    csv_path = os.path.join(out_dir, "calibration_coefficients.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject", "grade", "n", "beta0", "beta1", "f_stat",
                         "df1", "df2", "p_value", "r2", "r2_adj", "significant"])
        for subject, grade, m in rows:
            writer.writerow([
                subject, grade_label(grade), m.n, repr(m.beta0), repr(m.beta1),
                repr(m.f_stat), m.df[0], m.df[1], repr(m.p_value),
                repr(m.r2), repr(m.r2_adj), int(m.significant),
            ])
    txt_path = os.path.join(out_dir, "calibration_coefficients.txt")
    body = []
    for subject, grade, m in rows:
        omnibus = f"F({m.df[0]},{m.df[1]}) = {m.f_stat:.2f}, p {'<' if m.p_value < 0.001 else '='} " + (
            ".001" if m.p_value < 0.001 else f"{m.p_value:.3f}"
        )
        body.append([subject, grade_label(grade), f"{m.beta0:.2f}", f"{m.beta1:.2f}",
                     omnibus, f"{m.r2_adj:.3f}", "" if m.significant else "ns"])
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(format_table(
            ["subject", "grade", "b0", "b1", "omnibus test", "R2(adj.)", "flag"], body
        ))


def _trainers(config: RunConfig, model_name: str):
    rf_conf = config.tuning.rf

    def rf_trainer(X, y, cfg, seed):
        return fit_random_forest(
            X, y,
            n_trees=rf_conf.n_trees,
            mtry=cfg["mtry"],
            min_node_size=rf_conf.min_node_size,
            seed=seed,
        )

    def gbm_trainer(X, y, cfg, seed):
        return fit_gbm(X, y, GbmParams(**cfg, reg_lambda=config.tuning.reg_lambda), seed=seed)

    return rf_trainer if model_name == "rf" else gbm_trainer


def cmd_train(config: RunConfig, manifest: Manifest, args) -> int:
    model_name = args.model
    pool = _split_pool(config)
    _assert_no_leakage(pool)

    for subject in config.subjects:
        features_path = os.path.join(config.out_dir, f"features_{subject}.csv")
        if not os.path.exists(features_path):
            raise ValidationError(
                f"features_{subject}.csv not found; run 'extract --mode features' first"
            )
        features = read_features(features_path)
        schema = _schema(config, subject)
        train_items = list(pool.subset(subject=subject, split="train"))
        if len(train_items) < config.tuning.k:
            raise ValidationError(
                f"{subject}: {len(train_items)} training items < k={config.tuning.k}"
            )
        missing_y = [it.id for it in train_items if it.rasch_difficulty is None]
        if missing_y:
            raise ValidationError(
                f"{subject}: {len(missing_y)} training item(s) lack difficulties"
            )

        matrix = assemble(
            train_items,
            {it.id: features[it.id] for it in train_items if it.id in features},
            schema,
            include_overall_rating=config.toggles.include_overall_rating_feature,
        )
        filtered = near_zero_variance_filter(matrix)
        y = np.array([it.rasch_difficulty for it in train_items])

        if model_name == "rf":
            values = config.tuning.rf.mtry_values or mtry_candidates(filtered.n_cols)
            grid = Grid.from_dict({"mtry": values})
        else:
            grid = (Grid.from_dict(config.tuning.gbm_grid)
                    if config.tuning.gbm_grid else paper_gbm_grid())

        seed = _subject_seed(config.tuning.seed, subject, model_name)
        table = grid_search(
            grid, _trainers(config, model_name), filtered.values, y,
            k=config.tuning.k, seed=seed,
        )
        cv_name = f"cv_{model_name}_{subject}.csv"
        table.to_csv(os.path.join(config.out_dir, cv_name))
        manifest.record_artifact(cv_name)

        best = table.best_config
        refit_seed = fit_seed(seed, table.best_index, config.tuning.k)
        if model_name == "rf":
            model = fit_random_forest(
                filtered, y,
                n_trees=config.tuning.rf.n_trees,
                mtry=best["mtry"],
                min_node_size=config.tuning.rf.min_node_size,
                seed=refit_seed,
            )
            params_info = {
                "n_trees": config.tuning.rf.n_trees,
                "mtry": best["mtry"],
                "min_node_size": config.tuning.rf.min_node_size,
            }
        else:
            model = fit_gbm(
                filtered, y,
                GbmParams(**best, reg_lambda=config.tuning.reg_lambda),
                seed=refit_seed,
            )
            params_info = {**best, "reg_lambda": config.tuning.reg_lambda}

        model_file = f"model_{model_name}_{subject}.json"
        save_model(model, os.path.join(config.out_dir, model_file))
        manifest.record_artifact(model_file)
        manifest.update_section("models", {
            f"{model_name}_{subject}": {
                "best_config": best,
                "params": params_info,
                "cv_mean_rmse": table.rows[table.best_index].mean_rmse,
                "n_configs": len(table.rows),
                "k": config.tuning.k,
                "seed": seed,
                "columns": list(filtered.column_names),
            }
        })
        manifest.update_section(
            "dropped_features",
            {subject: [list(d) for d in filtered.dropped_columns]},
        )
        print(f"train {model_name} [{subject}]: {len(table.rows)} config(s), "
              f"best CV RMSE {table.rows[table.best_index].mean_rmse:.4f}, "
              f"model -> {model_file}")
    return EXIT_OK


def _feature_predictions(config: RunConfig, pool: ItemPool, subject: str,
                         model_name: str, items: list) -> dict[str, float]:
    model = load_model(os.path.join(config.out_dir, f"model_{model_name}_{subject}.json"))
    features = read_features(os.path.join(config.out_dir, f"features_{subject}.csv"))
    missing = [it.id for it in items if it.id not in features]
    if missing:
        raise ValidationError(
            f"{subject}: {len(missing)} item(s) lack feature vectors "
            f"(e.g. {', '.join(missing[:5])})"
        )
    schema = _schema(config, subject)
    prefix = "item_type="
    levels = [c[len(prefix):] for c in model.column_names if c.startswith(prefix)]
    full = assemble(
        items,
        {it.id: features[it.id] for it in items},
        schema,
        include_overall_rating=config.toggles.include_overall_rating_feature,
        item_type_levels=levels,
    )
    matrix = select_columns(full, model.column_names)
    preds = model.predict(matrix)
    return dict(zip(full.item_ids, (float(v) for v in preds)))


def cmd_evaluate(config: RunConfig, manifest: Manifest, args) -> int:
    pool = _split_pool(config)
    _assert_no_leakage(pool)
    test_items = [it for it in pool if it.split == "test"]
    if not test_items:
        raise ValidationError("holdout is empty; nothing to evaluate")
    missing_y = [it.id for it in test_items if it.rasch_difficulty is None]
    if missing_y:
        raise ValidationError(
            f"{len(missing_y)} holdout item(s) lack true difficulties; "
            "use 'predict' for unlabeled pools"
        )
    truth = {it.id: it.rasch_difficulty for it in test_items}
    groups = {it.id: (it.subject, it.grade) for it in test_items}

    train_by_group: dict = {}
    for it in pool:
        if it.split == "train":
            train_by_group.setdefault((it.subject, it.grade), []).append(it.rasch_difficulty)
    dummy = dummy_predict(train_by_group, [(it.subject, it.grade) for it in test_items])
    methods: dict[str, dict[str, float]] = {
        "dummy": dict(zip((it.id for it in test_items), map(float, dummy)))
    }

    if config.toggles.features:
        for model_name in ("rf", "gbm"):
            preds: dict[str, float] = {}
            available = True
            for subject in config.subjects:
                path = os.path.join(config.out_dir, f"model_{model_name}_{subject}.json")
                if not os.path.exists(path):
                    available = False
                    break
                subject_items = [it for it in test_items if it.subject == subject]
                preds.update(
                    _feature_predictions(config, pool, subject, model_name, subject_items)
                )
            if available:
                methods[model_name] = preds
                name = f"predictions_{model_name}.csv"
                write_predictions(preds, os.path.join(config.out_dir, name))
                manifest.record_artifact(name)

    if config.toggles.direct:
        direct_path = os.path.join(config.out_dir, "predictions_direct.csv")
        if os.path.exists(direct_path):
            direct = read_predictions(direct_path)
            if set(direct) >= set(truth):
                methods["direct"] = {i: direct[i] for i in truth}
            else:
                manifest.add_flag(
                    "direct predictions do not cover the holdout; "
                    "direct method excluded from the report"
                )

    if set(methods) == {"dummy"}:
        raise ValidationError("no trained method available to evaluate; run train/calibrate")

    report = build_report(methods, truth, groups)
    report.to_csv(os.path.join(config.out_dir, "eval_report.csv"))
    manifest.record_artifact("eval_report.csv")
    print(f"evaluated methods: {', '.join(sorted(methods))} "
          f"over {len(test_items)} holdout items")
    return EXIT_OK


def cmd_report(config: RunConfig, manifest: Manifest, args) -> int:
    pool = _split_pool(config)
    test_items = [it for it in pool if it.split == "test"]
    truth = {it.id: it.rasch_difficulty for it in test_items}
    groups = {it.id: (it.subject, it.grade) for it in test_items}

    train_by_group: dict = {}
    for it in pool:
        if it.split == "train":
            train_by_group.setdefault((it.subject, it.grade), []).append(it.rasch_difficulty)
    dummy = dummy_predict(train_by_group, [(it.subject, it.grade) for it in test_items])
    methods: dict[str, dict[str, float]] = {
        "dummy": dict(zip((it.id for it in test_items), map(float, dummy)))
    }
    for method in ("direct", "rf", "gbm"):
        path = os.path.join(config.out_dir, f"predictions_{method}.csv")
        if os.path.exists(path):
            preds = read_predictions(path)
            if set(preds) >= set(truth):
                methods[method] = {i: preds[i] for i in truth}

    report = build_report(methods, truth, groups)
    with open(os.path.join(config.out_dir, "eval_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.render_text())
    manifest.record_artifact("eval_report.txt")

    plots_dir = os.path.join(config.out_dir, "plots")
    os.makedirs(plots_dir, exist_ok=True)
    for subject in config.subjects:
        subj_items = [it for it in test_items if it.subject == subject]
        if not subj_items:
            continue
        facets = [("overall", subj_items)]
        facets += [
            (f"grade{grade_label(g)}",
             [it for it in subj_items if it.grade == g])
            for g in sorted({it.grade for it in subj_items})
        ]
        for method in methods:
            if method == "dummy":
                continue
            for facet_name, facet_items in facets:
                pred = [methods[method][it.id] for it in facet_items]
                t = [truth[it.id] for it in facet_items]
                name = f"scatter_{subject}_{method}_{facet_name}.svg"
                scatter_plot(pred, t, os.path.join(plots_dir, name),
                             title=f"{subject} / {method} / {facet_name}")
                manifest.record_artifact(f"plots/{name}")
    print("report written: eval_report.txt, plots/")
    return EXIT_OK


def cmd_predict(config: RunConfig, manifest: Manifest, args) -> int:
    pool = load_items(config.items)
    pool = ItemPool(it for it in pool if it.subject in config.subjects)
    if len(pool) == 0:
        raise ValidationError("item pool is empty after subject filtering")
    items = list(pool)

    columns: dict[str, dict[str, float]] = {}
    if config.toggles.features:
        for model_name in ("rf", "gbm"):
            preds: dict[str, float] = {}
            complete = True
            for subject in config.subjects:
                path = os.path.join(config.out_dir, f"model_{model_name}_{subject}.json")
                if not os.path.exists(path):
                    complete = False
                    break
                subject_items = [it for it in items if it.subject == subject]
                if subject_items:
                    preds.update(_feature_predictions(
                        config, pool, subject, model_name, subject_items
                    ))
            if complete:
                columns[model_name] = preds

    if config.toggles.direct:
        calibration = manifest.data.get("calibration", {})
        ratings_path = os.path.join(config.out_dir, RATINGS_FILE)
        if calibration and os.path.exists(ratings_path):
            ratings = read_ratings(ratings_path)
            direct: dict[str, float] = {}
            for item in items:
                entry = calibration.get(item.subject)
                if entry is None or item.id not in ratings:
                    continue
                label = grade_label(item.grade)
                model = entry.get("models", {}).get(label)
                if model is None:
                    continue
                rs = entry.get("rescale", {})
                p = rs.get("pooled") or rs.get("per_grade", {}).get(label)
                if p is None:
                    continue
                x = ((ratings[item.id] - p["mu_gpt"]) / p["sigma_gpt"]
                     * p["sigma_rasch"] + p["mu_rasch"])
                direct[item.id] = model["beta0"] + model["beta1"] * x
            if direct:
                columns["direct"] = direct

    if not columns:
        raise ValidationError("no trained models available; run train/calibrate first")

    out_path = os.path.join(config.out_dir, "predictions.csv")
    method_names = [m for m in ("direct", "rf", "gbm") if m in columns]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "subject", "grade"] + method_names)
        for item in items:
            row = [item.id, item.subject, grade_label(item.grade)]
            for m in method_names:
                v = columns[m].get(item.id)
                row.append("" if v is None else repr(v))
            writer.writerow(row)
    manifest.record_artifact("predictions.csv")
    print(f"wrote predictions for {len(items)} items ({', '.join(method_names)})")
    return EXIT_OK


def cmd_run_all(config: RunConfig, manifest: Manifest, args) -> int:
    steps: list[tuple[str, object, object]] = [("ingest", cmd_ingest, args),
                                               ("split", cmd_split, args)]
    if config.toggles.direct:
        steps.append(("extract direct", cmd_extract, _with(args, mode="direct")))
    if config.toggles.features:
        steps.append(("extract features", cmd_extract, _with(args, mode="features")))
    if config.toggles.direct:
        steps.append(("calibrate", cmd_calibrate, args))
    if config.toggles.features:
        steps.append(("train rf", cmd_train, _with(args, model="rf")))
        steps.append(("train gbm", cmd_train, _with(args, model="gbm")))
    steps.append(("evaluate", cmd_evaluate, args))
    steps.append(("report", cmd_report, args))

    for name, func, step_args in steps:
        started = time.perf_counter()
        code = func(config, manifest, step_args)
        append_run_log(config.out_dir,
                       f"{name}: exit {code} in {time.perf_counter() - started:.2f}s")
        if code != EXIT_OK:
            print(f"run-all aborted at step '{name}' (exit {code})", file=sys.stderr)
            return code
    return EXIT_OK


def _with(args, **overrides):
    clone = argparse.Namespace(**vars(args))
    for key, value in overrides.items():
        setattr(clone, key, value)
    return clone


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itemdiff",
        description="Estimate assessment-item difficulty from item content.",
    )
    parser.add_argument("--version", action="version", version=f"itemdiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--subject", choices=["math", "reading"],
                       help="restrict the run to one subject")
        p.add_argument("--seed", type=int, help="override split and tuning seeds")
        p.add_argument("--mock", action="store_true",
                       help="force the offline mock provider")
        p.add_argument("--out", help="override the output directory")

    for name in ("ingest", "split", "calibrate", "evaluate", "report", "predict", "run-all"):
        common(sub.add_parser(name))
    p_extract = sub.add_parser("extract")
    common(p_extract)
    p_extract.add_argument("--mode", choices=["direct", "features"], required=True)
    p_train = sub.add_parser("train")
    common(p_train)
    p_train.add_argument("--model", choices=["rf", "gbm"], required=True)
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "split": cmd_split,
    "extract": cmd_extract,
    "calibrate": cmd_calibrate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "predict": cmd_predict,
    "run-all": cmd_run_all,
}


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if args.out:
        config.out_dir = os.path.abspath(args.out)
        config.cache = config.cache or os.path.join(config.out_dir, "cache.jsonl")
    if args.subject:
        config.subjects = [args.subject]
    if args.seed is not None:
        config.split.seed = args.seed
        config.tuning.seed = args.seed
    if args.mock:
        config.provider.kind = "mock"
        if config.provider.mock_fixtures is None and config.provider.mock_fallback_seed is None:
            config.provider.mock_fallback_seed = 0
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    started = time.perf_counter()
    try:
        with _lock(config.out_dir):
            manifest = Manifest.load_or_create(config.out_dir, _config_snapshot(config))
            code = _COMMANDS[args.command](config, manifest, args)
            manifest.save()
            append_run_log(
                config.out_dir,
                f"{args.command}: exit {code} in {time.perf_counter() - started:.2f}s",
            )
            return code
    except (ValidationError, ConfigError, PoolLoadError, ColumnMismatchError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    raise SystemExit(main())
