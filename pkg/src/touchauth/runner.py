"""Experiment orchestration: data preparation, parallel grid search, reports.

Work is split into independent tasks keyed by (user, feature set, family,
slot).  Every random decision inside a task derives from the master seed and
the task key, and results are reduced in canonical key order, so any worker
count (including 1) produces byte-identical report files.  Wall-clock timings
appear only in the run ledger, never in reports.
"""

from __future__ import annotations

import csv
import json
import logging
import pickle
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classifiers, pipeline
from .classifiers import model_io
from .errors import DataInsufficiencyError
from .evaluation import (
    DEFAULT_WINDOWS,
    RANKING_WINDOWS,
    MetricsReport,
    aggregate_report,
)
from .features import (
    FEATURE_SETS,
    FeatureVector,
    clean_nonfinite,
    extract_corpus,
    project_matrix,
)
from .ingest import (
    DIRECTION_CODES,
    Corpus,
    chronological_test_strokes,
    filter_clicks,
    label_directions,
    select_eligible_users,
)
from .pipeline import APPROACH_SLOTS, SLOT_DIRECTIONS, make_cv_plan
from .seeding import derive_seed

logger = logging.getLogger(__name__)

_CODE_TO_DIRECTION = {code: d for d, code in DIRECTION_CODES.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    families: tuple[str, ...] = classifiers.FAMILIES
    schemas: tuple[str, ...] = tuple(FEATURE_SETS)
    approaches: tuple[str, ...] = pipeline.APPROACHES
    windows: tuple[int, ...] = DEFAULT_WINDOWS
    train_per_dir: int = 50
    test_per_dir: int = 30
    workers: int = 1
    save_models: bool = False

    def __post_init__(self):
        for fam in self.families:
            if fam not in classifiers.FAMILIES:
                raise ValueError(f"unknown family {fam!r}")
        for schema in self.schemas:
            if schema not in FEATURE_SETS:
                raise ValueError(f"unknown feature set {schema!r}")
        for approach in self.approaches:
            if approach not in pipeline.APPROACHES:
                raise ValueError(f"unknown approach {approach!r}")
        if not self.windows or min(self.windows) < 1:
            raise ValueError("windows must be positive")

    @property
    def slots(self) -> tuple[str, ...]:
        needed = {slot for a in self.approaches for slot in APPROACH_SLOTS[a]}
        return tuple(s for s in pipeline.SLOTS if s in needed)


@dataclass
class Dataset:
    """Cleaned, selected, and projected experiment data (picklable)."""

    users: tuple[str, ...]
    schemas: tuple[str, ...]
    slots: tuple[str, ...]
    train: dict  # schema -> user -> slot -> matrix
    test: dict  # schema -> user -> matrix over the chronological test stream
    test_direction_codes: dict  # user -> int8 array
    test_timestamps: dict  # user -> int64 array
    counts: dict
    exclusions: dict  # user -> reason


def prepare_dataset(corpus: Corpus, cfg: ExperimentConfig) -> Dataset:
    """Clicks out, features in, non-finite strokes dropped, users selected."""
    n_parsed = len(corpus)
    corpus = filter_clicks(corpus)
    n_after_clicks = len(corpus)
    corpus = label_directions(corpus)

    vectors = extract_corpus(corpus)
    kept = clean_nonfinite(vectors)
    vec_by_key: dict[tuple, FeatureVector] = {
        (fv.user_id, fv.session, fv.swipe_id): fv for fv in kept
    }
    cleaned = Corpus.from_strokes(
        [s for s in corpus.strokes if (s.user_id, s.session, s.swipe_id) in vec_by_key],
        parse_stats=corpus.parse_stats,
    )
    subsets, excluded = select_eligible_users(cleaned, cfg.train_per_dir, cfg.test_per_dir)
    if len(subsets) < 2:
        raise DataInsufficiencyError(
            f"need at least 2 eligible users, found {len(subsets)} "
            f"(quota {cfg.train_per_dir}/{cfg.test_per_dir} per direction)"
        )

    def vectors_for(strokes) -> list[FeatureVector]:
        return [vec_by_key[(s.user_id, s.session, s.swipe_id)] for s in strokes]

    train: dict = {schema: {} for schema in cfg.schemas}
    test: dict = {schema: {} for schema in cfg.schemas}
    test_dirs: dict = {}
    test_ts: dict = {}
    for subset in subsets:
        user = subset.user_id
        test_strokes = chronological_test_strokes(subset)
        test_dirs[user] = np.array([DIRECTION_CODES[s.direction] for s in test_strokes], np.int8)
        test_ts[user] = np.array([s.start_ms for s in test_strokes], np.int64)
        slot_vectors = {
            slot: vectors_for(pipeline.slot_train_strokes(subset, slot)) for slot in cfg.slots
        }
        test_vectors = vectors_for(test_strokes)
        for schema in cfg.schemas:
            train[schema][user] = {
                slot: project_matrix(vecs, schema) for slot, vecs in slot_vectors.items()
            }
            test[schema][user] = project_matrix(test_vectors, schema)

    counts = {
        "strokes_parsed": n_parsed,
        "strokes_after_click_filter": n_after_clicks,
        "strokes_after_cleaning": len(cleaned),
        "clicks_removed": n_parsed - n_after_clicks,
        "nonfinite_dropped": n_after_clicks - len(cleaned),
        "rows_read": corpus.parse_stats.rows_read if corpus.parse_stats else None,
        "rows_bad": corpus.parse_stats.rows_bad if corpus.parse_stats else None,
    }
    return Dataset(
        users=tuple(s.user_id for s in subsets),
        schemas=tuple(cfg.schemas),
        slots=tuple(cfg.slots),
        train=train,
        test=test,
        test_direction_codes=test_dirs,
        test_timestamps=test_ts,
        counts=counts,
        exclusions={e.user_id: e.reason for e in excluded},
    )


# ---------------------------------------------------------------------------
# tasks

TaskKey = tuple[str, str, str, str]  # (user, schema, family, slot)


@dataclass
class TaskResult:
    key: TaskKey
    records: tuple  # pipeline.FitRecord per fit, canonical order
    selected: pipeline.SelectedParams
    scores: dict  # identity -> probabilities of that identity's slot strokes
    final_fit_seconds: float
    model_blob: bytes | None = None


def run_slot_task(ds: Dataset, key: TaskKey, master_seed: int, save_model: bool = False) -> TaskResult:
    """Grid search + selection + final fit + test scoring for one task key."""
    user, schema, family, slot = key
    matrices = {u: ds.train[schema][u][slot] for u in ds.users}
    x, y = pipeline.build_ovr_training_set(
        user, slot, matrices, seed=derive_seed(master_seed, "ovr", user, slot)
    )
    plan = make_cv_plan(master_seed, user, slot)
    grid = pipeline.run_grid_search(
        x, y, family, plan, seed=derive_seed(master_seed, "grid", user, schema, family, slot)
    )
    selected = pipeline.select_params_one_std(grid)
    t0 = time.perf_counter()
    final = pipeline.train_final_model(
        family, selected.params, x, y,
        seed=derive_seed(master_seed, "final", user, schema, family, slot),
    )
    final_seconds = time.perf_counter() - t0

    slot_codes = np.array([DIRECTION_CODES[d] for d in SLOT_DIRECTIONS[slot]], np.int8)
    scores = {}
    for identity in ds.users:
        mask = np.isin(ds.test_direction_codes[identity], slot_codes)
        scores[identity] = classifiers.predict_proba(final, ds.test[schema][identity][mask])
    blob = model_io.dump_model(final) if save_model else None
    return TaskResult(
        key=key, records=grid.records, selected=selected,
        scores=scores, final_fit_seconds=final_seconds, model_blob=blob,
    )


_WORKER_DATASET: Dataset | None = None
_WORKER_SEED: int = 0
_WORKER_SAVE: bool = False


def _worker_init(payload: bytes) -> None:
    global _WORKER_DATASET, _WORKER_SEED, _WORKER_SAVE
    _WORKER_DATASET, _WORKER_SEED, _WORKER_SAVE = pickle.loads(payload)


def _worker_run(key: TaskKey) -> TaskResult:
    assert _WORKER_DATASET is not None
    return run_slot_task(_WORKER_DATASET, key, _WORKER_SEED, _WORKER_SAVE)


def _execute_tasks(ds: Dataset, keys: list[TaskKey], cfg: ExperimentConfig) -> dict[TaskKey, TaskResult]:
    if cfg.workers <= 1:
        return {key: run_slot_task(ds, key, cfg.master_seed, cfg.save_models) for key in keys}
    payload = pickle.dumps((ds, cfg.master_seed, cfg.save_models))
    results: dict[TaskKey, TaskResult] = {}
    with ProcessPoolExecutor(
        max_workers=cfg.workers, initializer=_worker_init, initargs=(payload,)
    ) as pool:
        for result in pool.map(_worker_run, keys, chunksize=1):
            results[result.key] = result
    return results


# ---------------------------------------------------------------------------
# artifact writers


def _writer(path: Path):
    fh = path.open("w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_ledger(path: Path, keys: list[TaskKey], results: dict[TaskKey, TaskResult]) -> int:
    fh, w = _writer(path)
    n = 0
    with fh:
        w.writerow(["user_id", "schema", "family", "slot", "params", "repeat", "fold",
                    "auc", "fit_seconds", "score_seconds"])
        for key in keys:
            user, schema, family, slot = key
            for r in results[key].records:
                w.writerow([user, schema, family, slot, r.params_key, r.repeat, r.fold,
                            repr(float(r.auc)), repr(float(r.fit_seconds)),
                            repr(float(r.score_seconds))])
                n += 1
    return n


def write_selections(path: Path, keys: list[TaskKey], results: dict[TaskKey, TaskResult]) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["user_id", "schema", "family", "slot", "params", "threshold", "mask_size",
                    "best_params", "best_mean_auc", "best_std_auc"])
        for key in keys:
            user, schema, family, slot = key
            s = results[key].selected
            w.writerow([user, schema, family, slot, s.params_key, repr(s.threshold), s.mask_size,
                        classifiers.params_key(family, s.best_params),
                        repr(s.best_mean_auc), repr(s.best_std_auc)])


def assemble_streams(
    ds: Dataset, cfg: ExperimentConfig, results: dict[TaskKey, TaskResult]
) -> dict[tuple[str, str, str], dict[str, dict[str, np.ndarray]]]:
    """Merge slot scores into per-approach chronological probability streams."""
    stream_sets: dict = {}
    for family in cfg.families:
        for schema in cfg.schemas:
            for approach in cfg.approaches:
                per_owner: dict = {}
                for owner in ds.users:
                    per_identity: dict = {}
                    for identity in ds.users:
                        n = ds.test_direction_codes[identity].size
                        probs = np.full(n, np.nan)
                        for slot in APPROACH_SLOTS[approach]:
                            slot_codes = np.array(
                                [DIRECTION_CODES[d] for d in SLOT_DIRECTIONS[slot]], np.int8
                            )
                            mask = np.isin(ds.test_direction_codes[identity], slot_codes)
                            probs[mask] = results[(owner, schema, family, slot)].scores[identity]
                        per_identity[identity] = probs
                    per_owner[owner] = per_identity
                stream_sets[(family, schema, approach)] = per_owner
    return stream_sets


def write_scores(path: Path, ds: Dataset, stream_sets: dict) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["owner_id", "identity_id", "family", "schema", "approach",
                    "position", "timestamp_ms", "direction", "probability"])
        for config in sorted(stream_sets):
            family, schema, approach = config
            for owner in sorted(stream_sets[config]):
                for identity in sorted(stream_sets[config][owner]):
                    probs = stream_sets[config][owner][identity]
                    dirs = ds.test_direction_codes[identity]
                    ts = ds.test_timestamps[identity]
                    for pos, p in enumerate(probs):
                        w.writerow([owner, identity, family, schema, approach, pos,
                                    int(ts[pos]), _CODE_TO_DIRECTION[int(dirs[pos])].value,
                                    repr(float(p))])


def load_scores(path: Path) -> dict:
    """Rebuild stream sets from scores.csv (inverse of write_scores)."""
    raw: dict = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            config = (row["family"], row["schema"], row["approach"])
            raw.setdefault(config, {}).setdefault(row["owner_id"], {}).setdefault(
                row["identity_id"], []
            ).append((int(row["position"]), float(row["probability"])))
    stream_sets: dict = {}
    for config, owners in raw.items():
        stream_sets[config] = {}
        for owner, identities in owners.items():
            stream_sets[config][owner] = {}
            for identity, pairs in identities.items():
                pairs.sort()
                stream_sets[config][owner][identity] = np.array([p for _, p in pairs])
    return stream_sets


def write_metrics_csv(path: Path, report: MetricsReport) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["user_id", "family", "schema", "approach", "window", "auc", "eer"])
        for r in report.rows:
            w.writerow([r.user_id, r.family, r.schema, r.approach, r.window,
                        repr(r.auc), repr(r.eer)])


def write_plot_csv(path: Path, report: MetricsReport) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["family", "schema", "approach", "window",
                    "mean_auc", "std_auc", "mean_eer", "std_eer"])
        for a in report.aggregates:
            w.writerow([a.family, a.schema, a.approach, a.window,
                        repr(a.mean_auc), repr(a.std_auc), repr(a.mean_eer), repr(a.std_eer)])


def summary_dict(report: MetricsReport) -> dict:
    return {
        "windows": list(report.windows),
        "partial": report.partial,
        "aggregates": [
            {"family": a.family, "schema": a.schema, "approach": a.approach,
             "window": a.window, "mean_auc": a.mean_auc, "std_auc": a.std_auc,
             "mean_eer": a.mean_eer, "std_eer": a.std_eer}
            for a in report.aggregates
        ],
        "rankings": {
            str(window): [
                {"rank": e.rank, "family": e.family, "schema": e.schema,
                 "approach": e.approach, "mean_auc": e.mean_auc, "std_auc": e.std_auc,
                 "mean_eer": e.mean_eer, "std_eer": e.std_eer,
                 "p_vs_top": e.p_vs_top, "reject_at_05": e.reject_at_05}
                for e in entries
            ]
            for window, entries in sorted(report.rankings.items())
        },
    }


def write_report_files(out_dir: Path, report: MetricsReport) -> None:
    write_metrics_csv(out_dir / "metrics.csv", report)
    write_plot_csv(out_dir / "plot_auc_windows.csv", report)
    (out_dir / "summary.json").write_text(
        json.dumps(summary_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


@dataclass
class RunArtifacts:
    out_dir: Path
    report: MetricsReport
    n_fits_logged: int
    dataset: Dataset


def run_experiment(corpus: Corpus, cfg: ExperimentConfig, out_dir: str | Path) -> RunArtifacts:
    """Execute the full pipeline on a parsed corpus and write all artifacts."""
    ds = prepare_dataset(corpus, cfg)
    logger.info(
        "dataset ready: %d eligible users, %d excluded, %d strokes after cleaning",
        len(ds.users), len(ds.exclusions), ds.counts["strokes_after_cleaning"],
    )

    keys = [
        (user, schema, family, slot)
        for user in ds.users
        for schema in cfg.schemas
        for family in cfg.families
        for slot in cfg.slots
    ]
    planned = pipeline.planned_fit_count(cfg.families, len(ds.users), len(cfg.schemas), len(cfg.slots))
    logger.info("running %d tasks (%d fits) on %d workers", len(keys), planned, cfg.workers)
    results = _execute_tasks(ds, keys, cfg)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_logged = write_ledger(out_dir / "ledger.csv", keys, results)
    write_selections(out_dir / "selections.csv", keys, results)

    manifest = {
        "master_seed": cfg.master_seed,
        "families": list(cfg.families),
        "schemas": list(cfg.schemas),
        "approaches": list(cfg.approaches),
        "slots": list(cfg.slots),
        "windows": list(cfg.windows),
        "train_per_dir": cfg.train_per_dir,
        "test_per_dir": cfg.test_per_dir,
        "grids": {f: [classifiers.params_key(f, p) for p in classifiers.parameter_grid(f)]
                  for f in cfg.families},
        "planned_fits": planned,
        "corpus": ds.counts,
        "eligible_users": list(ds.users),
        "excluded_users": ds.exclusions,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    if cfg.save_models:
        model_dir = out_dir / "models"
        model_dir.mkdir(exist_ok=True)
        for key in keys:
            blob = results[key].model_blob
            if blob is not None:
                model_dir.joinpath("__".join(key) + ".npz").write_bytes(blob)

    stream_sets = assemble_streams(ds, cfg, results)
    write_scores(out_dir / "scores.csv", ds, stream_sets)
    report = aggregate_report(stream_sets, windows=tuple(cfg.windows),
                              ranking_windows=RANKING_WINDOWS)
    write_report_files(out_dir, report)
    logger.info("run complete: %d fits logged, reports in %s", n_logged, out_dir)
    return RunArtifacts(out_dir=out_dir, report=report, n_fits_logged=n_logged, dataset=ds)


def rerender_reports(run_dir: str | Path, out_dir: str | Path | None = None) -> MetricsReport:
    """Recompute metrics/summary/plot files from a run's scores and manifest."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    stream_sets = load_scores(run_dir / "scores.csv")
    report = aggregate_report(stream_sets, windows=tuple(manifest["windows"]),
                              ranking_windows=RANKING_WINDOWS)
    target = Path(out_dir) if out_dir is not None else run_dir
    target.mkdir(parents=True, exist_ok=True)
    write_report_files(target, report)
    return report
