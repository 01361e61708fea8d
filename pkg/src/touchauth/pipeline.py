"""Per-user one-vs-rest modeling: undersampling, repeated stratified CV,
grid search over the family's parameter table, and the one-standard-deviation
complexity-balanced selection rule.

The selection rule: take the best grid point's mean validation AUC, subtract
that same point's standard deviation to get a threshold, mask every grid
point whose mean reaches the threshold, and pick the least complex member of
the mask (fewer neighbours / smaller C / fewer trees, then larger minimum
split fraction).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import classifiers
from .classifiers import ClassifierSpec, complexity_key, params_key, parameter_grid
from .errors import SamplingError
from .evaluation import auc
from .ingest import (
    DIRECTIONS,
    HORIZONTAL_DIRECTIONS,
    VERTICAL_DIRECTIONS,
    Direction,
    UserSubset,
)
from .seeding import derive_seed

SLOTS = ("hs", "vs", "omni")
SLOT_DIRECTIONS: dict[str, tuple[Direction, ...]] = {
    "hs": HORIZONTAL_DIRECTIONS,
    "vs": VERTICAL_DIRECTIONS,
    "omni": DIRECTIONS,
}
APPROACHES = ("bi", "omni")
APPROACH_SLOTS = {"bi": ("hs", "vs"), "omni": ("omni",)}

N_FOLDS = 5
N_REPEATS = 5


@dataclass(frozen=True)
class CvPlan:
    n_folds: int = N_FOLDS
    n_repeats: int = N_REPEATS
    repeat_seeds: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.repeat_seeds) != self.n_repeats:
            raise ValueError("need one shuffle seed per repeat")

    @property
    def n_fits(self) -> int:
        return self.n_folds * self.n_repeats


def make_cv_plan(master_seed: int, user_id: str, slot: str,
                 n_folds: int = N_FOLDS, n_repeats: int = N_REPEATS) -> CvPlan:
    """Fold shuffles depend on (user, slot) only, so every family and feature
    set is validated on identical folds."""
    seeds = tuple(derive_seed(master_seed, "cv", user_id, slot, r) for r in range(n_repeats))
    return CvPlan(n_folds=n_folds, n_repeats=n_repeats, repeat_seeds=seeds)


def stratified_folds(y: np.ndarray, n_folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled stratified folds; class proportions are exact in every fold
    whenever the class sizes divide by the fold count."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    per_fold: list[list[np.ndarray]] = [[] for _ in range(n_folds)]
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(members.size)]
        sizes = np.full(n_folds, members.size // n_folds)
        sizes[: members.size % n_folds] += 1
        start = 0
        for f in range(n_folds):
            per_fold[f].append(members[start : start + sizes[f]])
            start += sizes[f]
    folds = []
    all_idx = np.arange(y.size)
    for f in range(n_folds):
        val = np.sort(np.concatenate(per_fold[f]))
        mask = np.ones(y.size, bool)
        mask[val] = False
        folds.append((all_idx[mask], val))
    return folds


def slot_train_strokes(subset: UserSubset, slot: str) -> list:
    """Session-A strokes feeding the slot, direction blocks in canon order."""
    return [s for d in SLOT_DIRECTIONS[slot] for s in subset.train[d]]


def build_ovr_training_set(
    target_user: str,
    slot: str,
    matrices: dict[str, np.ndarray],
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced one-vs-rest training set for one user and slot.

    `matrices` maps each eligible user to their slot training matrix (rows
    aligned with `slot_train_strokes`).  The genuine rows come first; the
    negative class is a seeded without-replacement undersample of all other
    users' rows (stacked in sorted user order), cut to exactly the genuine
    count.  Sampling depends only on (target_user, slot, seed), so every
    feature set sees the same strokes.
    """
    del slot  # part of the caller's seed derivation; rows are already slot-specific
    genuine = matrices[target_user]
    impostor_pool = [matrices[u] for u in sorted(matrices) if u != target_user]
    if not impostor_pool:
        raise SamplingError("one-vs-rest needs at least two users")
    pool = np.vstack(impostor_pool)
    n_pos = genuine.shape[0]
    if pool.shape[0] < n_pos:
        raise SamplingError(f"impostor pool has {pool.shape[0]} strokes, need {n_pos}")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.permutation(pool.shape[0])[:n_pos])
    x = np.vstack([genuine, pool[pick]])
    y = np.concatenate([np.ones(n_pos, np.int64), np.zeros(n_pos, np.int64)])
    return x, y


@dataclass(frozen=True)
class FitRecord:
    params_key: str
    repeat: int
    fold: int
    auc: float
    fit_seconds: float
    score_seconds: float


@dataclass(frozen=True)
class GridPointResult:
    params: dict
    fold_aucs: np.ndarray  # n_repeats * n_folds scores
    mean_auc: float
    std_auc: float
    fit_seconds: float
    score_seconds: float


@dataclass(frozen=True)
class GridResult:
    family: str
    points: tuple[GridPointResult, ...]
    records: tuple[FitRecord, ...]


def run_grid_search(
    x: np.ndarray,
    y: np.ndarray,
    family: str,
    plan: CvPlan,
    seed: int,
) -> GridResult:
    """Cross-validated AUC for every grid point of the family.

    Each point is scored on n_folds x n_repeats held-out folds; any scaler is
    fitted inside `classifiers.fit` on the fold's training rows only.  Fit
    seeds derive from (seed, params, repeat, fold), never from wall time or
    execution order.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    folds_per_repeat = [
        stratified_folds(y, plan.n_folds, plan.repeat_seeds[r]) for r in range(plan.n_repeats)
    ]
    points = []
    records = []
    for params in parameter_grid(family):
        key = params_key(family, params)
        scores = np.empty(plan.n_fits)
        fit_total = 0.0
        score_total = 0.0
        pos = 0
        for repeat in range(plan.n_repeats):
            for fold, (train_idx, val_idx) in enumerate(folds_per_repeat[repeat]):
                spec = ClassifierSpec(
                    family=family, params=params,
                    seed=derive_seed(seed, "fit", key, repeat, fold),
                )
                t0 = time.perf_counter()
                model = classifiers.fit(spec, x[train_idx], y[train_idx])
                t1 = time.perf_counter()
                proba = classifiers.predict_proba(model, x[val_idx])
                t2 = time.perf_counter()
                score = auc(proba[y[val_idx] == 1], proba[y[val_idx] == 0])
                scores[pos] = score
                pos += 1
                fit_total += t1 - t0
                score_total += t2 - t1
                records.append(FitRecord(key, repeat, fold, score, t1 - t0, t2 - t1))
        points.append(
            GridPointResult(
                params=params, fold_aucs=scores,
                mean_auc=float(scores.mean()), std_auc=float(scores.std()),
                fit_seconds=fit_total, score_seconds=score_total,
            )
        )
    return GridResult(family=family, points=tuple(points), records=tuple(records))


@dataclass(frozen=True)
class SelectedParams:
    params: dict
    params_key: str
    threshold: float
    mask_size: int
    best_params: dict
    best_mean_auc: float
    best_std_auc: float


def select_params_one_std(result: GridResult) -> SelectedParams:
    """Complexity-balanced choice: the least complex grid point whose mean
    AUC is within one standard deviation of the best point's mean."""
    if not result.points:
        raise ValueError("empty grid result")
    best = min(
        result.points,
        key=lambda p: (-p.mean_auc,) + complexity_key(result.family, p.params),
    )
    threshold = best.mean_auc - best.std_auc
    mask = [p for p in result.points if p.mean_auc >= threshold]
    chosen = min(mask, key=lambda p: complexity_key(result.family, p.params))
    return SelectedParams(
        params=chosen.params,
        params_key=params_key(result.family, chosen.params),
        threshold=threshold,
        mask_size=len(mask),
        best_params=best.params,
        best_mean_auc=best.mean_auc,
        best_std_auc=best.std_auc,
    )


def train_final_model(
    family: str,
    params: dict,
    x: np.ndarray,
    y: np.ndarray,
    seed: int,
) -> classifiers.TrainedModel:
    """Fit the selected parameters on the full balanced training set."""
    spec = ClassifierSpec(family=family, params=params, seed=seed)
    return classifiers.fit(spec, x, y)


def planned_fit_count(families, n_users: int, n_schemas: int, n_slots: int,
                      n_folds: int = N_FOLDS, n_repeats: int = N_REPEATS) -> int:
    """Closed-form fit total: sum over families of grid size x folds x repeats
    x users x schemas x slots."""
    per_unit = sum(classifiers.grid_size(f) for f in families) * n_folds * n_repeats
    return per_unit * n_users * n_schemas * n_slots
