"""Score-level evaluation: moving-average fusion, ROC/AUC/EER, Wilcoxon.

AUC is the probability that a random genuine score exceeds a random impostor
score with ties counting one half (identical to the trapezoidal area under
the ROC staircase).  EER is read off the ROC polyline at the point where the
false-acceptance and false-rejection rates cross, interpolating linearly
between adjacent operating points.  Both are therefore invariant under any
strictly increasing transform of the scores.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricError

logger = logging.getLogger(__name__)

DEFAULT_WINDOWS = tuple(range(1, 21))
RANKING_WINDOWS = (1, 5)
ALPHA = 0.05


# ---------------------------------------------------------------------------
# score streams and fusion

@dataclass(frozen=True)
class ScoreStream:
    """Chronological genuine-probabilities of one identity against one model."""

    owner_id: str  # user the model belongs to
    identity_id: str  # user whose strokes were scored
    probabilities: np.ndarray
    timestamps_ms: np.ndarray | None = None
    directions: np.ndarray | None = None

    @property
    def is_genuine(self) -> bool:
        return self.owner_id == self.identity_id

    def __len__(self) -> int:
        return len(self.probabilities)


def score_test_strokes(models, test_strokes, schema, owner_id, context_strokes=()) -> ScoreStream:
    """Score one identity's session-B strokes against one user's model set.

    `models` maps slot name ("hs"/"vs" or "omni") to a TrainedModel; each
    stroke routes to the slot owning its direction, and probabilities come
    back in chronological order regardless of which slot produced them.  The
    stream is genuine when the strokes belong to `owner_id`.

    Inter-stroke features need each stroke's predecessor; pass earlier
    session strokes as `context_strokes` when available.  Strokes whose
    projected features are not finite (e.g. a cold stream's first stroke) are
    dropped with a warning, mirroring the training-side cleaning.
    """
    from . import classifiers
    from .features import extract_corpus, project, project_matrix
    from .ingest import Corpus
    from .pipeline import SLOT_DIRECTIONS

    strokes = sorted(test_strokes, key=lambda s: (s.start_ms, s.swipe_id))
    if not strokes:
        raise MetricError("no test strokes to score")
    if len({s.user_id for s in strokes}) > 1:
        raise MetricError("a score stream covers exactly one identity")

    all_vectors = extract_corpus(Corpus.from_strokes(list(context_strokes) + strokes))
    by_key = {(fv.session, fv.swipe_id): fv for fv in all_vectors}
    vectors = [by_key[(s.session, s.swipe_id)] for s in strokes]
    finite = [np.isfinite(project(fv, schema)).all() for fv in vectors]
    if not all(finite):
        logger.warning("dropping %d stroke(s) with non-finite features from the stream",
                       finite.count(False))
        strokes = [s for s, ok in zip(strokes, finite) if ok]
        vectors = [fv for fv, ok in zip(vectors, finite) if ok]
        if not strokes:
            raise MetricError("no scorable strokes left after cleaning")
    matrix = project_matrix(vectors, schema)

    slot_of = {}
    for slot in models:
        for direction in SLOT_DIRECTIONS[slot]:
            slot_of[direction] = slot
    missing = {s.direction for s in strokes} - set(slot_of)
    if missing:
        raise MetricError(f"no slot accepts directions {sorted(d.value for d in missing)}")
    probs = np.empty(len(strokes))
    for slot, model in models.items():
        mask = np.array([slot_of[s.direction] == slot for s in strokes])
        if mask.any():
            probs[mask] = classifiers.predict_proba(model, matrix[mask])
    return ScoreStream(
        owner_id=owner_id,
        identity_id=strokes[0].user_id,
        probabilities=probs,
        timestamps_ms=np.array([s.start_ms for s in strokes], dtype=np.int64),
        directions=np.array([s.direction.value for s in strokes]),
    )


def fuse_moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Stride-1 moving average; empty (with a warning) when the stream is short."""
    values = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    if window == 1:
        return values.copy()
    if values.size < window:
        logger.warning("stream of %d scores is shorter than window %d", values.size, window)
        return np.empty(0)
    return np.lib.stride_tricks.sliding_window_view(values, window).mean(axis=1)


# ---------------------------------------------------------------------------
# ROC / AUC / EER

@dataclass(frozen=True)
class RocCurve:
    """Operating points from (0,0) to (1,1) as thresholds sweep downward."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # accept when score >= threshold


def _check_classes(genuine, impostor) -> tuple[np.ndarray, np.ndarray]:
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise MetricError("both genuine and impostor scores are required")
    return genuine, impostor


def roc_curve(genuine, impostor) -> RocCurve:
    genuine, impostor = _check_classes(genuine, impostor)
    scores = np.concatenate([genuine, impostor])
    labels = np.concatenate([np.ones(genuine.size, bool), np.zeros(impostor.size, bool)])
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    labels = labels[order]

    # one operating point per distinct score (threshold = that score)
    distinct = np.nonzero(np.diff(scores))[0]
    cut = np.concatenate([distinct, [scores.size - 1]])
    tp = np.cumsum(labels)[cut]
    fp = np.cumsum(~labels)[cut]
    fpr = np.concatenate([[0.0], fp / impostor.size])
    tpr = np.concatenate([[0.0], tp / genuine.size])
    thresholds = np.concatenate([[np.inf], scores[cut]])
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def auc(genuine, impostor) -> float:
    """Pairwise concordance AUC (ties count 1/2), via the rank-sum identity."""
    genuine, impostor = _check_classes(genuine, impostor)
    scores = np.concatenate([genuine, impostor])
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    n_g = genuine.size
    rank_sum = ranks[:n_g].sum()
    return float((rank_sum - n_g * (n_g + 1) / 2.0) / (n_g * impostor.size))


def eer(genuine, impostor) -> float:
    """Equal error rate at the interpolated FAR = FRR crossing of the ROC."""
    curve = roc_curve(genuine, impostor)
    far = curve.fpr
    frr = 1.0 - curve.tpr
    diff = far - frr  # runs from -1 at (0,0) to +1 at (1,1)
    k = int(np.argmax(diff >= 0.0))
    if diff[k] == 0.0:
        return float(far[k])
    f0, f1 = far[k - 1], far[k]
    r0, r1 = frr[k - 1], frr[k]
    denom = (f1 - f0) - (r1 - r0)
    if denom == 0.0:
        return float(0.5 * (f0 + r0))
    s = (r0 - f0) / denom
    return float(f0 + s * (f1 - f0))


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank

EXACT_WILCOXON_MAX_N = 25


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    p_value: float
    n: int  # pairs remaining after dropping zero differences
    reject_at_05: bool
    degenerate: bool
    method: str  # "exact" | "normal" | "degenerate"


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_signed_rank_p(ranks: np.ndarray, w_min: float) -> float:
    """Two-sided exact p over all 2^n sign assignments.

    Works on doubled ranks so tied (half-integer) ranks stay integral; the
    count distribution is built by dynamic programming, which is equivalent
    to full enumeration.
    """
    doubled = np.rint(2.0 * ranks).astype(np.int64)  # every doubled rank >= 2
    total = int(doubled.sum())
    dist = np.zeros(total + 1, dtype=np.float64)  # counts fit exactly below 2^53
    dist[0] = 1.0
    for r in doubled:
        dist[r:] += dist[:-r]
    w2 = int(np.rint(2.0 * w_min))
    n_assign = 2.0 ** len(ranks)
    lower = dist[: w2 + 1].sum()
    upper = dist[total - w2 :].sum()
    return min(1.0, (lower + upper) / n_assign)


def _normal_signed_rank_p(ranks: np.ndarray, w_min: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # tie correction over groups of equal |d|
    _, counts = np.unique(ranks, return_counts=True)
    var -= ((counts.astype(np.float64) ** 3 - counts).sum()) / 48.0
    if var <= 0:
        return 1.0
    z = (w_min - mean) / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2.0))


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided paired Wilcoxon test; exact for n <= 25, normal beyond.

    Zero differences are dropped; ties in |difference| receive average ranks.
    All-zero differences are degenerate and report p = 1 by convention.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError("paired samples must be 1-D and equally long")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, False, True, "degenerate")
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks.sum() - w_plus)
    stat = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        p = float(_exact_signed_rank_p(ranks, stat))
        method = "exact"
    else:
        p = float(_normal_signed_rank_p(ranks, stat))
        method = "normal"
    return WilcoxonResult(stat, p, int(n), bool(p < ALPHA), False, method)


# ---------------------------------------------------------------------------
# report aggregation

Config = tuple[str, str, str]  # (family, schema, approach)


@dataclass(frozen=True)
class UserWindowMetrics:
    user_id: str
    family: str
    schema: str
    approach: str
    window: int
    auc: float
    eer: float


@dataclass(frozen=True)
class ConfigWindowAggregate:
    family: str
    schema: str
    approach: str
    window: int
    mean_auc: float
    std_auc: float
    mean_eer: float
    std_eer: float


@dataclass(frozen=True)
class RankingEntry:
    rank: int
    family: str
    schema: str
    approach: str
    mean_auc: float
    std_auc: float
    mean_eer: float
    std_eer: float
    p_vs_top: float | None  # None for the reference row itself
    reject_at_05: bool | None


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[UserWindowMetrics, ...]
    aggregates: tuple[ConfigWindowAggregate, ...]
    rankings: dict[int, tuple[RankingEntry, ...]]
    windows: tuple[int, ...]
    partial: bool = False


def user_window_metrics(
    streams_by_identity: dict[str, np.ndarray],
    owner_id: str,
    window: int,
) -> tuple[float, float]:
    """Pooled AUC/EER for one user's model at one fusion window.

    The genuine side is the owner's own fused stream; the impostor side pools
    every other identity's stream, each fused separately so windows never mix
    identities.
    """
    genuine = fuse_moving_average(streams_by_identity[owner_id], window)
    impostor_parts = [
        fuse_moving_average(probs, window)
        for identity, probs in sorted(streams_by_identity.items())
        if identity != owner_id
    ]
    impostor = np.concatenate(impostor_parts) if impostor_parts else np.empty(0)
    return auc(genuine, impostor), eer(genuine, impostor)


def aggregate_report(
    stream_sets: dict[Config, dict[str, dict[str, np.ndarray]]],
    windows: tuple[int, ...] = DEFAULT_WINDOWS,
    ranking_windows: tuple[int, ...] = RANKING_WINDOWS,
) -> MetricsReport:
    """Per-user metrics, cross-user aggregates, rankings, and significance.

    `stream_sets[config][owner][identity]` holds the chronological probability
    stream of `identity`'s test strokes under `owner`'s model.
    """
    configs = sorted(stream_sets)
    rows: list[UserWindowMetrics] = []
    aggregates: list[ConfigWindowAggregate] = []
    per_config_user_auc: dict[tuple[Config, int], dict[str, float]] = {}
    partial = False

    for config in configs:
        family, schema, approach = config
        owners = sorted(stream_sets[config])
        for window in windows:
            aucs, eers = [], []
            user_aucs = {}
            for owner in owners:
                streams = stream_sets[config][owner]
                if owner not in streams:
                    partial = True
                    continue
                a, e = user_window_metrics(streams, owner, window)
                rows.append(UserWindowMetrics(owner, family, schema, approach, window, a, e))
                aucs.append(a)
                eers.append(e)
                user_aucs[owner] = a
            if aucs:
                aggregates.append(
                    ConfigWindowAggregate(
                        family, schema, approach, window,
                        float(np.mean(aucs)), float(np.std(aucs)),
                        float(np.mean(eers)), float(np.std(eers)),
                    )
                )
            else:
                partial = True
            per_config_user_auc[(config, window)] = user_aucs

    rankings: dict[int, tuple[RankingEntry, ...]] = {}
    for window in ranking_windows:
        if window not in windows:
            continue
        window_aggs = [a for a in aggregates if a.window == window]
        window_aggs.sort(key=lambda a: (-a.mean_auc, a.family, a.schema, a.approach))
        if not window_aggs:
            continue
        top = window_aggs[0]
        top_key = ((top.family, top.schema, top.approach), window)
        top_aucs = per_config_user_auc[top_key]
        entries = []
        for rank, agg in enumerate(window_aggs, start=1):
            config = (agg.family, agg.schema, agg.approach)
            if config == top_key[0]:
                p, reject = None, None
            else:
                other = per_config_user_auc[(config, window)]
                shared = sorted(set(top_aucs) & set(other))
                if len(shared) != len(top_aucs) or len(shared) != len(other):
                    partial = True
                result = wilcoxon_signed_rank(
                    [top_aucs[u] for u in shared], [other[u] for u in shared]
                )
                p, reject = result.p_value, result.reject_at_05
            entries.append(
                RankingEntry(rank, agg.family, agg.schema, agg.approach,
                             agg.mean_auc, agg.std_auc, agg.mean_eer, agg.std_eer,
                             p, reject)
            )
        rankings[window] = tuple(entries)

    return MetricsReport(
        rows=tuple(rows),
        aggregates=tuple(aggregates),
        rankings=rankings,
        windows=tuple(windows),
        partial=partial,
    )
