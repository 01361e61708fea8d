"""Random forest, extra-trees, and gradient boosting on compiled kernels.

Trees are stored as flat node arrays (feature, threshold, left, right, value)
so that fitting and prediction run entirely inside numba.  All randomness
comes from an internal splitmix64 stream seeded per tree, which makes models
bit-reproducible for a given seed regardless of platform or execution order.

Split conventions, chosen for cross-platform determinism:

- candidate features are drawn without replacement and evaluated in ascending
  index order; equal-quality splits keep the first candidate seen, i.e. the
  lowest feature index and then the lowest threshold;
- RF bootstraps the training set and searches midpoint thresholds on
  floor(sqrt(p)) candidate features; ET skips the bootstrap and draws one
  uniform threshold inside each candidate feature's node range;
- GB fits regression trees on the logistic negative gradient over a fresh
  subsample each stage, with Newton leaf values and shrinkage 0.1; its trees
  consider every feature;
- node splitting stops on purity, on node size below min_split, or when no
  candidate feature varies inside the node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

GB_LEARNING_RATE = 0.1
GB_SUBSAMPLE = 0.95

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_SHIFT11 = _U64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _mix64(z):  # pragma: no cover - compiled
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


@njit(cache=True, inline="always")
def _next_u64(state):  # pragma: no cover - compiled
    state = state + _GOLDEN
    return _mix64(state), state


@njit(cache=True, inline="always")
def _next_uniform(state):  # pragma: no cover - compiled
    z, state = _next_u64(state)
    return float(z >> _SHIFT11) * _INV53, state


@njit(cache=True, inline="always")
def _tree_state(seed, tree_index):  # pragma: no cover - compiled
    # hashed stream start per tree; trees never share a substream
    return _mix64(_U64(seed) + (_U64(tree_index) + _U64(1)) * _GOLDEN)


@njit(cache=True)
def _draw_features(state, perm, k):  # pragma: no cover - compiled
    """Partial Fisher-Yates: first k entries of perm become the candidates."""
    p = perm.shape[0]
    for i in range(p):
        perm[i] = i
    for i in range(k):
        z, state = _next_u64(state)
        j = i + int(z % _U64(p - i))
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    # ascending order makes "lowest feature wins ties" well defined
    for i in range(1, k):
        key = perm[i]
        j = i - 1
        while j >= 0 and perm[j] > key:
            perm[j + 1] = perm[j]
            j -= 1
        perm[j + 1] = key
    return state


@njit(cache=True)
def _partition(xt_row, idx, lo, hi, thr):  # pragma: no cover - compiled
    """In-place partition of idx[lo:hi]; returns the first right-side slot."""
    i = lo
    j = hi - 1
    while i <= j:
        if xt_row[idx[i]] <= thr:
            i += 1
        else:
            tmp = idx[i]
            idx[i] = idx[j]
            idx[j] = tmp
            j -= 1
    return i


@njit(cache=True)
def _build_cls_tree(
    xt, y, idx, n_samples, min_split, k_feat, extra, state,
    feat_perm, stack, vbuf, ybuf, node_feat, node_thr, node_left, node_right, node_val,
):  # pragma: no cover - compiled
    """Grow one classification tree over idx[0:n_samples]; returns node count.

    Class counts travel down the stack and candidate values are gathered into
    contiguous scratch once per feature, so the hot scans vectorize.
    """
    c1_root = 0
    for i in range(n_samples):
        c1_root += y[idx[i]]
    n_nodes = 1
    stack[0, 0] = 0  # node id
    stack[0, 1] = 0  # lo
    stack[0, 2] = n_samples  # hi
    stack[0, 3] = c1_root  # genuine count in the node
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        lo = stack[sp, 1]
        hi = stack[sp, 2]
        c1 = stack[sp, 3]
        m = hi - lo
        value = c1 / m

        best_feat = -1
        best_thr = 0.0
        best_nl = 0
        best_c1l = 0
        best_score = 1e300  # weighted gini, lower is better
        if not (m < min_split or c1 == 0 or c1 == m):
            for i in range(m):
                ybuf[i] = y[idx[lo + i]]
            state = _draw_features(state, feat_perm, k_feat)
            for ci in range(k_feat):
                f = feat_perm[ci]
                row = xt[f]
                fmin = row[idx[lo]]
                fmax = fmin
                vbuf[0] = fmin
                for i in range(1, m):
                    v = row[idx[lo + i]]
                    vbuf[i] = v
                    fmin = min(fmin, v)
                    fmax = max(fmax, v)
                if extra:
                    if fmax <= fmin:
                        continue
                    u, state = _next_uniform(state)
                    thr = fmin + u * (fmax - fmin)
                    if thr >= fmax:
                        continue
                    nl = 0
                    c1l = 0
                    for i in range(m):
                        inside = vbuf[i] <= thr
                        nl += 1 if inside else 0
                        c1l += ybuf[i] if inside else 0
                    if nl == 0 or nl == m:
                        continue
                    nr = m - nl
                    c1r = c1 - c1l
                    score = (nl - (c1l * c1l + (nl - c1l) * (nl - c1l)) / nl) + (
                        nr - (c1r * c1r + (nr - c1r) * (nr - c1r)) / nr
                    )
                    if score < best_score:
                        best_score = score
                        best_feat = f
                        best_thr = thr
                        best_nl = nl
                        best_c1l = c1l
                else:
                    if fmax <= fmin:
                        continue
                    # exact search over midpoints of this feature's sorted values
                    order = np.argsort(vbuf[:m])
                    nl = 0
                    c1l = 0
                    for s in range(m - 1):
                        o = order[s]
                        nl += 1
                        c1l += ybuf[o]
                        v_here = vbuf[o]
                        v_next = vbuf[order[s + 1]]
                        if v_next <= v_here:
                            continue
                        nr = m - nl
                        c1r = c1 - c1l
                        score = (nl - (c1l * c1l + (nl - c1l) * (nl - c1l)) / nl) + (
                            nr - (c1r * c1r + (nr - c1r) * (nr - c1r)) / nr
                        )
                        if score < best_score:
                            thr = 0.5 * (v_here + v_next)
                            if thr <= v_here or thr >= v_next:
                                thr = v_here  # midpoint collapsed; <= keeps split valid
                            best_score = score
                            best_feat = f
                            best_thr = thr
                            best_nl = nl
                            best_c1l = c1l

        if best_feat < 0:
            node_feat[node] = -1
            node_thr[node] = 0.0
            node_left[node] = -1
            node_right[node] = -1
            node_val[node] = value
            continue

        mid = _partition(xt[best_feat], idx, lo, hi, best_thr)
        if mid == lo or mid == hi:
            node_feat[node] = -1
            node_thr[node] = 0.0
            node_left[node] = -1
            node_right[node] = -1
            node_val[node] = value
            continue

        left = n_nodes
        right = n_nodes + 1
        n_nodes += 2
        node_feat[node] = best_feat
        node_thr[node] = best_thr
        node_left[node] = left
        node_right[node] = right
        node_val[node] = value
        stack[sp, 0] = right
        stack[sp, 1] = mid
        stack[sp, 2] = hi
        stack[sp, 3] = c1 - best_c1l
        sp += 1
        stack[sp, 0] = left
        stack[sp, 1] = lo
        stack[sp, 2] = mid
        stack[sp, 3] = best_c1l
        sp += 1
    return n_nodes, state


@njit(cache=True)
def _fit_forest(xt, y, n_trees, min_split, k_feat, extra, bootstrap, seed):  # pragma: no cover - compiled
    p, n = xt.shape
    max_nodes = 2 * n + 1
    feat = np.empty((n_trees, max_nodes), dtype=np.int32)
    thr = np.empty((n_trees, max_nodes), dtype=np.float64)
    left = np.empty((n_trees, max_nodes), dtype=np.int32)
    right = np.empty((n_trees, max_nodes), dtype=np.int32)
    val = np.empty((n_trees, max_nodes), dtype=np.float64)
    n_nodes = np.empty(n_trees, dtype=np.int32)

    idx = np.empty(n, dtype=np.int64)
    feat_perm = np.empty(p, dtype=np.int64)
    stack = np.empty((max_nodes + 1, 4), dtype=np.int64)
    vbuf = np.empty(n, dtype=np.float64)
    ybuf = np.empty(n, dtype=np.int64)

    for t in range(n_trees):
        state = _tree_state(seed, t)
        if bootstrap:
            for i in range(n):
                z, state = _next_u64(state)
                idx[i] = int(z % _U64(n))
        else:
            for i in range(n):
                idx[i] = i
        nn, state = _build_cls_tree(
            xt, y, idx, n, min_split, k_feat, extra, state,
            feat_perm, stack, vbuf, ybuf, feat[t], thr[t], left[t], right[t], val[t],
        )
        n_nodes[t] = nn
    return feat, thr, left, right, val, n_nodes


@njit(cache=True, inline="always")
def _tree_leaf_value(feat, thr, left, right, val, x):  # pragma: no cover - compiled
    node = 0
    while feat[node] >= 0:
        if x[feat[node]] <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return val[node]


@njit(cache=True)
def _predict_forest(feat, thr, left, right, val, x):  # pragma: no cover - compiled
    n_trees = feat.shape[0]
    n = x.shape[0]
    out = np.zeros(n)
    for t in range(n_trees):
        ft = feat[t]
        tt = thr[t]
        lt = left[t]
        rt = right[t]
        vt = val[t]
        for i in range(n):
            out[i] += _tree_leaf_value(ft, tt, lt, rt, vt, x[i])
    return out / n_trees


@njit(cache=True)
def _build_reg_tree(
    xt, target, weight, idx, lo0, hi0, min_split,
    stack, node_feat, node_thr, node_left, node_right, node_val,
):  # pragma: no cover - compiled
    """Squared-error regression tree with Newton leaf values (sum t / sum w)."""
    p = xt.shape[0]
    n_nodes = 1
    stack[0, 0] = 0
    stack[0, 1] = lo0
    stack[0, 2] = hi0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        lo = stack[sp, 1]
        hi = stack[sp, 2]
        m = hi - lo

        s_t = 0.0
        s_w = 0.0
        for i in range(lo, hi):
            s_t += target[idx[i]]
            s_w += weight[idx[i]]

        best_feat = -1
        best_thr = 0.0
        parent_score = s_t * s_t / m
        best_score = parent_score
        if m >= min_split:
            for f in range(p):
                row = xt[f]
                vals = np.empty(m, dtype=np.float64)
                tgts = np.empty(m, dtype=np.float64)
                for i in range(m):
                    vals[i] = row[idx[lo + i]]
                    tgts[i] = target[idx[lo + i]]
                order = np.argsort(vals)
                nl = 0
                sl = 0.0
                for s in range(m - 1):
                    o = order[s]
                    nl += 1
                    sl += tgts[o]
                    v_here = vals[o]
                    v_next = vals[order[s + 1]]
                    if v_next <= v_here:
                        continue
                    nr = m - nl
                    sr = s_t - sl
                    score = sl * sl / nl + sr * sr / nr
                    if score > best_score:
                        thr = 0.5 * (v_here + v_next)
                        if thr <= v_here or thr >= v_next:
                            thr = v_here
                        best_score = score
                        best_feat = f
                        best_thr = thr

        if best_feat < 0:
            node_feat[node] = -1
            node_thr[node] = 0.0
            node_left[node] = -1
            node_right[node] = -1
            node_val[node] = 0.0 if abs(s_w) < 1e-150 else s_t / s_w
            continue

        mid = _partition(xt[best_feat], idx, lo, hi, best_thr)
        if mid == lo or mid == hi:
            node_feat[node] = -1
            node_thr[node] = 0.0
            node_left[node] = -1
            node_right[node] = -1
            node_val[node] = 0.0 if abs(s_w) < 1e-150 else s_t / s_w
            continue

        left = n_nodes
        right = n_nodes + 1
        n_nodes += 2
        node_feat[node] = best_feat
        node_thr[node] = best_thr
        node_left[node] = left
        node_right[node] = right
        node_val[node] = 0.0
        stack[sp, 0] = right
        stack[sp, 1] = mid
        stack[sp, 2] = hi
        sp += 1
        stack[sp, 0] = left
        stack[sp, 1] = lo
        stack[sp, 2] = mid
        sp += 1
    return n_nodes


@njit(cache=True)
def _fit_gb(xt, y, n_stages, min_split, subsample, learning_rate, seed):  # pragma: no cover - compiled
    p, n = xt.shape
    max_nodes = 2 * n + 1
    feat = np.empty((n_stages, max_nodes), dtype=np.int32)
    thr = np.empty((n_stages, max_nodes), dtype=np.float64)
    left = np.empty((n_stages, max_nodes), dtype=np.int32)
    right = np.empty((n_stages, max_nodes), dtype=np.int32)
    val = np.empty((n_stages, max_nodes), dtype=np.float64)
    n_nodes = np.empty(n_stages, dtype=np.int32)
    train_loss = np.empty(n_stages)

    n_pos = 0
    for i in range(n):
        n_pos += y[i]
    prior = n_pos / n
    init_score = math.log(prior / (1.0 - prior))

    f_score = np.full(n, init_score)
    target = np.empty(n)
    weight = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    perm = np.empty(n, dtype=np.int64)
    stack = np.empty((max_nodes + 1, 3), dtype=np.int64)

    m_sub = int(subsample * n)
    if m_sub < 1:
        m_sub = 1
    if m_sub > n:
        m_sub = n

    for t in range(n_stages):
        state = _tree_state(seed, t)
        for i in range(n):
            fv = f_score[i]
            prob = 1.0 / (1.0 + math.exp(-fv)) if fv >= 0 else math.exp(fv) / (1.0 + math.exp(fv))
            target[i] = y[i] - prob
            weight[i] = prob * (1.0 - prob)

        if m_sub < n:
            for i in range(n):
                perm[i] = i
            for i in range(m_sub):
                z, state = _next_u64(state)
                j = i + int(z % _U64(n - i))
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
            for i in range(m_sub):
                idx[i] = perm[i]
            idx_view = idx[:m_sub]
            idx_view.sort()
        else:
            for i in range(n):
                idx[i] = i

        nn = _build_reg_tree(
            xt, target, weight, idx, 0, m_sub, min_split,
            stack, feat[t], thr[t], left[t], right[t], val[t],
        )
        n_nodes[t] = nn

        loss = 0.0
        for i in range(n):
            step = _tree_leaf_value(feat[t], thr[t], left[t], right[t], val[t], xt[:, i])
            f_score[i] += learning_rate * step
            fv = f_score[i]
            # stable logistic loss: log(1 + exp(fv)) - y*fv
            loss += (max(fv, 0.0) + math.log1p(math.exp(-abs(fv)))) - y[i] * fv
        train_loss[t] = loss / n

    return feat, thr, left, right, val, n_nodes, init_score, train_loss


@njit(cache=True)
def _predict_gb(feat, thr, left, right, val, init_score, learning_rate, x):  # pragma: no cover - compiled
    n_stages = feat.shape[0]
    n = x.shape[0]
    out = np.full(n, init_score)
    for t in range(n_stages):
        ft = feat[t]
        tt = thr[t]
        lt = left[t]
        rt = right[t]
        vt = val[t]
        for i in range(n):
            out[i] += learning_rate * _tree_leaf_value(ft, tt, lt, rt, vt, x[i])
    for i in range(n):
        fv = out[i]
        out[i] = 1.0 / (1.0 + math.exp(-fv)) if fv >= 0 else math.exp(fv) / (1.0 + math.exp(fv))
    return out


def min_split_size(fraction: float, n_train: int) -> int:
    """ceil(fraction * n_train), floored at 2; tolerant of float round-up."""
    return max(2, int(math.ceil(fraction * n_train - 1e-9)))


def _compact(feat, thr, left, right, val, n_nodes):
    """Trim node arrays to the widest tree and blank unused slots, so equal
    fits serialize to equal bytes."""
    width = max(1, int(n_nodes.max()))
    feat = feat[:, :width].copy()
    thr = thr[:, :width].copy()
    left = left[:, :width].copy()
    right = right[:, :width].copy()
    val = val[:, :width].copy()
    unused = np.arange(width)[None, :] >= n_nodes[:, None]
    feat[unused] = -1
    thr[unused] = 0.0
    left[unused] = -1
    right[unused] = -1
    val[unused] = 0.0
    return feat, thr, left, right, val


@dataclass(frozen=True)
class ForestModel:
    kind: str  # "rf" | "et"
    node_feature: np.ndarray
    node_threshold: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_value: np.ndarray
    n_nodes: np.ndarray
    n_features: int

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _predict_forest(
            self.node_feature, self.node_threshold, self.node_left,
            self.node_right, self.node_value, x,
        )


@dataclass(frozen=True)
class GbModel:
    node_feature: np.ndarray
    node_threshold: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_value: np.ndarray
    n_nodes: np.ndarray
    init_score: float
    learning_rate: float
    train_loss: np.ndarray
    n_features: int

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _predict_gb(
            self.node_feature, self.node_threshold, self.node_left,
            self.node_right, self.node_value, self.init_score, self.learning_rate, x,
        )


def fit_forest(
    kind: str,
    x: np.ndarray,
    y: np.ndarray,
    n_estimators: int,
    min_samples_split_fraction: float,
    seed: int,
) -> ForestModel:
    x = np.ascontiguousarray(x, dtype=np.float64)
    n, p = x.shape
    xt = np.ascontiguousarray(x.T)
    y64 = np.ascontiguousarray(y, dtype=np.int64)
    k_feat = max(1, int(math.sqrt(p)))
    feat, thr, left, right, val, n_nodes = _fit_forest(
        xt, y64, int(n_estimators), min_split_size(min_samples_split_fraction, n),
        k_feat, kind == "et", kind == "rf", np.uint64(seed),
    )
    feat, thr, left, right, val = _compact(feat, thr, left, right, val, n_nodes)
    return ForestModel(
        kind=kind, node_feature=feat, node_threshold=thr, node_left=left,
        node_right=right, node_value=val, n_nodes=n_nodes, n_features=p,
    )


def fit_gradient_boosting(
    x: np.ndarray,
    y: np.ndarray,
    n_estimators: int,
    min_samples_split_fraction: float,
    seed: int,
    subsample: float = GB_SUBSAMPLE,
    learning_rate: float = GB_LEARNING_RATE,
) -> GbModel:
    x = np.ascontiguousarray(x, dtype=np.float64)
    n, p = x.shape
    xt = np.ascontiguousarray(x.T)
    y64 = np.ascontiguousarray(y, dtype=np.int64)
    feat, thr, left, right, val, n_nodes, init_score, train_loss = _fit_gb(
        xt, y64, int(n_estimators), min_split_size(min_samples_split_fraction, n),
        float(subsample), float(learning_rate), np.uint64(seed),
    )
    feat, thr, left, right, val = _compact(feat, thr, left, right, val, n_nodes)
    return GbModel(
        node_feature=feat, node_threshold=thr, node_left=left, node_right=right,
        node_value=val, n_nodes=n_nodes, init_score=float(init_score),
        learning_rate=float(learning_rate), train_loss=train_loss, n_features=p,
    )
