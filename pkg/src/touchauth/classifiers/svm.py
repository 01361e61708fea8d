"""Soft-margin RBF SVM trained by sequential minimal optimization.

The dual is solved with maximal-violating-pair working-set selection and the
usual two-variable analytic update, stopping when the KKT violation gap drops
below `tol` (1e-3).  gamma follows the variance scaling rule
1 / (n_features * var(X)) computed on the scaled training matrix.  Scores are
mapped to probabilities with a sigmoid fitted on the training margins
(Platt's method with the regularized targets of Lin, Lin & Weng).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

logger = logging.getLogger(__name__)

TOL = 1e-3
MAX_ITER = 200_000
_TAU = 1e-12


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    d2 = (a**2).sum(axis=1)[:, None] + (b**2).sum(axis=1)[None, :] - 2.0 * a @ b.T
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


@njit(cache=True)
def _smo_solve(kmat, y, c, tol, max_iter):  # pragma: no cover - compiled
    n = kmat.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective 0.5 a'Qa - e'a
    it = 0
    while it < max_iter:
        it += 1
        # maximal violating pair over the feasible ascent/descent sets
        gmax = -1e300
        gmin = 1e300
        i = -1
        j = -1
        for t in range(n):
            yt = y[t]
            at = alpha[t]
            v = -yt * grad[t]
            if (yt > 0 and at < c) or (yt < 0 and at > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (yt > 0 and at > 0) or (yt < 0 and at < c):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin <= tol:
            break

        yi = y[i]
        yj = y[j]
        ai_old = alpha[i]
        aj_old = alpha[j]
        if yi != yj:
            quad = kmat[i, i] + kmat[j, j] + 2.0 * kmat[i, j] * yi * yj
            if quad <= 0.0:
                quad = _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0.0:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = c - diff
            else:
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = c + diff
        else:
            quad = kmat[i, i] + kmat[j, j] - 2.0 * kmat[i, j]
            if quad <= 0.0:
                quad = _TAU
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > c:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = total - c
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = total - c
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = total
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = total

        dai = (alpha[i] - ai_old) * yi
        daj = (alpha[j] - aj_old) * yj
        for t in range(n):
            grad[t] += y[t] * (kmat[t, i] * dai + kmat[t, j] * daj)

    # offset from the KKT conditions (mean over free vectors when possible)
    n_free = 0
    sum_free = 0.0
    ub = 1e300
    lb = -1e300
    for t in range(n):
        yg = y[t] * grad[t]
        if alpha[t] >= c:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0.0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            sum_free += yg
    if n_free > 0:
        rho = sum_free / n_free
    else:
        rho = (ub + lb) / 2.0
    return alpha, -rho, it


def fit_platt(decision: np.ndarray, y: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Fit sigmoid parameters (a, b) so that p = 1 / (1 + exp(a*f + b))."""
    y = np.asarray(y)
    prior1 = float((y == 1).sum())
    prior0 = float(len(y) - prior1)
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(y == 1, hi, lo)

    a = 0.0
    b = math.log((prior0 + 1.0) / (prior1 + 1.0))
    f = np.asarray(decision, dtype=np.float64)

    def objective(a_, b_):
        fab = a_ * f + b_
        with np.errstate(over="ignore"):
            return float(np.sum(np.where(fab >= 0, t * fab + np.log1p(np.exp(-fab)),
                                         (t - 1) * fab + np.log1p(np.exp(fab)))))

    sigma = 1e-12
    fval = objective(a, b)
    for _ in range(max_iter):
        fab = a * f + b
        with np.errstate(over="ignore"):
            p = np.where(fab >= 0, np.exp(-fab) / (1.0 + np.exp(-fab)), 1.0 / (1.0 + np.exp(fab)))
        d1 = t - p
        d2 = p * (1.0 - p)
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        h11 = float(np.sum(f * f * d2)) + sigma
        h22 = float(np.sum(d2)) + sigma
        h21 = float(np.sum(f * d2))
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            na, nb = a + step * da, b + step * db
            nval = objective(na, nb)
            if nval < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nval
                break
            step /= 2.0
        else:
            break
    return a, b


@dataclass(frozen=True)
class SvmModel:
    c: float
    gamma: float
    support_x: np.ndarray
    support_coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float
    platt_a: float
    platt_b: float
    alpha: np.ndarray  # full dual solution, kept for KKT checks
    y_signed: np.ndarray
    n_iter: int

    @property
    def n_features(self) -> int:
        return self.support_x.shape[1]

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        k = rbf_kernel(np.asarray(x, dtype=np.float64), self.support_x, self.gamma)
        return k @ self.support_coef + self.bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        fab = self.platt_a * self.decision_function(x) + self.platt_b
        with np.errstate(over="ignore"):
            return np.where(fab >= 0, np.exp(-fab) / (1.0 + np.exp(-fab)), 1.0 / (1.0 + np.exp(fab)))


def scale_gamma(x_scaled: np.ndarray) -> float:
    var = float(np.asarray(x_scaled).var())
    if var <= 0.0:
        return 1.0
    return 1.0 / (x_scaled.shape[1] * var)


def fit_svm(c: float, x_scaled: np.ndarray, y: np.ndarray) -> SvmModel:
    x = np.ascontiguousarray(x_scaled, dtype=np.float64)
    y_signed = np.where(np.asarray(y) == 1, 1.0, -1.0)
    gamma = scale_gamma(x)
    kmat = rbf_kernel(x, x, gamma)
    alpha, bias, n_iter = _smo_solve(kmat, y_signed, float(c), TOL, MAX_ITER)
    if n_iter >= MAX_ITER:
        # keep the near-feasible solution; the box and equality constraints
        # hold by construction even if the gap is still above tol
        logger.warning("SMO hit the %d-iteration bound (C=%s, n=%d)", MAX_ITER, c, len(y_signed))
    coef = alpha * y_signed
    decision = kmat @ coef + bias
    platt_a, platt_b = fit_platt(decision, np.asarray(y))
    support = alpha > 1e-12
    return SvmModel(
        c=float(c),
        gamma=gamma,
        support_x=x[support],
        support_coef=coef[support],
        bias=float(bias),
        platt_a=platt_a,
        platt_b=platt_b,
        alpha=alpha,
        y_signed=y_signed,
        n_iter=int(n_iter),
    )
