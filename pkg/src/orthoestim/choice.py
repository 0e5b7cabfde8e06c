"""Marginal discrete-choice models: binary logit and ordered logit.

Log-likelihoods come with analytic gradients. Thresholds are optimized on an
unconstrained scale (first threshold plus log-increments) so quasi-Newton
steps can never violate the ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateLikelihood, DimMismatch, ThresholdOrder

PROB_FLOOR = 1e-300


def logistic_cdf(x):
    """1 / (1 + exp(-x)), overflow-free for any finite x (and +-inf)."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return float(out[0]) if scalar else out


def logistic_pdf(x):
    """Density of the standard logistic; symmetric, so computed from exp(-|x|)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.exp(-np.abs(x))
    return t / (1.0 + t) ** 2


def log_logistic_cdf(x):
    """log(logistic_cdf(x)) without underflow in the deep left tail."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class BinaryLogitParams:
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise ValueError("beta must be a finite 1-D vector")
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class OrderedLogitParams:
    """Coefficients plus strictly increasing thresholds for K = len(deltas)+1 levels."""

    gamma: np.ndarray
    deltas: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.float64)
        deltas = np.asarray(self.deltas, dtype=np.float64)
        if gamma.ndim != 1 or not np.all(np.isfinite(gamma)):
            raise ValueError("gamma must be a finite 1-D vector")
        if deltas.ndim != 1 or deltas.size < 1 or not np.all(np.isfinite(deltas)):
            raise ValueError("deltas must be a finite 1-D vector of length >= 1")
        if np.any(np.diff(deltas) <= 0):
            raise ThresholdOrder(f"thresholds {deltas} are not strictly increasing")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "deltas", deltas)

    @property
    def n_levels(self) -> int:
        return self.deltas.size + 1


def binary_logit_prob(params: BinaryLogitParams, x) -> float:
    """P(r = 1 | x) = logistic_cdf(beta . x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != params.beta.shape:
        raise DimMismatch(f"x has shape {x.shape}, beta has {params.beta.shape}")
    return float(logistic_cdf(params.beta @ x))


def interval_prob(a_lo, a_hi):
    """logistic_cdf(a_hi) - logistic_cdf(a_lo), via complements when both >= 0.

    The two forms are algebraically identical; switching preserves precision
    when both cut points sit in the upper tail.
    """
    a_lo = np.asarray(a_lo, dtype=np.float64)
    a_hi = np.asarray(a_hi, dtype=np.float64)
    upper = a_lo >= 0
    direct = logistic_cdf(a_hi) - logistic_cdf(a_lo)
    flipped = logistic_cdf(-a_lo) - logistic_cdf(-a_hi)
    return np.where(upper, flipped, direct)


def extend_thresholds(deltas) -> np.ndarray:
    """deltas with the conceptual -inf / +inf end thresholds attached."""
    return np.concatenate([[-np.inf], np.asarray(deltas, dtype=np.float64), [np.inf]])


def ordered_logit_prob(params: OrderedLogitParams, z, k: int) -> float:
    """P(level = k | z) for k in 1..K under the threshold-crossing model."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != params.gamma.shape:
        raise DimMismatch(f"z has shape {z.shape}, gamma has {params.gamma.shape}")
    K = params.n_levels
    if not 1 <= k <= K:
        raise ValueError(f"level k={k} outside 1..{K}")
    ext = extend_thresholds(params.deltas)
    index = params.gamma @ z
    return float(interval_prob(ext[k - 1] - index, ext[k] - index))


# -- raw likelihood cores (no parameter-class validation; optimizer hot path) --

def binary_loglik_core(beta, X, r):
    xb = X @ beta
    sign = np.where(r > 0.5, 1.0, -1.0)
    value = float(np.sum(log_logistic_cdf(sign * xb)))
    grad = X.T @ (r - logistic_cdf(xb))
    return value, grad


def ordered_loglik_core(gamma, deltas, Z, k, n_levels, floor=None):
    """(loglik, grad gamma++deltas, floored?) for levels k in 1..n_levels.

    With floor set, probabilities below it are clamped inside the log (the
    gradient keeps the true dP so steps still point uphill); floored reports
    whether any clamp was active.
    """
    ext = extend_thresholds(deltas)
    index = Z @ gamma
    a_lo = ext[k - 1] - index
    a_hi = ext[k] - index
    prob = interval_prob(a_lo, a_hi)
    floored = bool(np.any(prob < (floor if floor is not None else 0.0)))
    if floor is None:
        if np.any(prob <= 0.0):
            raise DegenerateLikelihood(row=int(np.argmax(prob <= 0.0)))
        safe = prob
    else:
        safe = np.maximum(prob, floor)
    w_hi = logistic_pdf(a_hi)
    w_lo = logistic_pdf(a_lo)
    inv_p = 1.0 / safe
    g_gamma = -Z.T @ ((w_hi - w_lo) * inv_p)
    # threshold j receives +w_hi/P when k == j and -w_lo/P when k == j+1
    K = n_levels
    g_delta = (
        np.bincount(k, weights=w_hi * inv_p, minlength=K + 1)[1:K]
        - np.bincount(k - 1, weights=w_lo * inv_p, minlength=K + 1)[1:K]
    )
    return float(np.sum(np.log(safe))), np.concatenate([g_gamma, g_delta]), floored


def marginal_loglik(model, X, y):
    """Log-likelihood and analytic gradient over observations.

    For BinaryLogitParams, y holds 0/1 outcomes and the gradient runs over
    beta. For OrderedLogitParams, y holds levels 1..K and the gradient is the
    concatenation of d/dgamma and d/ddeltas.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimMismatch(f"X shape {X.shape} incompatible with y length {y.shape}")
    if isinstance(model, BinaryLogitParams):
        if X.shape[1] != model.beta.size:
            raise DimMismatch(f"X has {X.shape[1]} columns, beta has {model.beta.size}")
        r = y.astype(np.float64)
        if np.any((r != 0.0) & (r != 1.0)):
            raise ValueError("binary outcomes must be 0 or 1")
        value, grad = binary_loglik_core(model.beta, X, r)
        if np.isneginf(value):
            raise DegenerateLikelihood()
        return value, grad
    if isinstance(model, OrderedLogitParams):
        if X.shape[1] != model.gamma.size:
            raise DimMismatch(f"X has {X.shape[1]} columns, gamma has {model.gamma.size}")
        k = y.astype(np.int64)
        if np.any((k < 1) | (k > model.n_levels)):
            raise ValueError(f"levels must lie in 1..{model.n_levels}")
        value, grad, _ = ordered_loglik_core(model.gamma, model.deltas, X, k, model.n_levels)
        return value, grad
    raise TypeError(f"unsupported model type {type(model).__name__}")


# -- unconstrained threshold parameterization -------------------------------

def deltas_to_unconstrained(deltas) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=np.float64)
    return np.concatenate([[deltas[0]], np.log(np.diff(deltas))])


def unconstrained_to_deltas(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    out[0] = s[0]
    if s.size > 1:
        out[1:] = s[0] + np.cumsum(np.exp(s[1:]))
    return out


def delta_grad_to_unconstrained(g_delta, s) -> np.ndarray:
    """Chain rule from d/ddeltas to d/ds for the log-increment parameterization."""
    g_delta = np.asarray(g_delta, dtype=np.float64)
    tail_sums = np.cumsum(g_delta[::-1])[::-1]
    out = np.empty_like(g_delta)
    out[0] = tail_sums[0]
    if g_delta.size > 1:
        out[1:] = np.exp(s[1:]) * tail_sums[1:]
    return out


# -- marginal maximum likelihood --------------------------------------------

def fit_binary_logit(X, r, gtol: float = 1e-8, max_iter: int = 300) -> BinaryLogitParams:
    """Binary-logit MLE by BFGS with the analytic gradient, from beta = 0."""
    X = np.asarray(X, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)

    def nll(beta):
        value, grad = binary_loglik_core(beta, X, r)
        return -value, -grad

    res = minimize(nll, np.zeros(X.shape[1]), jac=True, method="BFGS",
                   options={"gtol": gtol, "maxiter": max_iter})
    return BinaryLogitParams(res.x)


def initial_thresholds(k, n_levels: int) -> np.ndarray:
    """Thresholds matching empirical cumulative shares (null-model start)."""
    k = np.asarray(k, dtype=np.int64)
    counts = np.bincount(k, minlength=n_levels + 1)[1:]
    cum = np.cumsum(counts[:-1]) / max(k.size, 1)
    cum = np.clip(cum, 1e-3, 1.0 - 1e-3)
    deltas = np.log(cum / (1.0 - cum))
    # flat categories can collapse adjacent cuts; restore strict ordering
    for j in range(1, deltas.size):
        if deltas[j] <= deltas[j - 1]:
            deltas[j] = deltas[j - 1] + 1e-3
    return deltas


def fit_ordered_logit(Z, k, n_levels: int | None = None,
                      gtol: float = 1e-8, max_iter: int = 300) -> OrderedLogitParams:
    """Ordered-logit MLE by BFGS on (gamma, unconstrained thresholds)."""
    Z = np.asarray(Z, dtype=np.float64)
    k = np.asarray(k, dtype=np.int64)
    K = int(n_levels if n_levels is not None else k.max())
    p = Z.shape[1]
    s0 = deltas_to_unconstrained(initial_thresholds(k, K))

    def nll(psi):
        gamma = psi[:p]
        s = psi[p:]
        deltas = unconstrained_to_deltas(s)
        value, grad, _ = ordered_loglik_core(gamma, deltas, Z, k, K, floor=PROB_FLOOR)
        g = np.concatenate([grad[:p], delta_grad_to_unconstrained(grad[p:], s)])
        return -value, -g

    res = minimize(nll, np.concatenate([np.zeros(p), s0]), jac=True, method="BFGS",
                   options={"gtol": gtol, "maxiter": max_iter})
    return OrderedLogitParams(res.x[:p], unconstrained_to_deltas(res.x[p:]))
