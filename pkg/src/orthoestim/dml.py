"""Partially linear debiased estimation of a binary policy effect.

Nuisance models for the outcome and the policy are cross-fitted with K
folds, so no observation is residualized by a model trained on itself. The
effect is the root of the pooled sample moment mean(d_tilde * (y_tilde -
d_tilde * alpha)) with a heteroskedasticity-robust sandwich variance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import forest as forest_mod
from .copulas import norm_ppf
from .dataset import Dataset, kfold_split
from .errors import (
    DegeneratePropensityWarning,
    DegenerateTreatmentResidual,
    NoPolicyVariation,
)
from .forest import ForestConfig, default_outcome_config, default_policy_config


@dataclass(frozen=True)
class DmlConfig:
    outcome_learner: ForestConfig = field(default_factory=default_outcome_config)
    policy_learner: ForestConfig = field(default_factory=default_policy_config)
    k_folds: int = 5
    confidence_level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if not 0.0 < self.confidence_level < 1.0:
            raise ValueError("confidence_level must lie in (0, 1)")


@dataclass(frozen=True)
class Residuals:
    """Cross-fitted residuals; entry i comes from models that never saw fold_of[i]."""

    y_tilde: np.ndarray
    d_tilde: np.ndarray
    fold_of: np.ndarray

    @property
    def n(self) -> int:
        return self.y_tilde.size


@dataclass(frozen=True)
class DmlEstimate:
    alpha: float
    std_error: float
    ci_low: float
    ci_high: float
    cost: float
    n: int
    k_folds: int
    per_fold_alphas: tuple[float, ...]
    rss: float
    confidence_level: float
    config: DmlConfig


def _forest_learner(config: ForestConfig, n_threads: int):
    def fit(X_train, y_train, seed):
        model = forest_mod.fit_forest(X_train, y_train, replace(config, seed=seed),
                                      n_threads=n_threads)
        return lambda X_new: forest_mod.predict(model, X_new)

    return fit


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=key).generate_state(1)[0])


def cross_fit_nuisances(
    data: Dataset,
    config: DmlConfig,
    n_threads: int = 1,
    outcome_fit=None,
    policy_fit=None,
) -> Residuals:
    """Train per-fold nuisances on the other K-1 folds and residualize.

    outcome_fit / policy_fit override the forest learners; each is a callable
    fit(X_train, y_train, seed) -> predictor(X_new). That hook is how tests
    swap in zero predictors or instrument what the training sets contain.
    """
    y = data.column(data.schema.outcome.name)
    d = data.column(data.schema.policy.name)
    W = data.matrix(data.schema.covariate_names())
    if np.any((d != 0.0) & (d != 1.0)):
        raise ValueError("policy column must be 0/1")
    if d.min() == d.max():
        raise NoPolicyVariation(f"policy column {data.schema.policy.name!r} is constant")
    n = data.n
    if n < 2 * config.k_folds:
        raise ValueError(f"need n >= 2*k_folds ({n} < {2 * config.k_folds})")

    outcome_fit = outcome_fit or _forest_learner(config.outcome_learner, n_threads)
    policy_fit = policy_fit or _forest_learner(config.policy_learner, n_threads)

    assignment = kfold_split(n, config.k_folds, config.seed)
    y_hat = np.empty(n)
    d_hat = np.empty(n)
    for fold in range(config.k_folds):
        test = assignment.labels == fold
        train = ~test
        if d[train].min() == d[train].max():
            warnings.warn(
                f"fold {fold}: policy constant in training data; propensity degenerates",
                DegeneratePropensityWarning,
                stacklevel=2,
            )
        g = outcome_fit(W[train], y[train],
                        _derived_seed(config.outcome_learner.seed, fold, 0))
        f = policy_fit(W[train], d[train],
                       _derived_seed(config.policy_learner.seed, fold, 1))
        y_hat[test] = g(W[test])
        d_hat[test] = f(W[test])
    return Residuals(y_tilde=y - y_hat, d_tilde=d - d_hat, fold_of=assignment.labels)


def estimate_alpha(res: Residuals) -> float:
    """Root of the pooled moment: sum(d~ y~) / sum(d~^2)."""
    denom = float(np.sum(res.d_tilde**2))
    if denom < 1e-12:
        raise DegenerateTreatmentResidual(f"sum of squared policy residuals {denom} ~ 0")
    return float(np.sum(res.d_tilde * res.y_tilde) / denom)


def moment_cost(res: Residuals, alpha: float) -> float:
    """mean(d~ * (y~ - d~ alpha)); exactly affine in alpha with slope -mean(d~^2)."""
    return float(np.mean(res.d_tilde * (res.y_tilde - res.d_tilde * alpha)))


def alpha_inference(res: Residuals, alpha: float, level: float = 0.95):
    """Sandwich standard error and symmetric normal confidence interval.

    With zeta = y~ - d~ alpha: V = mean(d~^2 zeta^2) / mean(d~^2)^2 and
    se = sqrt(V / n).
    """
    n = res.n
    if n < 10:
        raise ValueError("need at least 10 observations for inference")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    d2 = res.d_tilde**2
    mean_d2 = float(np.mean(d2))
    if mean_d2 * n < 1e-12:
        raise DegenerateTreatmentResidual("sum of squared policy residuals ~ 0")
    zeta = res.y_tilde - res.d_tilde * alpha
    variance = float(np.mean(d2 * zeta**2)) / mean_d2**2
    se = float(np.sqrt(variance / n))
    z = norm_ppf(0.5 * (1.0 + level))
    return se, alpha - z * se, alpha + z * se


def _per_fold_alphas(res: Residuals) -> tuple[float, ...]:
    out = []
    for fold in range(int(res.fold_of.max()) + 1):
        m = res.fold_of == fold
        denom = float(np.sum(res.d_tilde[m] ** 2))
        out.append(float(np.sum(res.d_tilde[m] * res.y_tilde[m]) / denom)
                   if denom >= 1e-12 else float("nan"))
    return tuple(out)


def run_dml(data: Dataset, config: DmlConfig, n_threads: int = 1,
            outcome_fit=None, policy_fit=None) -> DmlEstimate:
    """Cross-fit, estimate the pooled effect, and attach sandwich inference.

    Deterministic given (data, config): fold assignment comes from
    config.seed and every forest's stream derives from its learner seed and
    the fold index. Per-fold effect estimates are diagnostics only.
    """
    res = cross_fit_nuisances(data, config, n_threads=n_threads,
                              outcome_fit=outcome_fit, policy_fit=policy_fit)
    alpha = estimate_alpha(res)
    se, lo, hi = alpha_inference(res, alpha, config.confidence_level)
    return DmlEstimate(
        alpha=alpha,
        std_error=se,
        ci_low=lo,
        ci_high=hi,
        cost=moment_cost(res, alpha),
        n=res.n,
        k_folds=config.k_folds,
        per_fold_alphas=_per_fold_alphas(res),
        rss=float(np.sum((res.y_tilde - res.d_tilde * alpha) ** 2)),
        confidence_level=config.confidence_level,
        config=config,
    )


def naive_alpha(data: Dataset) -> float:
    """Unadjusted difference in outcome means between policy groups."""
    y = data.column(data.schema.outcome.name)
    d = data.column(data.schema.policy.name)
    if d.min() == d.max():
        raise NoPolicyVariation("policy column is constant")
    return float(y[d == 1.0].mean() - y[d == 0.0].mean())


def _config_to_dict(config: ForestConfig) -> dict:
    return {
        "n_trees": config.n_trees,
        "min_samples_split": config.min_samples_split,
        "min_samples_leaf": config.min_samples_leaf,
        "max_features": config.max_features,
        "max_depth": config.max_depth,
        "bootstrap": config.bootstrap,
        "seed": config.seed,
    }


def estimate_to_report(est: DmlEstimate) -> dict:
    """JSON-ready dict (format tag dml/1)."""
    return {
        "format": "dml/1",
        "alpha": float(est.alpha),
        "std_error": float(est.std_error),
        "ci": [float(est.ci_low), float(est.ci_high)],
        "confidence_level": float(est.confidence_level),
        "cost": float(est.cost),
        "rss": float(est.rss),
        "n": int(est.n),
        "k_folds": int(est.k_folds),
        "per_fold_alphas": [float(a) for a in est.per_fold_alphas],
        "config": {
            "outcome_learner": _config_to_dict(est.config.outcome_learner),
            "policy_learner": _config_to_dict(est.config.policy_learner),
            "k_folds": est.config.k_folds,
            "confidence_level": est.config.confidence_level,
            "seed": est.config.seed,
        },
    }
