"""Synthetic data-generating processes with known ground truth.

These generators are the validation oracles for both estimators: the copula
DGP samples (stress, wait level) pairs from exact joint cell probabilities,
and the partially linear DGP plants a known policy effect behind nonlinear
nuisance functions with guaranteed overlap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .copulas import CopulaFamily
from .dataset import Column, Dataset, VariableSchema
from .dml import Residuals, estimate_alpha
from .joint import JointParams, JointSpec, cell_prob_table

G_FORMS = ("linear", "sine-quadratic", "step")


@dataclass(frozen=True)
class CopulaDgpSpec:
    """Ground truth for the joint-model generator.

    The wait equation's first covariate is a Bernoulli(1/2) policy indicator
    (column density_low); remaining covariates are uniform on [-1, 1].
    """

    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    deltas: tuple[float, ...]
    family: CopulaFamily
    n: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        if len(self.gamma) < 1:
            raise ValueError("need at least the policy coefficient in gamma")
        if any(b <= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("deltas must be strictly increasing")
        if self.family.has_theta:
            self.family.require_theta()
        if self.n < 0:
            raise ValueError("n must be >= 0")

    @property
    def k_levels(self) -> int:
        return len(self.deltas) + 1

    def params(self) -> JointParams:
        return JointParams(np.array(self.beta), np.array(self.gamma),
                           np.array(self.deltas), self.family)


def _copula_schema(spec: CopulaDgpSpec) -> VariableSchema:
    cats = tuple(float(k) for k in range(1, spec.k_levels + 1))
    cols = [
        Column("stress", "binary", "covariate"),
        Column("wait_cat", "ordinal", "outcome", categories=cats),
        Column("density_low", "binary", "policy"),
    ]
    cols += [Column(f"x{j + 1}", "continuous", "covariate") for j in range(len(spec.beta))]
    cols += [Column(f"z{j + 2}", "continuous", "covariate") for j in range(len(spec.gamma) - 1)]
    return VariableSchema(tuple(cols))


def joint_spec_for(spec: CopulaDgpSpec, family: CopulaFamily | str | None = None) -> JointSpec:
    """JointSpec whose columns match generate_copula_data's output."""
    fam = spec.family if family is None else family
    if isinstance(fam, str):
        fam = CopulaFamily(fam)
    return JointSpec(
        stress_outcome="stress",
        wait_outcome="wait_cat",
        stress_columns=tuple(f"x{j + 1}" for j in range(len(spec.beta))),
        wait_columns=("density_low",) + tuple(f"z{j + 2}" for j in range(len(spec.gamma) - 1)),
        family=fam,
        k_levels=spec.k_levels,
    )


def generate_copula_data(spec: CopulaDgpSpec) -> Dataset:
    """Sample (stress, wait level) from the exact joint cell probabilities.

    Covariates are uniform on [-1, 1] (the policy indicator uniform on
    {0, 1}); each observation's cell is drawn by inverse transform from its
    2 x K cell table. Identical specs generate identical bits.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    px = len(spec.beta)
    pz = len(spec.gamma)
    K = spec.k_levels
    X = rng.uniform(-1.0, 1.0, size=(n, px))
    policy = rng.integers(0, 2, size=n).astype(np.float64)
    Z_rest = rng.uniform(-1.0, 1.0, size=(n, pz - 1))
    Z = np.column_stack([policy, Z_rest]) if pz > 1 else policy[:, None]

    table = cell_prob_table(spec.params(), X, Z).reshape(n, 2 * K)
    cum = np.cumsum(table, axis=1)
    draw = rng.uniform(size=n)
    cell = (cum > draw[:, None]).argmax(axis=1)
    r = (cell // K).astype(np.float64)
    k = (cell % K + 1).astype(np.float64)

    rows = np.column_stack([r, k, policy, X, Z_rest])
    return Dataset(_copula_schema(spec), rows)


@dataclass(frozen=True)
class DmlDgpSpec:
    """Ground truth for the partially linear generator.

    Y = alpha_true * D + g(W) + Normal(0, noise_sd), D ~ Bernoulli(f(W)),
    W uniform on [-1, 1]^w_dim. confounding_strength scales both g and the
    propensity tilt, so 0 means flat nuisances; f is clamped to [0.05, 0.95]
    for overlap.
    """

    alpha_true: float
    g_form: str = "sine-quadratic"
    f_form: str = "sine-quadratic"
    confounding_strength: float = 1.0
    noise_sd: float = 1.0
    w_dim: int = 5
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.g_form not in G_FORMS or self.f_form not in G_FORMS:
            raise ValueError(f"g_form/f_form must be one of {G_FORMS}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.w_dim < 1:
            raise ValueError("w_dim must be >= 1")
        if self.n < 0:
            raise ValueError("n must be >= 0")


def _base_surface(form: str, W: np.ndarray) -> np.ndarray:
    d = W.shape[1]
    w0 = W[:, 0]
    w1 = W[:, 1] if d > 1 else W[:, 0]
    if form == "linear":
        coef = np.array([(-1.0) ** j / (1.0 + j) for j in range(d)])
        return W @ coef
    if form == "sine-quadratic":
        return np.sin(np.pi * w0) + w1**2 - 1.0 / 3.0
    return (w0 > 0).astype(np.float64) + 0.5 * (w1 > 0) - 0.75


def _propensity_tilt(form: str, W: np.ndarray) -> np.ndarray:
    d = W.shape[1]
    w0 = W[:, 0]
    w1 = W[:, 1] if d > 1 else W[:, 0]
    if form == "linear":
        coef = np.array([(-1.0) ** j / (1.0 + j) for j in range(d)])
        return 0.4 * (W @ coef) / np.sum(np.abs(coef))
    if form == "sine-quadratic":
        return 0.35 * np.sin(np.pi * w0) + 0.3 * (w1**2 - 1.0 / 3.0)
    return 0.3 * np.sign(w0) + 0.1 * np.sign(w1)


def true_g(spec: DmlDgpSpec, W: np.ndarray) -> np.ndarray:
    return spec.confounding_strength * _base_surface(spec.g_form, W)


def true_f(spec: DmlDgpSpec, W: np.ndarray) -> np.ndarray:
    raw = 0.5 + spec.confounding_strength * _propensity_tilt(spec.f_form, W)
    return np.clip(raw, 0.05, 0.95)


@dataclass(frozen=True)
class DmlTruth:
    """True nuisance values carried alongside a generated dataset."""

    alpha_true: float
    g_values: np.ndarray
    f_values: np.ndarray


def _dml_schema(w_dim: int) -> VariableSchema:
    cols = [Column("y", "continuous", "outcome"), Column("d", "binary", "policy")]
    cols += [Column(f"w{j + 1}", "continuous", "covariate") for j in range(w_dim)]
    return VariableSchema(tuple(cols))


def generate_dml_data(spec: DmlDgpSpec) -> tuple[Dataset, DmlTruth]:
    rng = np.random.default_rng(spec.seed)
    W = rng.uniform(-1.0, 1.0, size=(spec.n, spec.w_dim))
    f = true_f(spec, W)
    g = true_g(spec, W)
    d = (rng.uniform(size=spec.n) < f).astype(np.float64)
    y = spec.alpha_true * d + g
    if spec.noise_sd > 0:
        y = y + rng.normal(0.0, spec.noise_sd, size=spec.n)
    rows = np.column_stack([y, d, W])
    return Dataset(_dml_schema(spec.w_dim), rows), DmlTruth(spec.alpha_true, g, f)


def infeasible_alpha(data: Dataset, truth: DmlTruth) -> float:
    """Effect estimate with the exact conditional means in place of learners.

    Residualizes by E[Y|W] = alpha f + g and E[D|W] = f; with zero outcome
    noise this returns alpha exactly, so it is the benchmark the cross-fitted
    estimator should approach.
    """
    y = data.column(data.schema.outcome.name)
    d = data.column(data.schema.policy.name)
    ell = truth.alpha_true * truth.f_values + truth.g_values
    res = Residuals(y - ell, d - truth.f_values,
                    np.zeros(data.n, dtype=np.int64))
    return estimate_alpha(res)


# ---------------------------------------------------------------------------
# Named presets (closed set so validation studies stay auditable)
# ---------------------------------------------------------------------------

def dml_preset(name: str, n: int, seed: int) -> DmlDgpSpec:
    base = {
        "dml-strong-confounding": dict(g_form="sine-quadratic", f_form="sine-quadratic",
                                       confounding_strength=1.5, noise_sd=2.0, w_dim=5),
        "dml-no-confounding": dict(g_form="sine-quadratic", f_form="sine-quadratic",
                                   confounding_strength=0.0, noise_sd=2.0, w_dim=5),
        "dml-linear": dict(g_form="linear", f_form="linear",
                           confounding_strength=1.0, noise_sd=1.0, w_dim=5),
    }
    if name not in base:
        raise ValueError(f"unknown preset {name!r}")
    return DmlDgpSpec(alpha_true=-1.115, n=n, seed=seed, **base[name])


def copula_preset(name: str, n: int, seed: int) -> CopulaDgpSpec:
    margins = dict(beta=(0.8, -0.5), gamma=(-0.6, 1.0, 0.5), deltas=(-0.4, 1.2))
    families = {
        "copula-frank": CopulaFamily("frank", -2.0),
        "copula-product": CopulaFamily("product"),
        "copula-gaussian": CopulaFamily("gaussian", -0.4),
        "copula-fgm": CopulaFamily("fgm", -0.7),
    }
    if name not in families:
        raise ValueError(f"unknown preset {name!r}")
    return CopulaDgpSpec(family=families[name], n=n, seed=seed, **margins)


PRESET_NAMES = (
    "dml-strong-confounding", "dml-no-confounding", "dml-linear",
    "copula-frank", "copula-product", "copula-gaussian", "copula-fgm",
)


def make_preset(name: str, n: int, seed: int):
    if name.startswith("dml-"):
        return dml_preset(name, n, seed)
    return copula_preset(name, n, seed)


def spec_to_report(spec) -> dict:
    """JSON-ready echo of a generator spec (format tag dgp/1)."""
    if isinstance(spec, DmlDgpSpec):
        return {
            "format": "dgp/1",
            "kind": "partially-linear",
            "alpha_true": float(spec.alpha_true),
            "g_form": spec.g_form,
            "f_form": spec.f_form,
            "confounding_strength": float(spec.confounding_strength),
            "noise_sd": float(spec.noise_sd),
            "w_dim": int(spec.w_dim),
            "n": int(spec.n),
            "seed": int(spec.seed),
        }
    return {
        "format": "dgp/1",
        "kind": "copula-joint",
        "beta": [float(b) for b in spec.beta],
        "gamma": [float(g) for g in spec.gamma],
        "deltas": [float(d) for d in spec.deltas],
        "family": spec.family.family,
        "theta": None if spec.family.theta is None else float(spec.family.theta),
        "n": int(spec.n),
        "seed": int(spec.seed),
    }
