"""Joint model of a binary outcome and an ordered outcome linked by a copula.

The joint cell probabilities couple the two logistic marginals through
C_theta; maximum likelihood runs on an unconstrained parameterization
(log threshold increments, tanh-mapped theta where the family is bounded)
with fully analytic gradients. Standard errors come from a finite-difference
Hessian of the analytic gradient on the reported parameter scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import kendalltau

from . import choice
from .choice import (
    PROB_FLOOR,
    delta_grad_to_unconstrained,
    deltas_to_unconstrained,
    extend_thresholds,
    logistic_cdf,
    logistic_pdf,
    unconstrained_to_deltas,
)
from .copulas import CopulaFamily, copula_partials
from .dataset import Dataset
from .errors import (
    DegenerateLikelihood,
    DimMismatch,
    NegativeCell,
    OrthoestimError,
    ThresholdOrder,
)

NEGATIVE_CELL_TOL = -1e-12


@dataclass(frozen=True)
class JointSpec:
    """Column layout and copula family for a joint fit.

    stress_outcome names the 0/1 column, wait_outcome the ordinal column;
    stress_columns / wait_columns are the covariates entering each equation.
    family may carry a theta (used as the starting value) or leave it None.
    """

    stress_outcome: str
    wait_outcome: str
    stress_columns: tuple[str, ...]
    wait_columns: tuple[str, ...]
    family: CopulaFamily
    k_levels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "stress_columns", tuple(self.stress_columns))
        object.__setattr__(self, "wait_columns", tuple(self.wait_columns))
        if isinstance(self.family, str):
            object.__setattr__(self, "family", CopulaFamily(self.family))
        if self.k_levels < 2:
            raise ValueError("k_levels must be >= 2")


@dataclass(frozen=True)
class JointParams:
    """Parameter bundle for evaluating joint probabilities."""

    beta: np.ndarray
    gamma: np.ndarray
    deltas: np.ndarray
    family: CopulaFamily

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64))
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=np.float64))
        deltas = np.asarray(self.deltas, dtype=np.float64)
        if np.any(np.diff(deltas) <= 0):
            raise ThresholdOrder(f"thresholds {deltas} are not strictly increasing")
        object.__setattr__(self, "deltas", deltas)

    @property
    def n_levels(self) -> int:
        return self.deltas.size + 1


@dataclass(frozen=True)
class JointFit:
    """Maximum-likelihood result for one copula family."""

    family: CopulaFamily
    beta: np.ndarray
    gamma: np.ndarray
    deltas: np.ndarray
    theta: float | None
    loglik: float
    bic: float
    std_errors: np.ndarray | None
    t_stats: np.ndarray | None
    n: int
    p: int
    converged: bool
    iterations: int
    param_names: tuple[str, ...]
    notes: tuple[str, ...] = ()

    def params(self) -> JointParams:
        return JointParams(self.beta, self.gamma, self.deltas, self.family)


def bic(loglik: float, p: int, n: int) -> float:
    """Bayesian Information Criterion: -2 loglik + p ln(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if p < 0:
        raise ValueError("p must be >= 0")
    return -2.0 * loglik + p * math.log(n)


# ---------------------------------------------------------------------------
# Cell probabilities
# ---------------------------------------------------------------------------

def _cell_core(beta, gamma, deltas, cop: CopulaFamily, X, Z, r, kcat):
    """Probability of each observed (r, k) cell plus the pieces its gradient needs."""
    xb = X @ beta
    u = logistic_cdf(-xb)
    ext = extend_thresholds(deltas)
    index = Z @ gamma
    a_hi = ext[kcat] - index
    a_lo = ext[kcat - 1] - index
    v_hi = logistic_cdf(a_hi)
    v_lo = logistic_cdf(a_lo)
    C_hi, Cu_hi, Cv_hi, Ct_hi = copula_partials(cop, u, v_hi)
    C_lo, Cu_lo, Cv_lo, Ct_lo = copula_partials(cop, u, v_lo)
    r1 = r == 1
    prob = np.where(r1, (v_hi - C_hi) - (v_lo - C_lo), C_hi - C_lo)
    pieces = {
        "xb": xb,
        "a_hi": a_hi,
        "a_lo": a_lo,
        "dPdu": np.where(r1, Cu_lo - Cu_hi, Cu_hi - Cu_lo),
        "dPdv_hi": np.where(r1, 1.0 - Cv_hi, Cv_hi),
        "dPdv_lo": np.where(r1, Cv_lo - 1.0, -Cv_lo),
        "dPdth": np.where(r1, Ct_lo - Ct_hi, Ct_hi - Ct_lo),
    }
    return prob, pieces


def joint_cell_prob(params: JointParams, x, z, r: int, k: int) -> float:
    """P(stress = r, level = k | x, z) for one observation.

    Raises NegativeCell if the copula produces a cell below -1e-12 (an
    invalid-parameter symptom); tiny negative round-off clips to 0.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != params.beta.shape:
        raise DimMismatch(f"x has shape {x.shape}, beta has {params.beta.shape}")
    if z.shape != params.gamma.shape:
        raise DimMismatch(f"z has shape {z.shape}, gamma has {params.gamma.shape}")
    if r not in (0, 1):
        raise ValueError("r must be 0 or 1")
    if not 1 <= k <= params.n_levels:
        raise ValueError(f"k={k} outside 1..{params.n_levels}")
    prob, _ = _cell_core(
        params.beta, params.gamma, params.deltas, params.family,
        x[None, :], z[None, :], np.array([r]), np.array([k]),
    )
    p = float(prob[0])
    if p < NEGATIVE_CELL_TOL:
        raise NegativeCell(f"cell probability {p} below {NEGATIVE_CELL_TOL}")
    return max(p, 0.0)


def cell_prob_table(params: JointParams, X, Z) -> np.ndarray:
    """All 2 x K cell probabilities per observation, shape (n, 2, K)."""
    X = np.asarray(X, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    n = X.shape[0]
    K = params.n_levels
    out = np.empty((n, 2, K))
    for r in (0, 1):
        for k in range(1, K + 1):
            prob, _ = _cell_core(
                params.beta, params.gamma, params.deltas, params.family,
                X, Z, np.full(n, r), np.full(n, k),
            )
            out[:, r, k - 1] = prob
    return out


# ---------------------------------------------------------------------------
# Likelihood and fitting
# ---------------------------------------------------------------------------

def _joint_loglik_core(beta, gamma, deltas, cop, X, Z, r, kcat, floor=None):
    """(loglik, reported-scale gradient, floored?) over all observations."""
    prob, pieces = _cell_core(beta, gamma, deltas, cop, X, Z, r, kcat)
    floored = bool(np.any(prob < (floor if floor is not None else 0.0)))
    if floor is None:
        if np.any(prob <= 0.0):
            raise DegenerateLikelihood(row=int(np.argmax(prob <= 0.0)))
        safe = prob
    else:
        safe = np.maximum(prob, floor)
    inv_p = 1.0 / safe
    value = float(np.sum(np.log(safe)))

    g_beta = -X.T @ (pieces["dPdu"] * inv_p * logistic_pdf(pieces["xb"]))
    s_hi = logistic_pdf(pieces["a_hi"])
    s_lo = logistic_pdf(pieces["a_lo"])
    w_hi = pieces["dPdv_hi"] * s_hi * inv_p
    w_lo = pieces["dPdv_lo"] * s_lo * inv_p
    g_gamma = -Z.T @ (w_hi + w_lo)
    K = deltas.size + 1
    g_delta = (
        np.bincount(kcat, weights=w_hi, minlength=K + 1)[1:K]
        + np.bincount(kcat - 1, weights=w_lo, minlength=K + 1)[1:K]
    )
    parts = [g_beta, g_gamma, g_delta]
    if cop.has_theta:
        parts.append(np.array([np.sum(pieces["dPdth"] * inv_p)]))
    return value, np.concatenate(parts), floored


def _extract(spec: JointSpec, data: Dataset):
    """Pull (X, Z, r, k) from the dataset, mapping ordinal categories to 1..K."""
    X = data.matrix(spec.stress_columns) if spec.stress_columns else np.empty((data.n, 0))
    Z = data.matrix(spec.wait_columns) if spec.wait_columns else np.empty((data.n, 0))
    r_raw = data.column(spec.stress_outcome)
    if np.any((r_raw != 0.0) & (r_raw != 1.0)):
        raise ValueError(f"column {spec.stress_outcome!r} must be 0/1 for the stress equation")
    r = r_raw.astype(np.int64)
    col = data.schema.column(spec.wait_outcome)
    k_raw = data.column(spec.wait_outcome)
    if col.kind == "ordinal":
        cats = np.asarray(col.categories)
        if cats.size != spec.k_levels:
            raise ValueError(
                f"{spec.wait_outcome!r} declares {cats.size} categories, spec expects {spec.k_levels}"
            )
        kcat = np.searchsorted(cats, k_raw) + 1
    else:
        kcat = k_raw.astype(np.int64)
        if np.any((kcat < 1) | (kcat > spec.k_levels) | (kcat != k_raw)):
            raise ValueError(f"{spec.wait_outcome!r} must hold integer levels 1..{spec.k_levels}")
    return X, Z, r, kcat.astype(np.int64)


def joint_loglik(spec: JointSpec, params: JointParams, data: Dataset) -> float:
    """Sum of log joint cell probabilities of the observed (r, k) pairs."""
    X, Z, r, kcat = _extract(spec, data)
    value, _, _ = _joint_loglik_core(
        params.beta, params.gamma, params.deltas, params.family, X, Z, r, kcat,
    )
    return value


def _theta_to_unc(family: str, theta: float) -> float:
    return float(np.arctanh(theta)) if family in ("fgm", "gaussian") else float(theta)


def _theta_from_unc(family: str, t: float) -> float:
    if family in ("fgm", "gaussian"):
        th = math.tanh(t)
        cap = 1.0 - 1e-12
        return min(max(th, -cap), cap)
    return t


@dataclass(frozen=True)
class OptimizerSettings:
    gtol: float = 1e-6
    max_iter: int = 500
    fd_step: float = 1e-5


def _count_params(px: int, pz: int, K: int, has_theta: bool) -> int:
    return px + pz + (K - 1) + (1 if has_theta else 0)


def _param_names(spec: JointSpec) -> tuple[str, ...]:
    names = [f"stress:{c}" for c in spec.stress_columns]
    names += [f"wait:{c}" for c in spec.wait_columns]
    names += [f"threshold_{j + 1}" for j in range(spec.k_levels - 1)]
    if CopulaFamily(spec.family.family, None).has_theta:
        names.append("copula_theta")
    return tuple(names)


def _reported_gradient(vec, dims, family_name, X, Z, r, kcat):
    px, pz, K = dims
    beta = vec[:px]
    gamma = vec[px:px + pz]
    deltas = vec[px + pz:px + pz + K - 1]
    fam = CopulaFamily(family_name, vec[-1] if family_name != "product" else None)
    _, grad, _ = _joint_loglik_core(beta, gamma, deltas, fam, X, Z, r, kcat, floor=PROB_FLOOR)
    return grad


def _fd_hessian(vec, dims, family_name, X, Z, r, kcat, step):
    m = vec.size
    H = np.empty((m, m))
    for i in range(m):
        h = step * max(1.0, abs(vec[i]))
        up = vec.copy()
        dn = vec.copy()
        up[i] += h
        dn[i] -= h
        g_up = _reported_gradient(up, dims, family_name, X, Z, r, kcat)
        g_dn = _reported_gradient(dn, dims, family_name, X, Z, r, kcat)
        H[i] = (g_up - g_dn) / (2.0 * h)
    return 0.5 * (H + H.T)


def fit_joint_mle(
    spec: JointSpec,
    data: Dataset,
    init: JointParams | None = None,
    opts: OptimizerSettings | None = None,
) -> JointFit:
    """Maximize the joint log-likelihood by BFGS from a marginal warm start.

    The default start fits the two marginals separately and seeds theta at
    +-0.1 with the sign of the empirical Kendall tau between the outcomes.
    Standard errors invert the negative finite-difference Hessian at the
    optimum on the reported scale; if that matrix is not positive definite
    the fit is returned with std_errors=None and a note.
    """
    opts = opts or OptimizerSettings()
    X, Z, r, kcat = _extract(spec, data)
    n = data.n
    K = spec.k_levels
    px, pz = X.shape[1], Z.shape[1]
    family_name = spec.family.family
    has_theta = family_name != "product"
    p_total = _count_params(px, pz, K, has_theta)
    if n <= p_total:
        raise ValueError(f"need n > p ({n} observations for {p_total} parameters)")
    if r.min() == r.max():
        raise ValueError("stress outcome has no variation")
    if np.unique(kcat).size < 2:
        raise ValueError("need at least 2 observed wait categories")

    if init is not None:
        beta0, gamma0, deltas0 = init.beta, init.gamma, init.deltas
        theta0 = init.family.theta if has_theta else None
        if has_theta and theta0 is None:
            theta0 = _tau_seed(r, kcat)
    else:
        beta0 = choice.fit_binary_logit(X, r).beta
        om = choice.fit_ordered_logit(Z, kcat, K)
        gamma0, deltas0 = om.gamma, om.deltas
        theta0 = spec.family.theta
        if has_theta and theta0 is None:
            theta0 = _tau_seed(r, kcat)

    psi0 = np.concatenate([
        beta0, gamma0, deltas_to_unconstrained(deltas0),
        [np.clip(_theta_to_unc(family_name, theta0), -5.0, 5.0)] if has_theta else [],
    ])

    def unpack(psi):
        beta = psi[:px]
        gamma = psi[px:px + pz]
        deltas = unconstrained_to_deltas(psi[px + pz:px + pz + K - 1])
        theta = _theta_from_unc(family_name, psi[-1]) if has_theta else None
        return beta, gamma, deltas, theta

    def objective(psi):
        beta, gamma, deltas, theta = unpack(psi)
        try:
            cop = CopulaFamily(family_name, theta)
            value, grad, _ = _joint_loglik_core(
                beta, gamma, deltas, cop, X, Z, r, kcat, floor=PROB_FLOOR,
            )
        except FloatingPointError:
            value, grad = -np.inf, None
        if not np.isfinite(value):
            return 1e300, np.zeros(psi.size)
        s = psi[px + pz:px + pz + K - 1]
        g = np.concatenate([
            grad[:px + pz],
            delta_grad_to_unconstrained(grad[px + pz:px + pz + K - 1], s),
        ])
        if has_theta:
            dth = 1.0 - theta * theta if family_name in ("fgm", "gaussian") else 1.0
            g = np.concatenate([g, [grad[-1] * dth]])
        return -value, -g

    with np.errstate(over="raise", invalid="raise"):
        res = minimize(objective, psi0, jac=True, method="BFGS",
                       options={"gtol": opts.gtol, "maxiter": opts.max_iter})
        iterations = int(res.nit)
        # Near the optimum at large n the objective differences drop below
        # float resolution and the line search stalls; Newton steps on the
        # analytic gradient still converge.
        psi = _newton_polish(objective, res.x, opts.gtol, opts.fd_step)

    beta, gamma, deltas, theta = unpack(psi)
    cop = CopulaFamily(family_name, theta)
    # reject any fit that still leans on the probability floor
    loglik, _, _ = _joint_loglik_core(beta, gamma, deltas, cop, X, Z, r, kcat, floor=None)
    _, g_final = objective(psi)
    converged = bool(np.max(np.abs(g_final)) < opts.gtol)

    notes = []
    reported = np.concatenate([beta, gamma, deltas, [theta] if has_theta else []])
    std_errors = t_stats = None
    try:
        H = _fd_hessian(reported, (px, pz, K), family_name, X, Z, r, kcat, opts.fd_step)
        factor = cho_factor(-H)
        cov = cho_solve(factor, np.eye(reported.size))
        diag = np.diag(cov)
        if np.any(diag <= 0):
            raise LinAlgError("non-positive variance")
        std_errors = np.sqrt(diag)
        t_stats = reported / std_errors
    except (LinAlgError, DegenerateLikelihood, FloatingPointError) as exc:
        notes.append(f"standard errors unavailable: {exc}")

    return JointFit(
        family=cop,
        beta=beta,
        gamma=gamma,
        deltas=deltas,
        theta=theta if has_theta else None,
        loglik=loglik,
        bic=bic(loglik, p_total, n),
        std_errors=std_errors,
        t_stats=t_stats,
        n=n,
        p=p_total,
        converged=converged,
        iterations=iterations,
        param_names=_param_names(spec),
        notes=tuple(notes),
    )


def _newton_polish(objective, psi, gtol, fd_step, max_steps=3):
    """Damped Newton refinement on the unconstrained scale.

    Accepts a step only when it shrinks the gradient max-norm, so a stalled
    but already-converged point passes through unchanged.
    """
    _, g = objective(psi)
    for _ in range(max_steps):
        if np.max(np.abs(g)) < gtol:
            break
        m = psi.size
        H = np.empty((m, m))
        for i in range(m):
            h = fd_step * max(1.0, abs(psi[i]))
            up, dn = psi.copy(), psi.copy()
            up[i] += h
            dn[i] -= h
            H[i] = (objective(up)[1] - objective(dn)[1]) / (2.0 * h)
        H = 0.5 * (H + H.T)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        _, g_new = objective(psi + step)
        if np.max(np.abs(g_new)) >= np.max(np.abs(g)):
            break
        psi = psi + step
        g = g_new
    return psi


def _tau_seed(r, kcat) -> float:
    tau = kendalltau(r, kcat).statistic
    if not np.isfinite(tau):
        tau = 0.0
    return 0.1 if tau >= 0 else -0.1


@dataclass(frozen=True)
class FamilyFitRow:
    family: str
    fit: JointFit | None
    error: str | None = None


def compare_families(
    spec: JointSpec,
    data: Dataset,
    families: Sequence[str | CopulaFamily],
    opts: OptimizerSettings | None = None,
) -> list[FamilyFitRow]:
    """Fit every family from one shared marginal warm start; rank by BIC.

    Returns one row per requested family (failures keep their slot with the
    error text), sorted ascending by BIC with failures last.
    """
    if not families:
        raise ValueError("need at least one family to compare")
    X, Z, r, kcat = _extract(spec, data)
    beta0 = choice.fit_binary_logit(X, r).beta
    om = choice.fit_ordered_logit(Z, kcat, spec.k_levels)
    rows = []
    for fam in families:
        cop = fam if isinstance(fam, CopulaFamily) else CopulaFamily(str(fam))
        warm = JointParams(beta0, om.gamma, om.deltas, cop)
        try:
            fit = fit_joint_mle(replace(spec, family=cop), data, init=warm, opts=opts)
            rows.append(FamilyFitRow(cop.family, fit))
        except OrthoestimError as exc:
            rows.append(FamilyFitRow(cop.family, None, f"{type(exc).__name__}: {exc}"))
    rows.sort(key=lambda row: row.fit.bic if row.fit is not None else np.inf)
    return rows


def fit_to_report(fit: JointFit) -> dict:
    """JSON-ready dict for one fitted family (format tag jointfit/1)."""
    estimates = np.concatenate([
        fit.beta, fit.gamma, fit.deltas,
        [fit.theta] if fit.theta is not None else [],
    ])
    return {
        "format": "jointfit/1",
        "family": fit.family.family,
        "theta": None if fit.theta is None else float(fit.theta),
        "parameters": {
            name: float(value) for name, value in zip(fit.param_names, estimates)
        },
        "std_errors": None if fit.std_errors is None else {
            name: float(se) for name, se in zip(fit.param_names, fit.std_errors)
        },
        "t_stats": None if fit.t_stats is None else {
            name: float(t) for name, t in zip(fit.param_names, fit.t_stats)
        },
        "loglik": float(fit.loglik),
        "bic": float(fit.bic),
        "n": int(fit.n),
        "p": int(fit.p),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "notes": list(fit.notes),
    }
