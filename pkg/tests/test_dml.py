"""Cross-fitting, the moment estimator, and sandwich inference."""

import numpy as np
import pytest

from orthoestim.dataset import Column, Dataset, VariableSchema
from orthoestim.dml import (
    DmlConfig,
    Residuals,
    alpha_inference,
    cross_fit_nuisances,
    estimate_alpha,
    moment_cost,
    naive_alpha,
    run_dml,
)
from orthoestim.errors import (
    DegeneratePropensityWarning,
    DegenerateTreatmentResidual,
    NoPolicyVariation,
)
from orthoestim.forest import ForestConfig
from orthoestim.synth import DmlDgpSpec, generate_dml_data


def small_config(seed=0, k_folds=3, trees=10):
    learner = ForestConfig(n_trees=trees, min_samples_split=10, min_samples_leaf=5,
                           seed=seed)
    return DmlConfig(outcome_learner=learner, policy_learner=learner,
                     k_folds=k_folds, seed=seed)


def zero_learner(record=None):
    def fit(X_train, y_train, seed):
        if record is not None:
            record.append(np.array(X_train, copy=True))
        return lambda X_new: np.zeros(X_new.shape[0])

    return fit


def toy_dataset(n=60, seed=0):
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1, 1, size=(n, 2))
    d = (rng.uniform(size=n) < 0.5).astype(float)
    y = 1.5 * d + W[:, 0] + rng.normal(0, 0.1, n)
    schema = VariableSchema((
        Column("y", "continuous", "outcome"),
        Column("d", "binary", "policy"),
        Column("w1", "continuous", "covariate"),
        Column("w2", "continuous", "covariate"),
    ))
    return Dataset(schema, np.column_stack([y, d, W]))


class TestCrossFit:
    def test_zero_predictors_give_identity_residuals(self):
        data = toy_dataset()
        res = cross_fit_nuisances(data, small_config(), outcome_fit=zero_learner(),
                                  policy_fit=zero_learner())
        assert np.array_equal(res.y_tilde, data.column("y"))
        assert np.array_equal(res.d_tilde, data.column("d"))

    def test_training_sets_exclude_own_fold(self):
        data = toy_dataset(n=48)
        captured = []
        config = small_config(k_folds=4)
        res = cross_fit_nuisances(data, config, outcome_fit=zero_learner(captured),
                                  policy_fit=zero_learner())
        W = data.matrix(("w1", "w2"))
        # rows are unique, so identify each captured training set by matching rows
        for fold, X_train in enumerate(captured):
            test_rows = W[res.fold_of == fold]
            for row in test_rows:
                assert not np.any(np.all(np.isclose(X_train, row), axis=1))
            assert X_train.shape[0] == np.sum(res.fold_of != fold)

    def test_propensity_accuracy_improves_with_n(self):
        errs = {}
        for n in (1000, 10000):
            spec = DmlDgpSpec(alpha_true=-1.0, n=n, seed=3)
            data, truth = generate_dml_data(spec)
            res = cross_fit_nuisances(data, small_config(trees=40, seed=1))
            f_hat = data.column("d") - res.d_tilde
            errs[n] = float(np.mean(np.abs(f_hat - truth.f_values)))
        assert errs[10000] < errs[1000]

    def test_no_policy_variation(self):
        data = toy_dataset()
        rows = np.array(data.rows, copy=True)
        rows[:, 1] = 1.0
        with pytest.raises(NoPolicyVariation):
            cross_fit_nuisances(Dataset(data.schema, rows), small_config())

    def test_constant_fold_warns(self):
        # 11 treated of 12: some training folds keep both, the k=6 split
        # leaves at least one fold with all-constant policy in training
        rng = np.random.default_rng(5)
        n = 12
        rows = np.column_stack([
            rng.normal(size=n),
            np.r_[np.zeros(1), np.ones(n - 1)],
            rng.normal(size=n),
            rng.normal(size=n),
        ])
        data = Dataset(toy_dataset().schema, rows)
        with pytest.warns(DegeneratePropensityWarning):
            cross_fit_nuisances(data, small_config(k_folds=6, trees=2),
                                outcome_fit=zero_learner(), policy_fit=zero_learner())


class TestEstimateAlpha:
    def test_noiseless_proportionality(self):
        d = np.array([1.0, -0.5, 2.0, 0.25])
        res = Residuals(2.0 * d, d, np.zeros(4, dtype=np.int64))
        assert estimate_alpha(res) == pytest.approx(2.0, abs=1e-15)

    def test_orthogonal_residuals(self):
        d = np.array([1.0, -1.0, 1.0, -1.0])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        res = Residuals(y, d, np.zeros(4, dtype=np.int64))
        assert abs(estimate_alpha(res)) < 1e-12

    def test_matches_grid_refinement_oracle(self):
        rng = np.random.default_rng(6)
        y = rng.normal(size=300)
        d = rng.normal(size=300)
        res = Residuals(y, d, np.zeros(300, dtype=np.int64))
        alpha = estimate_alpha(res)

        def sse(a):
            return float(np.sum((y - d * a) ** 2))

        lo, hi = -10.0, 10.0
        for _ in range(80):  # repeated grid refinement to 1e-10 bracket width
            grid = np.linspace(lo, hi, 33)
            vals = [sse(a) for a in grid]
            j = int(np.argmin(vals))
            lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, 32)]
            if hi - lo < 1e-12:
                break
        assert abs(alpha - 0.5 * (lo + hi)) < 1e-8

    def test_degenerate_treatment_residual(self):
        res = Residuals(np.ones(5), np.zeros(5), np.zeros(5, dtype=np.int64))
        with pytest.raises(DegenerateTreatmentResidual):
            estimate_alpha(res)


class TestMomentCost:
    def residuals(self):
        rng = np.random.default_rng(7)
        return Residuals(rng.normal(size=200), rng.normal(size=200),
                         np.zeros(200, dtype=np.int64))

    def test_zero_at_solution(self):
        res = self.residuals()
        assert abs(moment_cost(res, estimate_alpha(res))) < 1e-12

    def test_affine_with_slope_minus_mean_d2(self):
        res = self.residuals()
        alpha = estimate_alpha(res)
        slope = -float(np.mean(res.d_tilde**2))
        assert moment_cost(res, alpha + 1.0) == pytest.approx(slope, abs=1e-12)
        for shift in (-2.0, 0.5, 3.25):
            expected = moment_cost(res, alpha) + slope * shift
            assert moment_cost(res, alpha + shift) == pytest.approx(expected, abs=1e-12)

    def test_sign_flips_across_solution(self):
        res = self.residuals()
        alpha = estimate_alpha(res)
        assert moment_cost(res, alpha - 0.1) > 0
        assert moment_cost(res, alpha + 0.1) < 0


class TestInference:
    def test_homoskedastic_closed_form(self):
        rng = np.random.default_rng(8)
        n = 10000
        d = rng.normal(0, 0.7, n)
        sigma = 1.3
        y = 0.8 * d + rng.normal(0, sigma, n)
        res = Residuals(y, d, np.zeros(n, dtype=np.int64))
        alpha = estimate_alpha(res)
        se, _, _ = alpha_inference(res, alpha)
        reference = sigma / np.sqrt(n * np.var(d))
        assert abs(se - reference) / reference < 0.15

    def test_duplication_scales_se(self):
        rng = np.random.default_rng(9)
        y = rng.normal(size=500)
        d = rng.normal(size=500)
        res1 = Residuals(y, d, np.zeros(500, dtype=np.int64))
        res2 = Residuals(np.tile(y, 2), np.tile(d, 2), np.zeros(1000, dtype=np.int64))
        alpha = estimate_alpha(res1)
        se1, _, _ = alpha_inference(res1, alpha)
        se2, _, _ = alpha_inference(res2, alpha)
        assert abs(se2 - se1 / np.sqrt(2.0)) < 1e-10

    def test_normal_quantile_half_width(self):
        rng = np.random.default_rng(10)
        y = rng.normal(size=200)
        d = rng.normal(size=200)
        res = Residuals(y, d, np.zeros(200, dtype=np.int64))
        alpha = estimate_alpha(res)
        se, lo, hi = alpha_inference(res, alpha, level=0.95)
        half = 0.5 * (hi - lo)
        assert half == pytest.approx(1.959963984540054 * se, abs=1e-10)
        assert lo <= alpha <= hi


class TestRunDml:
    def test_composition_and_determinism(self):
        spec = DmlDgpSpec(alpha_true=-1.0, n=1500, seed=11,
                          confounding_strength=1.0)
        data, _ = generate_dml_data(spec)
        config = small_config(trees=20, seed=2)
        est1 = run_dml(data, config)
        est2 = run_dml(data, config, n_threads=2)
        assert est1.alpha == est2.alpha
        assert est1.std_error == est2.std_error
        assert est1.per_fold_alphas == est2.per_fold_alphas
        assert abs(est1.cost) < 1e-12
        assert est1.ci_low <= est1.alpha <= est1.ci_high
        assert len(est1.per_fold_alphas) == config.k_folds

    def test_shift_identity(self):
        data = toy_dataset(n=80, seed=12)
        res = cross_fit_nuisances(data, small_config(trees=8, seed=3))
        alpha = estimate_alpha(res)
        c = 2.71
        shifted = Residuals(res.y_tilde + c, res.d_tilde, res.fold_of)
        expected = alpha + c * float(np.sum(res.d_tilde) / np.sum(res.d_tilde**2))
        assert estimate_alpha(shifted) == pytest.approx(expected, abs=1e-10)

    def test_report_serializes(self):
        import json

        from orthoestim.dml import estimate_to_report

        data = toy_dataset(n=100, seed=13)
        est = run_dml(data, small_config(trees=5, seed=4))
        report = estimate_to_report(est)
        assert report["format"] == "dml/1"
        assert report["config"]["outcome_learner"]["n_trees"] == 5
        json.dumps(report)

    def test_naive_alpha(self):
        data = toy_dataset(n=4000, seed=14)
        # toy policy is unconfounded, so naive lands near the true effect 1.5
        assert abs(naive_alpha(data) - 1.5) < 0.15

    def test_no_confounding_matches_naive(self):
        from orthoestim.synth import dml_preset

        spec = dml_preset("dml-no-confounding", 8000, 15)
        data, _ = generate_dml_data(spec)
        est = run_dml(data, small_config(trees=25, seed=5, k_folds=5), n_threads=2)
        naive = naive_alpha(data)
        y = data.column("y")
        d = data.column("d")
        naive_se = float(np.sqrt(y[d == 1].var() / np.sum(d == 1)
                                 + y[d == 0].var() / np.sum(d == 0)))
        assert abs(est.alpha - naive) < 2 * (est.std_error + naive_se)


class TestConfigValidation:
    def test_bad_folds(self):
        with pytest.raises(ValueError):
            small_config(k_folds=1)

    def test_bad_level(self):
        learner = ForestConfig(n_trees=2, seed=0)
        with pytest.raises(ValueError):
            DmlConfig(outcome_learner=learner, policy_learner=learner,
                      confidence_level=1.0)
