"""Generators with known ground truth: sampling statistics and round trips."""

import numpy as np
import pytest
from scipy.stats import chi2, kendalltau

from orthoestim.copulas import CopulaFamily
from orthoestim.dataset import load_csv
from orthoestim.joint import cell_prob_table
from orthoestim.synth import (
    CopulaDgpSpec,
    DmlDgpSpec,
    dml_preset,
    generate_copula_data,
    generate_dml_data,
    infeasible_alpha,
    make_preset,
    spec_to_report,
    true_f,
    true_g,
)


def copula_spec(**kwargs):
    base = dict(beta=(0.8, -0.5), gamma=(-0.6, 1.0), deltas=(-0.4, 1.2),
                family=CopulaFamily("frank", -2.0), n=500, seed=0)
    base.update(kwargs)
    return CopulaDgpSpec(**base)


class TestCopulaGenerator:
    def test_reproducible_bits(self):
        a = generate_copula_data(copula_spec(seed=5))
        b = generate_copula_data(copula_spec(seed=5))
        assert np.array_equal(a.rows, b.rows)

    def test_empty_dataset(self):
        ds = generate_copula_data(copula_spec(n=0))
        assert ds.n == 0

    def test_product_frequencies_match_margins(self):
        spec = copula_spec(beta=(0.0, 0.0), gamma=(0.0, 0.0), deltas=(-0.7, 0.7),
                           family=CopulaFamily("product"), n=100_000, seed=1)
        data = generate_copula_data(spec)
        r = data.column("stress")
        k = data.column("wait_cat")
        p_r1 = 0.5
        from orthoestim.choice import logistic_cdf

        masses = np.array([
            logistic_cdf(-0.7),
            logistic_cdf(0.7) - logistic_cdf(-0.7),
            1 - logistic_cdf(0.7),
        ])
        for r_val, r_mass in ((0, 1 - p_r1), (1, p_r1)):
            for k_val in (1, 2, 3):
                cell_p = r_mass * masses[k_val - 1]
                freq = np.mean((r == r_val) & (k == k_val))
                sd = np.sqrt(cell_p * (1 - cell_p) / spec.n)
                assert abs(freq - cell_p) < 3 * sd + 1e-12

    def test_negative_theta_gives_negative_rank_correlation(self):
        spec = copula_spec(family=CopulaFamily("frank", -5.0), n=20_000, seed=2)
        data = generate_copula_data(spec)
        tau = kendalltau(data.column("stress"), data.column("wait_cat")).statistic
        assert tau < -0.02

    def test_csv_round_trip(self, tmp_path):
        data = generate_copula_data(copula_spec(seed=3))
        path = tmp_path / "copula.csv"
        data.to_csv(path)
        again = load_csv(path, data.schema)
        assert np.array_equal(data.rows, again.rows)

    def test_chi_square_goodness_of_fit_across_seeds(self):
        spec0 = copula_spec(n=4000)
        params = spec0.params()
        rejected = 0
        for seed in range(20):
            spec = copula_spec(n=4000, seed=seed)
            data = generate_copula_data(spec)
            X = data.matrix(("x1", "x2"))
            Z = data.matrix(("density_low", "z2"))
            table = cell_prob_table(params, X, Z)
            r = data.column("stress").astype(int)
            k = data.column("wait_cat").astype(int)
            observed = np.zeros(6)
            expected = table.reshape(spec.n, 6).sum(axis=0)
            for i in range(spec.n):
                observed[r[i] * 3 + (k[i] - 1)] += 1
            stat = float(np.sum((observed - expected) ** 2 / expected))
            # conditional-on-covariates cell counts: 5 free cells
            if stat > chi2.ppf(1 - 0.001, df=5):
                rejected += 1
        # multiplicity-aware: P(>=3 rejections | alpha=0.001, 20 trials) ~ 1e-9
        assert rejected <= 2


class TestDmlGenerator:
    def test_reproducible_bits(self):
        a, _ = generate_dml_data(DmlDgpSpec(alpha_true=-1.0, n=300, seed=4))
        b, _ = generate_dml_data(DmlDgpSpec(alpha_true=-1.0, n=300, seed=4))
        assert np.array_equal(a.rows, b.rows)

    def test_noiseless_unconfounded_is_exact(self):
        spec = DmlDgpSpec(alpha_true=-1.115, noise_sd=0.0, confounding_strength=0.0,
                          n=500, seed=5)
        data, truth = generate_dml_data(spec)
        y = data.column("y")
        d = data.column("d")
        assert np.array_equal(y, spec.alpha_true * d)
        assert np.all(truth.g_values == 0.0)
        # naive difference in means is exact here
        assert y[d == 1].mean() - y[d == 0].mean() == pytest.approx(spec.alpha_true)

    def test_overlap_clamp(self):
        for strength in (1.0, 3.0, 10.0):
            spec = DmlDgpSpec(alpha_true=-1.0, confounding_strength=strength,
                              n=2000, seed=6)
            _, truth = generate_dml_data(spec)
            assert truth.f_values.min() >= 0.05
            assert truth.f_values.max() <= 0.95

    def test_strong_confounding_biases_naive(self):
        spec = dml_preset("dml-strong-confounding", n=50_000, seed=7)
        data, truth = generate_dml_data(spec)
        y = data.column("y")
        d = data.column("d")
        naive = y[d == 1].mean() - y[d == 0].mean()
        mc_se = np.sqrt(y[d == 1].var() / np.sum(d == 1) + y[d == 0].var() / np.sum(d == 0))
        assert abs(naive - spec.alpha_true) > 10 * mc_se

    def test_truth_matches_surfaces(self):
        spec = DmlDgpSpec(alpha_true=-0.5, n=200, seed=8)
        data, truth = generate_dml_data(spec)
        W = data.matrix(tuple(f"w{j+1}" for j in range(spec.w_dim)))
        assert np.array_equal(truth.g_values, true_g(spec, W))
        assert np.array_equal(truth.f_values, true_f(spec, W))

    def test_csv_round_trip(self, tmp_path):
        data, _ = generate_dml_data(DmlDgpSpec(alpha_true=-1.0, n=150, seed=9))
        path = tmp_path / "dml.csv"
        data.to_csv(path)
        again = load_csv(path, data.schema)
        assert np.array_equal(data.rows, again.rows)


class TestInfeasibleAlpha:
    def test_noiseless_exact(self):
        spec = DmlDgpSpec(alpha_true=-1.115, noise_sd=0.0, n=800, seed=10)
        data, truth = generate_dml_data(spec)
        assert infeasible_alpha(data, truth) == pytest.approx(-1.115, abs=1e-12)

    def test_large_sample_clt(self):
        spec = DmlDgpSpec(alpha_true=-1.115, noise_sd=1.0, n=100_000, seed=11)
        data, truth = generate_dml_data(spec)
        alpha = infeasible_alpha(data, truth)
        var_dt = np.mean((data.column("d") - truth.f_values) ** 2)
        analytic_se = spec.noise_sd / np.sqrt(spec.n * var_dt)
        assert abs(alpha - spec.alpha_true) < 4 * analytic_se


class TestPresets:
    def test_known_names(self):
        assert make_preset("dml-strong-confounding", 100, 0).confounding_strength > 0
        assert make_preset("dml-no-confounding", 100, 0).confounding_strength == 0
        assert make_preset("copula-frank", 100, 0).family.family == "frank"
        assert make_preset("copula-product", 100, 0).family.family == "product"
        with pytest.raises(ValueError):
            make_preset("dml-unknown", 100, 0)
        with pytest.raises(ValueError):
            make_preset("copula-unknown", 100, 0)

    def test_spec_reports(self):
        import json

        for name in ("dml-linear", "copula-frank"):
            report = spec_to_report(make_preset(name, 50, 1))
            assert report["format"] == "dgp/1"
            json.dumps(report)
