"""Joint copula model: cell probabilities, likelihood, MLE, BIC, ranking."""

import math

import numpy as np
import pytest
from scipy import integrate

from orthoestim.choice import (
    BinaryLogitParams,
    OrderedLogitParams,
    binary_logit_prob,
    fit_binary_logit,
    fit_ordered_logit,
    logistic_cdf,
    marginal_loglik,
    ordered_logit_prob,
)
from orthoestim.copulas import CopulaFamily
from orthoestim.errors import DegenerateLikelihood, NegativeCell
from orthoestim.joint import (
    JointParams,
    _joint_loglik_core,
    bic,
    cell_prob_table,
    compare_families,
    fit_joint_mle,
    fit_to_report,
    joint_cell_prob,
    joint_loglik,
)
from orthoestim.synth import CopulaDgpSpec, generate_copula_data, joint_spec_for
from tests.test_copulas import fgm_density, frank_density


def random_params(rng, family, px=2, pz=2, K=3):
    deltas = np.sort(rng.uniform(-1.5, 1.5, K - 1))
    while np.any(np.diff(deltas) < 0.2):
        deltas = np.sort(rng.uniform(-1.5, 1.5, K - 1))
    theta = {
        "frank": rng.uniform(-5, 5),
        "fgm": rng.uniform(-1, 1),
        "gaussian": rng.uniform(-0.85, 0.85),
        "product": None,
    }[family]
    return JointParams(
        beta=rng.normal(size=px) * 0.8,
        gamma=rng.normal(size=pz) * 0.8,
        deltas=deltas,
        family=CopulaFamily(family, theta),
    )


class TestCellProbabilities:
    def test_product_factorizes(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            params = random_params(rng, "product")
            x = rng.normal(size=2)
            z = rng.normal(size=2)
            bl = BinaryLogitParams(params.beta)
            ol = OrderedLogitParams(params.gamma, params.deltas)
            p1 = binary_logit_prob(bl, x)
            for r in (0, 1):
                for k in (1, 2, 3):
                    joint = joint_cell_prob(params, x, z, r, k)
                    marg = (p1 if r == 1 else 1 - p1) * ordered_logit_prob(ol, z, k)
                    assert abs(joint - marg) < 1e-14

    @pytest.mark.parametrize("family", ["frank", "fgm", "gaussian", "product"])
    def test_cells_sum_to_one(self, family):
        rng = np.random.default_rng(2)
        for _ in range(25):
            params = random_params(rng, family)
            X = rng.normal(size=(8, 2))
            Z = rng.normal(size=(8, 2))
            table = cell_prob_table(params, X, Z)
            assert table.min() >= -1e-12
            assert np.max(np.abs(table.sum(axis=(1, 2)) - 1.0)) < 1e-12

    @pytest.mark.parametrize("family,density", [("frank", frank_density), ("fgm", fgm_density)])
    def test_quadrature_oracle(self, family, density):
        rng = np.random.default_rng(3)
        theta = -0.738 if family == "frank" else -0.6
        for _ in range(6):
            params = random_params(rng, family)
            params = JointParams(params.beta, params.gamma, params.deltas,
                                 CopulaFamily(family, theta))
            x = rng.normal(size=2)
            z = rng.normal(size=2)
            u = logistic_cdf(-(params.beta @ x))
            ext = np.concatenate([[-np.inf], params.deltas, [np.inf]])
            index = params.gamma @ z
            r = int(rng.integers(0, 2))
            k = int(rng.integers(1, 4))
            v_lo = logistic_cdf(ext[k - 1] - index)
            v_hi = logistic_cdf(ext[k] - index)
            u_lo, u_hi = (u, 1.0) if r == 1 else (0.0, u)
            expected, _ = integrate.dblquad(
                lambda t, s: density(theta, s, t), u_lo, u_hi, v_lo, v_hi,
                epsabs=1e-10,
            )
            got = joint_cell_prob(params, x, z, r, k)
            assert abs(got - expected) < 1e-6

    def test_negative_cell_guard(self, monkeypatch):
        import orthoestim.joint as joint_mod

        def broken(cop, u, v):
            c = np.asarray(-u * v, dtype=float)
            return c, np.zeros_like(c), np.zeros_like(c), np.zeros_like(c)

        monkeypatch.setattr(joint_mod, "copula_partials", broken)
        params = JointParams(np.zeros(1), np.zeros(1), np.array([0.0, 1.0]),
                             CopulaFamily("product"))
        with pytest.raises(NegativeCell):
            joint_cell_prob(params, np.zeros(1), np.zeros(1), 0, 1)


class TestJointLoglik:
    def spec_and_data(self, n=40, seed=0, family=CopulaFamily("product")):
        spec = CopulaDgpSpec(beta=(0.5, -0.4), gamma=(-0.3, 0.6), deltas=(-0.5, 1.0),
                             family=family, n=n, seed=seed)
        return joint_spec_for(spec), generate_copula_data(spec), spec

    def test_single_product_observation(self):
        params = JointParams(np.zeros(1), np.zeros(1), np.array([0.0, 1.0]),
                             CopulaFamily("product"))
        p = joint_cell_prob(params, np.zeros(1), np.zeros(1), 1, 1)
        assert p == pytest.approx(0.25, abs=1e-15)

    def test_product_equals_sum_of_marginals(self):
        jspec, data, dgp = self.spec_and_data(n=200, seed=5)
        params = JointParams(np.array(dgp.beta), np.array(dgp.gamma),
                             np.array(dgp.deltas), CopulaFamily("product"))
        joint_value = joint_loglik(jspec, params, data)
        X = data.matrix(jspec.stress_columns)
        Z = data.matrix(jspec.wait_columns)
        r = data.column("stress")
        k = data.column("wait_cat").astype(int)
        b_value, _ = marginal_loglik(BinaryLogitParams(params.beta), X, r)
        o_value, _ = marginal_loglik(OrderedLogitParams(params.gamma, params.deltas), Z, k)
        assert joint_value == pytest.approx(b_value + o_value, abs=1e-9)

    def test_matches_slow_per_observation_loop(self):
        jspec, data, dgp = self.spec_and_data(n=100, seed=6,
                                              family=CopulaFamily("frank", -2.0))
        params = JointParams(np.array(dgp.beta), np.array(dgp.gamma),
                             np.array(dgp.deltas), dgp.family)
        fast = joint_loglik(jspec, params, data)
        slow = 0.0
        X = data.matrix(jspec.stress_columns)
        Z = data.matrix(jspec.wait_columns)
        r = data.column("stress").astype(int)
        k = data.column("wait_cat").astype(int)
        for i in range(data.n):
            slow += math.log(joint_cell_prob(params, X[i], Z[i], int(r[i]), int(k[i])))
        assert fast == pytest.approx(slow, abs=1e-10)

    def test_degenerate_likelihood(self):
        jspec, data, dgp = self.spec_and_data(n=10, seed=7)
        params = JointParams(np.array([800.0, 0.0]), np.array(dgp.gamma),
                             np.array(dgp.deltas), CopulaFamily("product"))
        with pytest.raises(DegenerateLikelihood):
            joint_loglik(jspec, params, data)


class TestJointGradient:
    @pytest.mark.parametrize("family", ["frank", "fgm", "gaussian", "product"])
    def test_matches_central_differences(self, family):
        rng = np.random.default_rng(17)
        for _ in range(4):
            params = random_params(rng, family)
            n = 12
            X = rng.normal(size=(n, 2))
            Z = rng.normal(size=(n, 2))
            r = rng.integers(0, 2, n)
            k = rng.integers(1, 4, n)
            cop = params.family
            has_theta = cop.has_theta

            def value_at(vec):
                beta, gamma = vec[:2], vec[2:4]
                deltas = vec[4:6]
                fam = CopulaFamily(family, vec[6] if has_theta else None)
                v, _, _ = _joint_loglik_core(beta, gamma, deltas, fam, X, Z, r, k)
                return v

            vec = np.concatenate([
                params.beta, params.gamma, params.deltas,
                [cop.theta] if has_theta else [],
            ])
            _, grad, _ = _joint_loglik_core(params.beta, params.gamma, params.deltas,
                                            cop, X, Z, r, k)
            h = 1e-5
            fd = np.empty_like(vec)
            for i in range(vec.size):
                up, dn = vec.copy(), vec.copy()
                up[i] += h
                dn[i] -= h
                fd[i] = (value_at(up) - value_at(dn)) / (2 * h)
            denom = np.maximum(np.abs(fd), 1e-6)
            assert np.max(np.abs(grad - fd) / denom) < 1e-6


class TestBic:
    def test_reference_anchor(self):
        assert bic(-1278.896, 26, 1046) == pytest.approx(2738.563, abs=0.01)

    def test_zero_case(self):
        assert bic(0.0, 0, 17) == 0.0

    def test_unit_log_penalty(self):
        for n in (3, 10, 1046):
            assert bic(-2.5, 1, n) == pytest.approx(5.0 + math.log(n), abs=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            bic(0.0, 1, 0)
        with pytest.raises(ValueError):
            bic(0.0, -1, 5)


class TestFitJointMle:
    def frank_data(self, n=4000, seed=0, theta=-2.5):
        dgp = CopulaDgpSpec(beta=(0.8, -0.5), gamma=(-0.6, 1.0), deltas=(-0.4, 1.2),
                            family=CopulaFamily("frank", theta), n=n, seed=seed)
        return joint_spec_for(dgp), generate_copula_data(dgp), dgp

    def test_recovers_frank_parameters(self):
        jspec, data, dgp = self.frank_data()
        fit = fit_joint_mle(jspec, data)
        assert fit.converged
        truth = np.concatenate([dgp.beta, dgp.gamma, dgp.deltas, [dgp.family.theta]])
        est = np.concatenate([fit.beta, fit.gamma, fit.deltas, [fit.theta]])
        assert np.max(np.abs(est[:-1] - truth[:-1])) < 0.25
        assert abs(est[-1] - truth[-1]) < 1.0
        assert fit.std_errors is not None
        assert fit.p == 2 + 2 + 2 + 1

    def test_bic_field_recomputation(self):
        jspec, data, _ = self.frank_data(n=800, seed=3)
        fit = fit_joint_mle(jspec, data)
        assert fit.bic == bic(fit.loglik, fit.p, fit.n)

    def test_product_fit_separates_into_marginals(self):
        jspec, data, _ = self.frank_data(n=1500, seed=4)
        from dataclasses import replace

        fit = fit_joint_mle(replace(jspec, family=CopulaFamily("product")), data)
        X = data.matrix(jspec.stress_columns)
        Z = data.matrix(jspec.wait_columns)
        bl = fit_binary_logit(X, data.column("stress"))
        ol = fit_ordered_logit(Z, data.column("wait_cat").astype(int), 3)
        assert np.max(np.abs(fit.beta - bl.beta)) < 1e-4
        assert np.max(np.abs(fit.gamma - ol.gamma)) < 1e-4
        assert np.max(np.abs(fit.deltas - ol.deltas)) < 1e-4
        assert fit.p == 2 + 2 + 2

    def test_null_dependence_theta_insignificant(self):
        insignificant = 0
        for seed in range(20):
            dgp = CopulaDgpSpec(beta=(0.8, -0.5), gamma=(-0.6, 1.0), deltas=(-0.4, 1.2),
                                family=CopulaFamily("product"), n=4000, seed=50 + seed)
            data = generate_copula_data(dgp)
            fit = fit_joint_mle(joint_spec_for(dgp, family="frank"), data)
            assert fit.param_names[-1] == "copula_theta"
            insignificant += abs(fit.t_stats[-1]) < 3
        assert insignificant >= 18

    def test_warm_and_cold_start_agree(self):
        jspec, data, dgp = self.frank_data(n=2500, seed=8)
        warm = fit_joint_mle(jspec, data)
        cold = fit_joint_mle(
            jspec, data,
            init=JointParams(np.zeros(2), np.zeros(2), np.array([-0.5, 0.5]),
                             CopulaFamily("frank", -0.1)),
        )
        est_w = np.concatenate([warm.beta, warm.gamma, warm.deltas, [warm.theta]])
        est_c = np.concatenate([cold.beta, cold.gamma, cold.deltas, [cold.theta]])
        assert np.max(np.abs(est_w - est_c)) < 1e-4

    def test_gradient_small_at_reported_optimum(self):
        jspec, data, _ = self.frank_data(n=1200, seed=9)
        fit = fit_joint_mle(jspec, data)
        X = data.matrix(jspec.stress_columns)
        Z = data.matrix(jspec.wait_columns)
        r = data.column("stress").astype(int)
        k = data.column("wait_cat").astype(int)
        _, grad, _ = _joint_loglik_core(fit.beta, fit.gamma, fit.deltas, fit.family,
                                        X, Z, r, k)
        # unconstrained-scale tolerance is 1e-6; reported scale stays close
        assert np.max(np.abs(grad)) < 1e-4


class TestCompareFamilies:
    def test_ranking_is_permutation_and_frank_wins(self):
        dgp = CopulaDgpSpec(beta=(0.8, -0.5), gamma=(-0.6, 1.0), deltas=(-0.4, 1.2),
                            family=CopulaFamily("frank", -3.0), n=4000, seed=11)
        data = generate_copula_data(dgp)
        rows = compare_families(joint_spec_for(dgp), data,
                                ["product", "frank", "fgm"])
        assert sorted(row.family for row in rows) == ["fgm", "frank", "product"]
        fitted = [row for row in rows if row.fit is not None]
        bics = [row.fit.bic for row in fitted]
        assert bics == sorted(bics)
        assert rows[0].family in ("frank", "fgm")
        frank_row = next(row for row in rows if row.family == "frank")
        product_row = next(row for row in rows if row.family == "product")
        assert frank_row.fit.bic < product_row.fit.bic

    def test_independent_data_keeps_product_competitive(self):
        dgp = CopulaDgpSpec(beta=(0.8, -0.5), gamma=(-0.6, 1.0), deltas=(-0.4, 1.2),
                            family=CopulaFamily("product"), n=4000, seed=12)
        data = generate_copula_data(dgp)
        rows = compare_families(joint_spec_for(dgp), data, ["frank", "product"])
        product_bic = next(r.fit.bic for r in rows if r.family == "product")
        best_bic = rows[0].fit.bic
        assert product_bic - best_bic <= 2.0

    def test_report_serializes(self):
        import json

        dgp = CopulaDgpSpec(beta=(0.5,), gamma=(0.4,), deltas=(0.0, 1.0),
                            family=CopulaFamily("frank", -1.0), n=900, seed=13)
        data = generate_copula_data(dgp)
        fit = fit_joint_mle(joint_spec_for(dgp), data)
        report = fit_to_report(fit)
        assert report["format"] == "jointfit/1"
        assert set(report["parameters"]) == set(fit.param_names)
        json.dumps(report)
