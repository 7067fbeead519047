import numpy as np
import pytest

from conftest import random_instance, relerr
from fhbench.canonical import build_basis, build_blocks, build_frame, transform
from fhbench.estimators import (
    SubspaceEB,
    a3_matrix,
    a_matrix,
    bayes_estimate,
    ceb_estimate,
    cm_estimate,
    constrain,
    eb_estimate,
    eb_estimate_a_form,
    fh_lambda_solve,
    fit_lambda,
    gls_beta,
    moment_function,
    shrink_batch,
    uc1_estimate,
    uc2_estimate,
)
from fhbench.model import (
    BenchmarkSpec,
    FayHerriotModel,
    FixedTarget,
    NumericalError,
    Observation,
    projection_PW,
)
from fhbench.montecarlo import SimConfig, Setting
from oracles import (
    balanced_lambda_star,
    central_difference,
    dense_A,
    grid_scan_root,
    normal_equations_beta,
)


def sim_setting(pattern, q, seed=7, case="case1"):
    return Setting(SimConfig(pattern=pattern, q=q, seed=seed, case=case))


class TestAMatrix:
    def test_balanced_closed_form(self):
        k, d, lam = 6, 0.7, 1.3
        model = FayHerriotModel(np.ones((k, 1)), np.full(k, d))
        expected = (np.eye(k) - np.ones((k, k)) / k) / (d + lam)
        np.testing.assert_allclose(a_matrix(model, lam), expected, atol=1e-14)

    def test_annihilates_X_and_rank(self, rng):
        model, _, _ = random_instance(rng, k=12, p=3)
        A = a_matrix(model, 0.8)
        assert np.linalg.norm(A @ model.X) < 1e-10
        assert np.linalg.matrix_rank(A, tol=1e-10) == 12 - 3
        assert np.linalg.eigvalsh(A).min() > -1e-12
        assert relerr(A, dense_A(model.X, model.d, 0.8)) < 1e-12

    def test_derivative_is_minus_square(self, rng):
        model, _, _ = random_instance(rng, k=10)
        dA = central_difference(lambda t: a_matrix(model, t), 1.0, 1e-5)
        A = a_matrix(model, 1.0)
        assert relerr(dA, -A @ A) < 1e-6

    def test_dense_a3_is_symmetric_and_annihilates(self, rng):
        n, p = 7, 2
        B = rng.standard_normal((n, n))
        V = B @ B.T + n * np.eye(n)
        X = rng.standard_normal((n, p))
        A3 = a3_matrix(V, X, 0.5)
        assert np.allclose(A3, A3.T)
        assert np.linalg.norm(A3 @ X) < 1e-10


class TestGLS:
    def test_interpolation(self, rng):
        model, _, _ = random_instance(rng, k=9, p=3)
        b = np.array([1.0, -2.0, 0.5])
        for lam in (0.0, 0.3, 10.0):
            np.testing.assert_allclose(gls_beta(model, Observation(model.X @ b), lam), b, atol=1e-10)

    def test_ols_reduction(self, rng):
        X = rng.standard_normal((10, 2))
        y = rng.standard_normal(10)
        got = gls_beta(FayHerriotModel(X, np.ones(10)), Observation(y), 0.0)
        np.testing.assert_allclose(got, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-12)

    def test_normal_equations_oracle(self, rng):
        model, _, obs = random_instance(rng, k=11, p=3)
        got = gls_beta(model, obs, 0.9)
        want = normal_equations_beta(model.X, model.d, obs.y, 0.9)
        assert relerr(got, want) < 1e-10


class TestLambdaSolver:
    def test_zero_residual(self, rng):
        model, _, _ = random_instance(rng, k=8)
        fit = fh_lambda_solve(model, Observation(model.X @ np.array([1.0, 2.0])))
        assert fit.lambda_hat == 0.0
        assert fit.lambda_hat == max(fit.lambda_star, 0.0)

    def test_balanced_closed_form(self, rng):
        k, d = 12, 0.4
        model = FayHerriotModel(np.ones((k, 1)), np.full(k, d))
        y = 3.0 + rng.standard_normal(k) * 1.5
        want = balanced_lambda_star(y, d)
        assert want > 0
        fit = fh_lambda_solve(model, Observation(y))
        assert fit.converged
        assert abs(fit.lambda_hat - want) < 1e-10
        assert abs(fit.residual) < 1e-8

    def test_balanced_negative_root_reported(self, rng):
        k, d = 12, 2.0
        model = FayHerriotModel(np.ones((k, 1)), np.full(k, d))
        y = 1.0 + 0.1 * rng.standard_normal(k)
        fit = fh_lambda_solve(model, Observation(y))
        assert fit.lambda_hat == 0.0
        assert fit.lambda_star == pytest.approx(balanced_lambda_star(y, d), abs=1e-8)

    def test_grid_scan_oracle(self, rng):
        model, _, obs = random_instance(rng, k=15)
        fit = fh_lambda_solve(model, obs)
        lam_max = 4 * max(fit.lambda_hat, 1.0)
        want = grid_scan_root(obs.y, model.X, model.d, model.k - model.p, lam_max, n=200_000)
        assert abs(fit.lambda_hat - want) < 1e-6

    def test_moment_decreasing(self, rng):
        model, _, obs = random_instance(rng, k=15)
        lams = np.linspace(0, 10, 50)
        q = [moment_function(obs.y, model.X, model.d, l)[0] for l in lams]
        assert np.all(np.diff(q) < 0)

    def test_nonfinite_rejected(self, rng):
        model, _, obs = random_instance(rng)
        y = obs.y.copy()
        y[0] = np.inf
        with pytest.raises(NumericalError):
            fit_lambda(y, model.X, model.d)


class TestEB:
    def test_two_forms_agree_pattern_b(self):
        s = sim_setting("b", "identity")
        y = s.mean + np.sqrt(2.0) * np.random.default_rng(4).standard_normal(s.model.k)
        obs = Observation(y)
        eb = eb_estimate(s.model, obs)
        assert np.abs(eb.mu_hat - eb_estimate_a_form(s.model, obs)).max() < 1e-10
        shrink = y - s.model.d / (s.model.d + eb.fit.lambda_hat) * (y - s.model.X @ eb.beta_hat)
        assert np.abs(eb.mu_hat - shrink).max() < 1e-10

    def test_full_shrinkage_at_zero_lambda(self, rng):
        model, _, _ = random_instance(rng, k=10)
        y = model.X @ np.array([2.0, -1.0]) + 1e-3 * rng.standard_normal(10)
        eb = eb_estimate(model, Observation(y))
        assert eb.fit.lambda_hat == 0.0
        np.testing.assert_allclose(eb.mu_hat, y - model.d * (a_matrix(model, 0.0) @ y), atol=1e-12)
        np.testing.assert_allclose(eb.mu_hat, model.X @ gls_beta(model, Observation(y), 0.0), atol=1e-12)

    def test_no_shrinkage_at_tiny_variance(self, rng):
        k = 10
        X = rng.standard_normal((k, 2))
        y = X @ [1.0, 1.0] + rng.standard_normal(k)
        eb = eb_estimate(FayHerriotModel(X, np.full(k, 1e-8)), Observation(y))
        np.testing.assert_allclose(eb.mu_hat, y, atol=1e-6)

    def test_bayes_estimate_forms(self, rng):
        model, _, obs = random_instance(rng)
        beta, lam = np.array([1.0, 2.0]), 0.7
        b = bayes_estimate(model, obs, beta, lam).mu_hat
        prior = model.X @ beta
        alt = prior + np.linalg.solve(model.D / lam + np.eye(model.k), obs.y - prior)
        np.testing.assert_allclose(b, alt, atol=1e-12)


class TestConstrain:
    def test_fixed_point(self, rng):
        model, spec, obs = random_instance(rng, target="fixed")
        mu = rng.standard_normal(model.k)
        mu_c = constrain(mu, model, spec, obs).mu_hat
        np.testing.assert_allclose(constrain(mu_c, model, spec, obs).mu_hat, mu_c, atol=1e-12)

    def test_direct_is_fixed_in_case1(self, rng):
        model, spec, obs = random_instance(rng)
        np.testing.assert_allclose(constrain(obs.y, model, spec, obs).mu_hat, obs.y, atol=1e-12)

    def test_hand_example(self):
        model = FayHerriotModel(np.ones((3, 1)), np.ones(3))
        spec = BenchmarkSpec(np.ones((3, 1)), np.eye(3), FixedTarget([6.0]))
        out = constrain(np.ones(3), model, spec, Observation(np.zeros(3)))
        np.testing.assert_allclose(out.mu_hat, [2.0, 2.0, 2.0], atol=1e-14)

    def test_free_part_unchanged(self, rng):
        model, spec, obs = random_instance(rng, k=9, m=2, target="fixed")
        mu = rng.standard_normal(9)
        out = constrain(mu, model, spec, obs)
        P = projection_PW(spec)
        np.testing.assert_allclose((np.eye(9) - P) @ out.mu_hat, (np.eye(9) - P) @ mu, atol=1e-10)
        assert np.abs(out.constraint_residual).max() < 1e-10


class TestCM:
    def test_case1_returns_y(self, rng):
        model, spec, obs = random_instance(rng)
        np.testing.assert_allclose(cm_estimate(model, spec, obs).mu_hat, obs.y, atol=1e-12)

    def test_hand_example_case2(self):
        model = FayHerriotModel(np.ones((2, 1)), np.ones(2))
        spec = BenchmarkSpec(np.array([[1.0], [0.0]]), np.eye(2), FixedTarget([5.0]))
        out = cm_estimate(model, spec, Observation([3.0, 4.0]))
        np.testing.assert_allclose(out.mu_hat, [5.0, 4.0], atol=1e-14)

    def test_constraint_identity(self, rng):
        for _ in range(20):
            model, spec, obs = random_instance(rng, k=10, m=2, target="fixed")
            r = cm_estimate(model, spec, obs).constraint_residual
            assert np.abs(r).max() < 1e-12 * (1 + np.abs(spec.target.t0).max()) * 10


class TestCEB:
    def test_composition(self, rng):
        for target in ("direct", "fixed"):
            model, spec, obs = random_instance(rng, k=12, m=2, target=target)
            ceb = ceb_estimate(model, spec, obs)
            eb = eb_estimate(model, obs)
            comp = constrain(eb.mu_hat, model, spec, obs)
            assert np.abs(ceb.mu_hat - comp.mu_hat).max() < 1e-10

    def test_boundary_composition(self, rng):
        model, spec, obs0 = random_instance(rng, k=10)
        y = model.X @ np.array([1.0, 1.0]) + 1e-3 * rng.standard_normal(10)
        obs = Observation(y)
        ceb = ceb_estimate(model, spec, obs)
        assert ceb.fit.lambda_hat == 0.0
        comp = constrain(y - model.d * (a_matrix(model, 0.0) @ y), model, spec, obs)
        assert np.abs(ceb.mu_hat - comp.mu_hat).max() < 1e-10

    def test_pattern_a_residual(self):
        s = sim_setting("a", "identity")
        y = s.mean + np.sqrt(1 + s.model.d) * np.random.default_rng(8).standard_normal(15)
        r = ceb_estimate(s.model, s.spec("case1"), Observation(y)).constraint_residual
        assert np.abs(r).max() < 1e-10


class TestUC:
    def test_isotropic_case1(self, rng):
        k, m = 9, 1
        model = FayHerriotModel(rng.standard_normal((k, 2)), np.ones(k))
        spec = BenchmarkSpec(rng.standard_normal((k, m)), np.eye(k))
        obs = Observation(model.X @ [1.0, 2.0] + 1.5 * rng.standard_normal(k))
        f = build_frame(model, spec, obs)
        xi, _, _ = SubspaceEB(np.eye(k - m), f.X3).estimate(f.z1)
        want = f.basis.H1.T @ xi + f.basis.H2.T @ f.z2
        got = uc1_estimate(model, spec, obs, f)
        assert np.abs(got.mu_hat - want).max() < 1e-10
        assert np.abs(spec.W.T @ got.mu_hat - spec.W.T @ obs.y).max() < 1e-10

    @pytest.mark.parametrize("pattern", ["a", "b", "c", "d"])
    @pytest.mark.parametrize("q", ["identity", "d-inverse"])
    def test_constraint_over_grid(self, pattern, q):
        s = sim_setting(pattern, q)
        g = np.random.default_rng(["identity", "d-inverse"].index(q) * 4 + "abcd".index(pattern))
        y = s.mean + np.sqrt(1 + s.model.d) * g.standard_normal(15)
        obs = Observation(y)
        r1 = uc1_estimate(s.model, s.spec("case1"), obs).constraint_residual
        r2 = uc2_estimate(s.model, s.spec("case2"), obs).constraint_residual
        assert np.abs(r1).max() < 1e-10 * (1 + np.abs(s.W.T @ y).max())
        assert np.abs(r2).max() < 1e-10 * (1 + np.abs(s.t0).max())

    def test_basis_invariance(self, rng):
        for target, fn in (("direct", uc1_estimate), ("fixed", uc2_estimate)):
            model, spec, obs = random_instance(rng, k=12, m=2, target=target)
            f1 = build_frame(model, spec, obs, build_basis(spec, "svd"))
            f2 = build_frame(model, spec, obs, build_basis(spec, "qr", rng=rng))
            a, b = fn(model, spec, obs, f1).mu_hat, fn(model, spec, obs, f2).mu_hat
            assert relerr(a, b) < 1e-8

    def test_rejects_wrong_target(self, rng):
        model, spec, obs = random_instance(rng)
        with pytest.raises(ValueError):
            uc2_estimate(model, spec, obs)
        model, spec, obs = random_instance(rng, target="fixed")
        with pytest.raises(ValueError):
            uc1_estimate(model, spec, obs)

    def test_subspace_moment_matches_dense_a3(self, rng):
        model, spec, obs = random_instance(rng, k=12, m=2)
        blocks = build_blocks(model, spec)
        z3 = transform(blocks, obs.y)[2]
        eng = SubspaceEB(blocks.V11_2, blocks.X3)
        xi, beta, fit = eng.estimate(z3)
        assert fit.lambda_hat > 0
        A3 = a3_matrix(blocks.V11_2, blocks.X3, fit.lambda_hat)
        assert z3 @ A3 @ z3 == pytest.approx(12 - 2 - model.p, abs=1e-8)
        V3 = blocks.V11_2 + fit.lambda_hat * np.eye(10)
        b3 = np.linalg.solve(blocks.X3.T @ np.linalg.solve(V3, blocks.X3),
                             blocks.X3.T @ np.linalg.solve(V3, z3))
        want = z3 - blocks.V11_2 @ np.linalg.solve(V3, z3 - blocks.X3 @ b3)
        assert np.abs(xi - want).max() < 1e-10
        assert relerr(beta, b3) < 1e-10

    def test_uc_uses_its_own_degrees_of_freedom(self, rng):
        model, spec, obs = random_instance(rng, k=12, m=3)
        res = uc1_estimate(model, spec, obs)
        blocks = build_blocks(model, spec)
        z3 = transform(blocks, obs.y)[2]
        lam = res.fit.lambda_hat
        if lam > 0:
            val = z3 @ a3_matrix(blocks.V11_2, blocks.X3, lam) @ z3
            assert val == pytest.approx(12 - 3 - model.p, abs=1e-8)


def test_shrink_batch_matches_single(rng):
    model, _, _ = random_instance(rng, k=10)
    Y = rng.standard_normal((5, 10)) * 2
    lam = np.array([0.0, 0.3, 1.0, 2.0, 7.0])
    M, _ = shrink_batch(Y, model.X, model.d, lam)
    for i in range(5):
        want = Y[i] - model.d * (a_matrix(model, lam[i]) @ Y[i])
        assert np.abs(M[i] - want).max() < 1e-10
