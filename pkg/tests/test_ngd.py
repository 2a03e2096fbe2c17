"""Noisy gradient descent: operator algebra, gradients, chain, diagnostics."""

import math

import mpmath
import numpy as np
import pytest

from ngdbench.data import Dataset, generate_dataset
from ngdbench.model import ScheduleConfig, eval_network, h_norm, sample_teacher
from ngdbench.ngd import (
    ChainDivergence,
    NgdConfig,
    apply_shrink,
    loss_grad,
    loss_grad_bound,
    mixing_diagnostic,
    ou_block_variance,
    prior_block_variance,
    ridge_grad,
    run_chain,
    save_trace,
    shrink_factors,
    step,
    step_explicit,
)


def small_config(**kw):
    base = dict(d=1, R=1.0, gamma=1.0, alpha1=1.0, alpha2=1.0, s=3.0, c_mu=1.0)
    base.update(kw)
    return ScheduleConfig(**base)


def small_ngd(**kw):
    base = dict(eta=0.1, beta=8.0, lam=0.5, k_max=100, width=2, seed=0)
    base.update(kw)
    return NgdConfig(**base)


class TestAutoHyperparameters:
    """Sample-size-driven defaults for temperature, ridge, width, budget."""

    def test_beta_is_min_of_the_two_rules(self):
        cfg = small_config()
        assert NgdConfig.auto(cfg, 100, noise_bound=1.0).beta == 50.0
        assert NgdConfig.auto(cfg, 100, noise_bound=0.5).beta == 100.0
        assert NgdConfig.auto(cfg, 100, noise_bound=0.0).beta == 100.0

    def test_lam_is_inverse_beta(self):
        cfg = small_config()
        auto = NgdConfig.auto(cfg, 64, noise_bound=0.25)
        assert auto.lam == 1.0 / auto.beta

    def test_width_rule(self):
        cfg = small_config(alpha1=1.0)  # exponent 1/4
        assert NgdConfig.auto(cfg, 16, noise_bound=0.1).width == 2
        assert NgdConfig.auto(cfg, 17, noise_bound=0.1).width == 3
        assert NgdConfig.auto(cfg, 2048, noise_bound=0.1).width == 7

    def test_budget_rule(self):
        cfg = small_config()
        auto = NgdConfig.auto(cfg, 128, noise_bound=0.5, eta=0.5, budget=50.0)
        assert auto.eta * auto.k_max >= 50.0 / auto.lam - 1e-9
        # and not wastefully larger than one extra step
        assert auto.eta * (auto.k_max - 1) < 50.0 / auto.lam

    def test_validation(self):
        with pytest.raises(ValueError):
            small_ngd(beta=0.05)  # beta must exceed eta
        with pytest.raises(ValueError):
            small_ngd(lam=0.0)
        with pytest.raises(ValueError):
            small_ngd(burn_in=100)  # not below k_max


class TestRidgeOperator:
    """The weighted ridge gradient and its semi-implicit inverse."""

    def test_zero_maps_to_zero(self):
        cfg = small_config()
        np.testing.assert_array_equal(ridge_grad(cfg, 1.0, np.zeros((3, 3))),
                                      0.0)

    def test_block_two_scales_by_four(self):
        cfg = small_config()
        W = np.zeros((2, 3))
        W[1] = [1.0, 2.0, 3.0]
        out = ridge_grad(cfg, 1.0, W)
        np.testing.assert_allclose(out[1], [4.0, 8.0, 12.0], rtol=1e-15)
        np.testing.assert_array_equal(out[0], 0.0)

    def test_linearity(self):
        cfg = small_config()
        rng = np.random.default_rng(0)
        W1 = rng.normal(size=(4, 3))
        W2 = rng.normal(size=(4, 3))
        lhs = ridge_grad(cfg, 0.7, 2.0 * W1 - 3.0 * W2)
        rhs = 2.0 * ridge_grad(cfg, 0.7, W1) - 3.0 * ridge_grad(cfg, 0.7, W2)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-14)

    def test_shrink_is_identity_at_zero_eta_or_ridge(self):
        cfg = small_config()
        np.testing.assert_array_equal(shrink_factors(cfg, 0.0, 1.0, 4), 1.0)
        np.testing.assert_array_equal(shrink_factors(cfg, 0.3, 0.0, 4), 1.0)

    def test_shrink_block_one_at_unit_eta_lam(self):
        cfg = small_config()
        assert shrink_factors(cfg, 1.0, 1.0, 1)[0] == 0.5

    def test_shrink_inverts_one_plus_eta_ridge(self):
        cfg = small_config()
        rng = np.random.default_rng(1)
        W = rng.normal(size=(5, 3))
        eta, lam = 0.2, 0.9
        shrunk = apply_shrink(cfg, eta, lam, W)
        recovered = shrunk + eta * ridge_grad(cfg, lam, shrunk)
        np.testing.assert_allclose(recovered, W, rtol=0, atol=1e-14)


class TestLossGradient:
    """Analytic empirical-risk gradient."""

    def test_zero_residuals_give_zero_gradient(self):
        cfg = small_config(d=2, alpha2=4.0)
        teacher = sample_teacher(cfg, width=3, radius=0.9, seed=5)
        data = generate_dataset(teacher, n=20, noise_bound=0.0,
                                noise_kind="none", seed=6)
        G = loss_grad(cfg, teacher.weights, data)
        np.testing.assert_allclose(G, 0.0, atol=1e-18)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(123)
        h = 1e-5
        for trial in range(10):
            d = int(rng.integers(1, 4))
            M = int(rng.integers(1, 9))
            n = int(rng.integers(2, 17))
            cfg = ScheduleConfig(d=d, gamma=1.0, alpha1=1.0,
                                 alpha2=float(rng.uniform(0.6, 1.5)), s=3.0)
            W = rng.normal(scale=0.8, size=(M, d + 2))
            X = rng.random((n, d))
            y = rng.normal(size=n)
            data = Dataset(X=X, y=y, noise_bound=10.0, noise_kind="uniform",
                           seed=None)
            G = loss_grad(cfg, W, data)

            def risk(Wf):
                resid = eval_network(cfg, Wf, X) - y
                return float(np.mean(resid * resid))

            for _ in range(6):  # spot-check random coordinates
                i = int(rng.integers(M))
                j = int(rng.integers(d + 2))
                Wp, Wm = W.copy(), W.copy()
                Wp[i, j] += h
                Wm[i, j] -= h
                fd = (risk(Wp) - risk(Wm)) / (2 * h)
                # mixed absolute/relative error: guards coordinates whose
                # finite-difference value is dominated by cancellation noise
                denom = max(1.0, abs(fd))
                assert abs(G[i, j] - fd) / denom <= 1e-5, (trial, i, j)

    def test_linear_in_residuals(self):
        cfg = small_config(d=1)
        rng = np.random.default_rng(9)
        W = rng.normal(size=(2, 3))
        X = rng.random((12, 1))
        pred = eval_network(cfg, W, X)
        y1 = pred - rng.normal(size=12)  # residual r
        r = pred - y1
        y2 = pred - 3.0 * r              # residual 3r
        d1 = Dataset(X=X, y=y1, noise_bound=100.0, noise_kind="uniform",
                     seed=None)
        d2 = Dataset(X=X, y=y2, noise_bound=100.0, noise_kind="uniform",
                     seed=None)
        np.testing.assert_allclose(loss_grad(cfg, W, d2),
                                   3.0 * loss_grad(cfg, W, d1),
                                   rtol=1e-12, atol=1e-15)

    def test_gradient_norm_bound(self):
        cfg = small_config(d=2, alpha1=1.0, alpha2=1.0)
        bound = loss_grad_bound(cfg, noise_bound=0.5)
        teacher = sample_teacher(cfg, width=4, radius=1.0, seed=0)
        data = generate_dataset(teacher, n=25, noise_bound=0.5, seed=1)
        rng = np.random.default_rng(2)
        for _ in range(25):
            W = rng.normal(scale=rng.uniform(0.1, 30.0), size=(6, 4))
            assert h_norm(loss_grad(cfg, W, data)) <= bound

    def test_bound_requires_unit_widths(self):
        with pytest.raises(ValueError):
            loss_grad_bound(small_config(c_mu=1.0).__class__(
                d=1, R=1.0, gamma=1.0, alpha1=1.0, alpha2=1.0, s=3.0,
                c_mu=2.0), 0.1)


class TestStep:
    """Single semi-implicit update."""

    def test_pure_contraction_without_gradient_and_noise(self):
        cfg = small_config()
        ngd = small_ngd(eta=0.25, lam=0.8)
        W = np.random.default_rng(3).normal(size=(2, 3))
        out = step(cfg, ngd, W)
        fac = shrink_factors(cfg, 0.25, 0.8, 2)
        np.testing.assert_allclose(out, fac[:, None] * W, rtol=1e-15)

    def test_fixed_point_without_ridge(self):
        # the ridge weight enters only through the shrink; with lam -> 0 the
        # no-gradient no-noise step is the identity
        cfg = small_config()
        W = np.random.default_rng(4).normal(size=(3, 3))
        np.testing.assert_array_equal(apply_shrink(cfg, 0.5, 0.0, W), W)

    def test_semi_implicit_equals_explicit_rewrite(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            d = int(rng.integers(1, 4))
            M = int(rng.integers(1, 6))
            cfg = ScheduleConfig(d=d, gamma=1.0, alpha1=1.0,
                                 alpha2=float(rng.uniform(0.6, 2.0)), s=3.0)
            ngd = NgdConfig(eta=float(rng.uniform(0.01, 0.9)), beta=10.0,
                            lam=float(rng.uniform(0.05, 2.0)), k_max=10,
                            width=M)
            W = rng.normal(size=(M, d + 2))
            X = rng.random((8, d))
            y = rng.normal(size=8)
            data = Dataset(X=X, y=y, noise_bound=10.0, noise_kind="uniform",
                           seed=None)
            noise = 0.05 * rng.normal(size=(M, d + 2))
            a = step(cfg, ngd, W, data, noise)
            b = step_explicit(cfg, ngd, W, data, noise)
            assert np.max(np.abs(a - b)) <= 1e-13 * max(1.0, np.max(np.abs(a)))

    def test_one_step_matches_high_precision_recomputation(self):
        """Recompute a 2-block step with 50-digit arithmetic."""
        cfg = small_config(d=1, alpha2=1.0)
        ngd = NgdConfig(eta=0.3, beta=5.0, lam=0.7, k_max=10, width=2)
        W = np.array([[0.4, -0.2, 0.6], [-0.5, 0.3, -0.1]])
        X = np.array([[0.25], [0.75]])
        y = np.array([0.2, -0.1])
        noise = np.array([[0.01, -0.02, 0.03], [-0.04, 0.05, -0.06]])
        data = Dataset(X=X, y=y, noise_bound=10.0, noise_kind="uniform",
                       seed=None)
        got = step(cfg, ngd, W, data, noise)

        mpmath.mp.dps = 50
        mpf = mpmath.mpf

        def msig(u):
            return 1 / (1 + mpmath.e**(-u))

        mu = [mpf(1), mpf(1) / 4]
        amp = [m**mpf(1) for m in mu]
        bw = [m**mpf(1) for m in mu]
        s_pow = 3

        def f_of(x, Wm):
            tot = mpf(0)
            for m in range(2):
                z = Wm[m][0] * x + Wm[m][1]
                act = bw[m]**s_pow * msig(z / bw[m])
                tot += amp[m] * mpmath.tanh(Wm[m][2]) * act
            return tot

        Wm = [[mpf(v) for v in row] for row in W]
        xs = [mpf(1) / 4, mpf(3) / 4]
        ys = [mpf("0.2"), mpf("-0.1")]
        r = [f_of(xs[i], Wm) - ys[i] for i in range(2)]
        grad = [[mpf(0)] * 3 for _ in range(2)]
        for m in range(2):
            for i in range(2):
                z = Wm[m][0] * xs[i] + Wm[m][1]
                sg = msig(z / bw[m])
                actd = bw[m] ** (s_pow - 1) * sg * (1 - sg)
                act = bw[m]**s_pow * sg
                c = amp[m] * mpmath.tanh(Wm[m][2])
                grad[m][0] += r[i] * c * actd * xs[i]
                grad[m][1] += r[i] * c * actd
                grad[m][2] += r[i] * amp[m] * (1 - mpmath.tanh(Wm[m][2])**2) * act
        eta, lam = mpf("0.3"), mpf("0.7")
        out = np.zeros((2, 3))
        for m in range(2):
            for j in range(3):
                g = grad[m][j] * 2 / 2  # (2/n) with n = 2
                v = Wm[m][j] - eta * g + mpf(float(noise[m, j]))
                out[m, j] = float(v / (1 + eta * lam / mu[m]))
        np.testing.assert_allclose(got, out, rtol=1e-12, atol=1e-15)

    def test_nonfinite_weights_raise(self):
        cfg = small_config()
        ngd = small_ngd()
        W = np.full((2, 3), np.inf)
        with pytest.raises(ChainDivergence):
            step(cfg, ngd, W)


class TestChain:
    """Full sampler runs and their gradient-free closed forms."""

    def test_same_seed_identical_traces(self):
        cfg = small_config(d=2, alpha2=4.0)
        teacher = sample_teacher(cfg, width=3, radius=0.9, seed=1)
        data = generate_dataset(teacher, n=16, noise_bound=0.2, seed=2)
        ngd = small_ngd(width=3, k_max=200, seed=7)
        a = run_chain(cfg, ngd, data)
        b = run_chain(cfg, ngd, data)
        np.testing.assert_array_equal(a.risk_trace, b.risk_trace)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_gradient_free_stationary_variance(self):
        cfg = small_config()
        ngd = NgdConfig(eta=0.1, beta=8.0, lam=0.5, k_max=30000, width=3,
                        burn_in=5000, thinning=1, seed=42)
        res = run_chain(cfg, ngd)  # no data: pure ridge Gaussian sampling
        want = ou_block_variance(cfg, ngd)
        kept = res.kept  # (S, M, d+2)
        for m in range(3):
            got = kept[:, m, :].var()
            assert abs(got - want[m]) / want[m] <= 0.10, m

    def test_ou_variance_approaches_prior_as_eta_vanishes(self):
        cfg = small_config()
        for width in (1, 4):
            tiny = NgdConfig(eta=1e-3, beta=8.0, lam=0.5, k_max=10,
                             width=width)
            v = ou_block_variance(cfg, tiny)
            prior = prior_block_variance(cfg, tiny)
            np.testing.assert_allclose(v, prior, rtol=0.01)

    def test_mean_decay_error_halves_with_step_size(self):
        # zero-noise deterministic chain: after k steps block m holds
        # s_m^k * w0; compare with exp(-lam*T/mu_m) at fixed horizon T
        cfg = small_config()
        lam, T, m = 0.5, 2.0, 1
        errors = []
        for eta in (0.04, 0.02, 0.01):
            k = int(round(T / eta))
            s = float(shrink_factors(cfg, eta, lam, 1)[0])
            errors.append(abs(s**k - math.exp(-lam * T)))
        assert 1.5 <= errors[0] / errors[1] <= 2.5
        assert 1.5 <= errors[1] / errors[2] <= 2.5

    def test_prior_init_runs_and_kept_shapes(self):
        cfg = small_config(d=2)
        ngd = NgdConfig(eta=0.1, beta=8.0, lam=0.5, k_max=40, width=3,
                        burn_in=10, thinning=3, seed=0)
        res = run_chain(cfg, ngd, init="prior")
        assert res.kept.shape == (10, 3, 4)
        np.testing.assert_array_equal(res.kept_steps,
                                      np.arange(13, 41, 3))

    def test_bad_init_shape_rejected(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            run_chain(cfg, small_ngd(), init=np.zeros((1, 1)))

    def test_divergence_guard_trips_on_runaway_weights(self):
        cfg = small_config()
        ngd = NgdConfig(eta=0.1, beta=8.0, lam=1e-9, k_max=5, width=2,
                        burn_in=0, thinning=1, seed=0)
        big = np.full((2, 3), 1e7)
        with pytest.raises(ChainDivergence):
            run_chain(cfg, ngd, init=big)

    def test_averaged_predictor_is_snapshot_mean(self):
        cfg = small_config(d=1)
        ngd = NgdConfig(eta=0.1, beta=8.0, lam=0.5, k_max=30, width=2,
                        burn_in=0, thinning=1, seed=3)
        res = run_chain(cfg, ngd)
        x = np.linspace(0, 1, 7)[:, None]
        direct = np.mean([eval_network(cfg, W, x) for W in res.kept], axis=0)
        np.testing.assert_allclose(res.averaged_predictor()(x), direct,
                                   rtol=1e-12)

    def test_trace_csv(self, tmp_path):
        cfg = small_config(d=1)
        teacher = sample_teacher(cfg, width=2, radius=0.5, seed=0)
        data = generate_dataset(teacher, n=8, noise_bound=0.1, seed=0)
        res = run_chain(cfg, small_ngd(k_max=20, burn_in=0, thinning=5), data)
        path = tmp_path / "trace.csv"
        save_trace(path, res)
        lines = path.read_text().splitlines()
        assert lines[0] == "k,empirical_risk,h_norm,h1_norm"
        assert len(lines) == 1 + len(res.kept_steps)


class TestMixing:
    """Between/within variance diagnostic."""

    def test_identical_traces_give_exactly_one(self):
        trace = np.random.default_rng(0).random(100)
        rep = mixing_diagnostic([trace, trace.copy()])
        assert rep.ratio == 1.0
        assert rep.mixed

    def test_independent_stationary_chains_mix(self):
        cfg = small_config()
        traces = []
        for seed in (1, 2, 3):
            ngd = NgdConfig(eta=0.1, beta=8.0, lam=0.5, k_max=8000, width=2,
                            burn_in=2000, thinning=1, seed=seed)
            res = run_chain(cfg, ngd, init="prior")
            traces.append(res.hnorm_trace)
        rep = mixing_diagnostic(traces, threshold=1.1)
        assert rep.mixed, rep

    def test_frozen_chain_flagged(self):
        live = np.random.default_rng(5).normal(size=400) + 1.0
        frozen = np.zeros(400)
        rep = mixing_diagnostic([live, frozen])
        assert not rep.mixed

    def test_input_validation(self):
        with pytest.raises(ValueError):
            mixing_diagnostic([np.arange(4.0)])
        with pytest.raises(ValueError):
            mixing_diagnostic([np.arange(4.0), np.arange(5.0)])
