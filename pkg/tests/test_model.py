"""Network definition, schedules, norms, and teacher sampling."""

import math

import numpy as np
import pytest
from scipy.special import expit

from ngdbench.model import (
    ScheduleConfig,
    bump_teacher,
    check_assumptions,
    eval_network,
    h_norm,
    hgamma_norm,
    load_teacher,
    load_weights,
    pad_weights,
    sample_teacher,
    save_teacher,
    save_weights,
    sigmoid,
    sigmoid_deriv,
    soft_clip,
    soft_clip_deriv,
    with_ones,
)


def default_config(**kw):
    base = dict(d=1, R=1.0, gamma=1.0, alpha1=1.0, alpha2=4.0, s=3.0, c_mu=1.0)
    base.update(kw)
    return ScheduleConfig(**base)


class TestSigmoid:
    """The logistic function with explicit saturation short-circuits."""

    def test_matches_reference_on_dense_grid(self):
        u = np.linspace(-800.0, 800.0, 400003)
        np.testing.assert_array_equal(sigmoid(u), expit(u))

    def test_saturated_values_are_exact(self):
        assert sigmoid(38.0) == 1.0
        assert sigmoid(-746.0) == 0.0
        assert sigmoid(1e9) == 1.0
        assert sigmoid(-1e9) == 0.0

    def test_cutoffs_agree_with_reference_bitwise(self):
        # the short-circuit must kick in only where the reference already
        # rounds to exactly 0 or 1
        near_hi = np.linspace(37.0, 39.0, 20001)
        near_lo = np.linspace(-747.0, -745.0, 20001)
        np.testing.assert_array_equal(sigmoid(near_hi), expit(near_hi))
        np.testing.assert_array_equal(sigmoid(near_lo), expit(near_lo))

    def test_scalar_and_array_paths_agree(self):
        for u in (-5.0, -0.3, 0.0, 2.2, 40.0, -800.0):
            assert sigmoid(u) == sigmoid(np.array([u]))[0]

    def test_derivative_is_s_times_one_minus_s(self):
        u = np.linspace(-30, 30, 1001)
        s = sigmoid(u)
        np.testing.assert_allclose(sigmoid_deriv(u), s * (1 - s), rtol=0,
                                   atol=0)


class TestSoftClip:
    """R*tanh(w/R): bounded, 1-Lipschitz, identity-like near zero."""

    def test_zero_fixed_point(self):
        assert soft_clip(0.0, 2.0) == 0.0

    def test_bounded_by_clip_level(self):
        # mathematically |R tanh(w/R)| < R strictly; in floats the extreme
        # tail rounds onto the boundary, so strictness is checked at
        # moderate arguments and the closed bound at the extremes
        w = np.array([-1e6, -3.0, 0.5, 7.0, 1e6])
        moderate = np.array([-8.0, -3.0, 0.5, 7.0])
        for R in (1.0, 2.5):
            assert np.all(np.abs(soft_clip(w, R)) <= R)
            assert np.all(np.abs(soft_clip(moderate, R)) < R)

    def test_one_lipschitz_on_random_pairs(self):
        rng = np.random.default_rng(7)
        w = rng.normal(scale=4.0, size=500)
        v = rng.normal(scale=4.0, size=500)
        for R in (1.0, 3.0):
            lhs = np.abs(soft_clip(w, R) - soft_clip(v, R))
            assert np.all(lhs <= np.abs(w - v) + 1e-15)

    def test_derivative_matches_finite_differences(self):
        w = np.linspace(-4, 4, 41)
        h = 1e-6
        fd = (soft_clip(w + h, 1.5) - soft_clip(w - h, 1.5)) / (2 * h)
        np.testing.assert_allclose(soft_clip_deriv(w, 1.5), fd, atol=1e-9)


class TestScheduleConfig:
    """Power schedules mu, amplitude, width, and the scaled activation."""

    def test_schedule_values(self):
        cfg = default_config(alpha1=1.5, alpha2=2.0, c_mu=1.0)
        assert cfg.mu(1) == 1.0
        assert cfg.mu(2) == 0.25
        assert cfg.amp(2) == 0.25 ** 1.5
        assert cfg.width(2) == 0.25 ** 2.0

    def test_admissibility_enforced(self):
        with pytest.raises(ValueError):
            default_config(s=2.0)
        with pytest.raises(ValueError):
            default_config(alpha1=0.5)
        with pytest.raises(ValueError):
            default_config(alpha2=0.5, gamma=1.0)
        with pytest.raises(ValueError):
            default_config(R=0.5)

    def test_activation_block_one_at_zero(self):
        cfg = default_config()
        assert cfg.activation(1, 0.0) == 0.5

    def test_activation_block_two_oracle(self):
        # b_2 = 0.25 at alpha2=1, so the value is 0.25^3 * sigmoid(0.4)
        cfg = default_config(alpha2=1.0, gamma=1.0)
        got = cfg.activation(2, 0.1)
        want = 0.25 ** 3 / (1.0 + math.exp(-0.4))
        assert math.isclose(got, want, rel_tol=1e-15)

    def test_activation_saturates_at_width_power(self):
        cfg = default_config(alpha2=2.0)
        for m in (1, 2, 5):
            sup = cfg.width(m) ** cfg.s
            assert math.isclose(cfg.activation(m, 1e4), sup, rel_tol=1e-12)
            assert cfg.activation(m, -1e4) == 0.0

    def test_activation_deriv_matches_finite_differences(self):
        cfg = default_config(alpha2=1.5)
        h = 1e-6
        for m in (1, 2, 3):
            for u in (-0.7, 0.0, 0.4):
                fd = (cfg.activation(m, u + h) - cfg.activation(m, u - h)) / (2 * h)
                assert math.isclose(cfg.activation_deriv(m, u), fd,
                                    rel_tol=1e-7, abs_tol=1e-12)


class TestEvalNetwork:
    """Clipped two-layer forward pass."""

    def test_zero_weights_give_zero_everywhere(self):
        cfg = default_config(d=3)
        W = np.zeros((4, cfg.d + 2))
        x = np.random.default_rng(0).random((20, 3))
        np.testing.assert_array_equal(eval_network(cfg, W, x), 0.0)

    def test_single_block_oracle(self):
        # one unit-schedule block: value is tanh(0.5) * sigmoid(0.5)
        cfg = default_config(d=1)
        W = np.array([[1.0, 0.0, 0.5]])  # w1 = (1, 0), w2 = 0.5
        got = eval_network(cfg, W, np.array([0.5]))
        want = math.tanh(0.5) / (1.0 + math.exp(-0.5))
        assert math.isclose(got, want, rel_tol=1e-15)
        assert math.isclose(got, 0.28764913664496792, rel_tol=1e-15)

    def test_uniform_bound(self):
        cfg = default_config(d=2, alpha1=1.0)
        rng = np.random.default_rng(3)
        W = rng.normal(scale=5.0, size=(6, 4))
        x = rng.random((50, 2))
        total_amp = sum(cfg.amp(m) for m in range(1, 7))
        assert np.all(np.abs(eval_network(cfg, W, x)) <= cfg.R * total_amp)

    def test_dimension_mismatch_rejected(self):
        cfg = default_config(d=2)
        W = np.zeros((1, 4))
        with pytest.raises(ValueError):
            eval_network(cfg, W, np.array([0.1, 0.2, 0.3]))

    def test_batch_matches_scalar_loop(self):
        cfg = default_config(d=2, alpha2=2.0)
        rng = np.random.default_rng(11)
        W = rng.normal(size=(3, 4))
        X = rng.random((7, 2))
        batch = eval_network(cfg, W, X)
        singles = [eval_network(cfg, W, xi) for xi in X]
        np.testing.assert_allclose(batch, singles, rtol=1e-15)


class TestNorms:
    """Plain and schedule-weighted parameter norms."""

    def test_zero_vector(self):
        cfg = default_config(d=2)
        W = np.zeros((3, 4))
        assert h_norm(W) == 0.0
        assert hgamma_norm(cfg, W) == 0.0

    def test_single_block_equals_euclidean_for_any_weighting(self):
        cfg = default_config(d=2)
        W = np.zeros((3, 4))
        W[0] = [0.3, -0.4, 1.2, 0.0]
        target = math.sqrt(0.3 ** 2 + 0.4 ** 2 + 1.2 ** 2)
        for g in (0.0, 0.5, 1.0, 3.7):
            assert math.isclose(hgamma_norm(cfg, W, g), target, rel_tol=1e-15)

    def test_two_block_weighted_oracle(self):
        cfg = default_config(d=1)
        W = np.array([[1.0, 2.0, 2.0], [0.5, 0.0, 0.5]])
        b1 = 1.0 + 4.0 + 4.0
        b2 = 0.25 + 0.25
        want = math.sqrt(b1 + 4.0 * b2)  # second block weighted by 1/mu(2)=4
        assert math.isclose(hgamma_norm(cfg, W, 1.0), want, rel_tol=1e-15)

    def test_zero_padding_leaves_norms_unchanged(self):
        cfg = default_config(d=2)
        rng = np.random.default_rng(5)
        W = rng.normal(size=(3, 4))
        Wp = pad_weights(W, 9)
        assert Wp.shape == (9, 4)
        assert math.isclose(h_norm(W), h_norm(Wp), rel_tol=1e-15)
        for g in (0.5, 1.0, 2.0):
            assert math.isclose(hgamma_norm(cfg, W, g), hgamma_norm(cfg, Wp, g),
                                rel_tol=1e-15)
        x = rng.random((4, 2))
        np.testing.assert_allclose(eval_network(cfg, W, x),
                                   eval_network(cfg, Wp, x), rtol=1e-15)

    def test_negative_weighting_rejected(self):
        cfg = default_config()
        with pytest.raises(ValueError):
            hgamma_norm(cfg, np.zeros((1, 3)), -1.0)

    def test_with_ones_appends_constant_coordinate(self):
        X = np.array([[0.1, 0.2], [0.3, 0.4]])
        X1, single = with_ones(X, 2)
        assert not single
        np.testing.assert_array_equal(X1[:, -1], 1.0)
        np.testing.assert_array_equal(X1[:, :2], X)
        with pytest.raises(ValueError):
            with_ones(X, 3)


class TestCheckAssumptions:
    """Admissibility report with named clauses."""

    def test_reference_setting_passes(self):
        rep = check_assumptions(d=10, gamma=1.0, alpha1=1.0, alpha2=4.0, s=3.0)
        assert rep.ok
        assert rep.failures == ()

    def test_s_clause(self):
        rep = check_assumptions(d=1, gamma=1.0, alpha1=1.0, alpha2=4.0, s=2.0)
        assert not rep.ok
        assert any("s >= 3" in f for f in rep.failures)

    def test_alpha2_boundary_clause(self):
        rep = check_assumptions(d=1, gamma=2.0, alpha1=1.0, alpha2=1.0, s=3.0)
        assert not rep.ok
        assert any("alpha2 > gamma/2" in f for f in rep.failures)

    def test_width_constant_clause(self):
        rep = check_assumptions(d=1, gamma=1.0, alpha1=1.0, alpha2=4.0, s=3.0,
                                c_mu=2.0)
        assert not rep.ok
        assert any("c_mu <= 1" in f for f in rep.failures)

    def test_derivative_bound_sampled(self):
        rep = check_assumptions(config=default_config())
        # with b_1 = 1 the first derivative peaks at exactly 1/4
        assert math.isclose(rep.sigma_bound, 0.25, rel_tol=1e-6)

    def test_accepts_config_object(self):
        assert check_assumptions(default_config(d=4)).ok


class TestTeachers:
    """Random and bump teachers inside the unit weighted-norm ball."""

    def test_sampled_radius_is_exact(self):
        cfg = default_config(d=3, gamma=2.0)
        for radius in (0.25, 1.0):
            t = sample_teacher(cfg, width=6, radius=radius, seed=42)
            assert math.isclose(hgamma_norm(cfg, t.weights), radius,
                                rel_tol=1e-12)

    def test_same_seed_bit_identical(self):
        cfg = default_config(d=2)
        a = sample_teacher(cfg, width=5, radius=0.8, seed=9)
        b = sample_teacher(cfg, width=5, radius=0.8, seed=9)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_different_seeds_differ(self):
        cfg = default_config(d=2)
        a = sample_teacher(cfg, width=5, radius=0.8, seed=1)
        b = sample_teacher(cfg, width=5, radius=0.8, seed=2)
        assert not np.array_equal(a.weights, b.weights)

    def test_radius_above_one_rejected(self):
        cfg = default_config()
        with pytest.raises(ValueError):
            sample_teacher(cfg, width=3, radius=1.2, seed=0)

    def test_teacher_is_evaluable(self):
        cfg = default_config(d=2)
        t = sample_teacher(cfg, width=4, radius=0.9, seed=0)
        x = np.random.default_rng(1).random((10, 2))
        np.testing.assert_allclose(t(x), eval_network(cfg, t.weights, x),
                                   rtol=1e-15)

    def test_bump_teacher_radius_and_shape(self):
        cfg = default_config(d=2, gamma=1.5)
        t = bump_teacher(cfg, width=4, radius=0.7)
        assert math.isclose(hgamma_norm(cfg, t.weights), 0.7, rel_tol=1e-12)
        assert t.kind == "bump"

    def test_tail_amplitude_decreasing_in_width(self):
        cfg = default_config(d=1, alpha1=1.0)
        t = sample_teacher(cfg, width=8, radius=1.0, seed=0)
        tails = [t.tail_amplitude(m) for m in (1, 2, 4, 8)]
        assert all(a > b for a, b in zip(tails, tails[1:]))
        assert t.tail_amplitude(8) == 0.0


class TestSerialization:
    """Text round-trips for teachers and weight snapshots."""

    def test_teacher_round_trip(self, tmp_path):
        cfg = default_config(d=2, gamma=2.0, alpha2=3.0)
        t = sample_teacher(cfg, width=5, radius=0.6, seed=77)
        path = tmp_path / "teacher.txt"
        save_teacher(path, t)
        back = load_teacher(path)
        assert back.config == cfg
        assert back.radius == t.radius
        assert back.seed == t.seed
        np.testing.assert_array_equal(back.weights, t.weights)

    def test_weights_round_trip_single(self, tmp_path):
        cfg = default_config(d=1)
        W = np.random.default_rng(0).normal(size=(3, 3))
        path = tmp_path / "w.txt"
        save_weights(path, cfg, W, extra={"note": "unit"})
        cfg2, stack = load_weights(path)
        assert cfg2 == cfg
        assert stack.shape == (1, 3, 3)
        np.testing.assert_array_equal(stack[0], W)

    def test_weights_round_trip_stack(self, tmp_path):
        cfg = default_config(d=2)
        stack = np.random.default_rng(1).normal(size=(4, 2, 4))
        path = tmp_path / "stack.txt"
        save_weights(path, cfg, stack)
        _, back = load_weights(path)
        np.testing.assert_array_equal(back, stack)
