import numpy as np
import pytest

from logopt.log_optimal import (
    DiscreteDistribution,
    DiscreteJointDistribution,
    expected_log_return,
    glos_optimal,
    information_gain,
    load_distribution,
    load_joint,
    optimality_gap,
    save_distribution,
    save_joint,
    superiority_trial,
    taylor_gap,
)

SYMMETRIC = DiscreteDistribution(support=[[2.0, 0.5], [0.5, 2.0]], probs=[0.5, 0.5])


class TestExpectedLogReturn:
    def test_sure_thing_is_zero(self):
        d = DiscreteDistribution(support=[[1.0, 1.0]], probs=[1.0])
        assert expected_log_return([0.3, 0.7], d) == 0.0

    def test_balanced_mix(self):
        got = expected_log_return([0.5, 0.5], SYMMETRIC)
        assert got == pytest.approx(np.log(1.25), abs=1e-15)

    def test_degenerate_portfolio(self):
        got = expected_log_return([1.0, 0.0], SYMMETRIC)
        assert got == pytest.approx(0.5 * np.log(2.0) + 0.5 * np.log(0.5), abs=1e-15)


class TestGlosOptimal:
    def test_symmetric_distribution(self):
        np.testing.assert_allclose(glos_optimal(SYMMETRIC), [0.5, 0.5], atol=1e-10)

    def test_stochastic_dominance(self):
        d = DiscreteDistribution(support=[[1.5, 1.0], [1.2, 1.1]], probs=[0.5, 0.5])
        np.testing.assert_allclose(glos_optimal(d), [1.0, 0.0], atol=1e-10)

    def test_kelly_fraction_vs_grid(self):
        d = DiscreteDistribution(support=[[1.8, 1.0], [0.3, 1.0]], probs=[0.5, 0.5])
        b = glos_optimal(d)
        # brute-force grid oracle at 1e-4 resolution
        fr = np.arange(0, 10_001) / 10_000
        grid = np.stack([fr, 1 - fr], axis=1)
        vals = np.log(grid @ d.support.T) @ d.probs
        best = fr[np.argmax(vals)]
        assert b[0] == pytest.approx(best, abs=1e-4)
        # closed form for a two-outcome bet against cash
        assert b[0] == pytest.approx(0.05 / 0.56, abs=1e-10)

    def test_dual_gap_certificate(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            d = int(rng.integers(2, 4))
            k = int(rng.integers(2, 6))
            dist = DiscreteDistribution(
                support=rng.uniform(0.4, 2.2, size=(k, d)), probs=rng.dirichlet(np.ones(k))
            )
            b = glos_optimal(dist)
            assert optimality_gap(b, dist) <= 1e-9


class TestInformationGain:
    def test_independence(self):
        j = DiscreteJointDistribution(
            y_values=["a", "b"], cond=[SYMMETRIC, SYMMETRIC], y_probs=[0.3, 0.7]
        )
        ig = information_gain(j)
        assert abs(ig.expected_gain) <= 1e-9
        assert abs(ig.mutual_information) <= 1e-12

    def test_fully_informative_label(self):
        up = DiscreteDistribution(support=[[1.5, 0.8]], probs=[1.0])
        down = DiscreteDistribution(support=[[0.8, 1.5]], probs=[1.0])
        j = DiscreteJointDistribution(y_values=["u", "d"], cond=[up, down], y_probs=[0.5, 0.5])
        ig = information_gain(j)
        assert ig.mutual_information == pytest.approx(np.log(2.0), abs=1e-12)
        assert np.all(ig.per_y_gain <= ig.per_y_kl + 1e-12)

    def test_enumeration_oracle_small_joint(self):
        # 2 assets, 2 outcomes, 2 labels with asymmetric conditionals;
        # everything recomputed from first principles on a fine grid
        support = np.array([[1.4, 0.7], [0.8, 1.3]])
        ca = np.array([0.75, 0.25])
        cb = np.array([0.35, 0.65])
        gy = np.array([0.6, 0.4])
        j = DiscreteJointDistribution(
            y_values=["a", "b"],
            cond=[
                DiscreteDistribution(support=support, probs=ca),
                DiscreteDistribution(support=support, probs=cb),
            ],
            y_probs=gy,
        )
        fr = np.arange(0, 100_001) / 100_000
        grid = np.stack([fr, 1 - fr], axis=1)
        marg = gy[0] * ca + gy[1] * cb

        def best_value(probs):
            vals = np.log(grid @ support.T) @ probs
            return vals.max()

        def value_at(probs, b):
            return float(np.log(support @ b) @ probs)

        b_star_vals = np.log(grid @ support.T) @ marg
        b_star = grid[np.argmax(b_star_vals)]
        gains = np.array(
            [best_value(ca) - value_at(ca, b_star), best_value(cb) - value_at(cb, b_star)]
        )
        expected_gain = float(gy @ gains)
        mi = 0.0
        for y, cond in enumerate((ca, cb)):
            for k in range(2):
                h = gy[y] * cond[k]
                mi += h * np.log(h / (marg[k] * gy[y]))
        ig = information_gain(j)
        np.testing.assert_allclose(ig.per_y_gain, gains, atol=1e-9)
        assert ig.expected_gain == pytest.approx(expected_gain, abs=1e-9)
        assert ig.mutual_information == pytest.approx(mi, abs=1e-9)
        assert -1e-9 <= ig.expected_gain <= ig.mutual_information + 1e-9


class TestSuperiorityTrial:
    def test_identity_competitor_exact_zero(self):
        b_star = glos_optimal(SYMMETRIC)
        res = superiority_trial(SYMMETRIC, b_star, n=50, trials=20, seed=1)
        assert np.all(res.log_wealth_ratios == 0.0)
        assert res.exceed_fraction == 0.0

    def test_deterministic_distribution_closed_form(self):
        d = DiscreteDistribution(support=[[1.3, 1.1]], probs=[1.0])
        competitor = np.array([0.0, 1.0])
        res = superiority_trial(d, competitor, n=7, trials=5, seed=2)
        expected = 7 * (np.log(1.1) - np.log(1.3))
        np.testing.assert_allclose(res.log_wealth_ratios, expected, atol=1e-12)

    def test_seeded_two_outcome_tail_bound(self):
        res = superiority_trial(SYMMETRIC, np.array([1.0, 0.0]), n=200, trials=2000, seed=11)
        assert res.exceed_fraction <= 1.0 / 200**2
        assert res.mean_normalized_log_ratio < 0

    def test_callable_competitor(self):
        policy = lambda i, hist: np.array([0.5, 0.5])
        res = superiority_trial(SYMMETRIC, policy, n=10, trials=5, seed=3)
        # uniform IS log-optimal here; accumulation order leaves float noise
        np.testing.assert_allclose(res.log_wealth_ratios, 0.0, atol=1e-12)


class TestTaylorGap:
    def test_deterministic_outcome_exact(self):
        d = DiscreteDistribution(support=[[1.07, 0.93]], probs=[1.0])
        assert taylor_gap([0.4, 0.6], d) == pytest.approx(0.0, abs=1e-15)

    def test_small_spread_tiny_gap(self):
        d = DiscreteDistribution(support=[[1.01], [0.99]], probs=[0.5, 0.5])
        assert abs(taylor_gap([1.0], d)) <= 1e-5

    def test_heavy_spread_large_gap(self):
        d = DiscreteDistribution(support=[[2.0], [0.5]], probs=[0.5, 0.5])
        gap = taylor_gap([1.0], d)
        assert abs(gap) > 1e-3
        # enumeration oracle: E log = 0, approx = log 1.25 - 0.5625/3.125
        assert gap == pytest.approx(0.0 - (np.log(1.25) - 0.5625 / 3.125), abs=1e-12)


class TestJensenAndRatioProperties:
    def test_jensen_inequality_random(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            d = int(rng.integers(1, 4))
            k = int(rng.integers(1, 6))
            dist = DiscreteDistribution(
                support=rng.uniform(0.4, 2.0, size=(k, d)), probs=rng.dirichlet(np.ones(k))
            )
            b = rng.dirichlet(np.ones(d))
            mu = dist.probs @ dist.support
            assert expected_log_return(b, dist) <= np.log(b @ mu) + 1e-12

    def test_jensen_equality_iff_constant_return(self):
        dist = DiscreteDistribution(support=[[1.2, 0.8], [0.8, 1.2]], probs=[0.5, 0.5])
        b = np.array([0.5, 0.5])  # b @ x constant = 1 on the support
        mu = dist.probs @ dist.support
        assert expected_log_return(b, dist) == pytest.approx(np.log(b @ mu), abs=1e-15)

    def test_expected_ratio_bound(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            d = int(rng.integers(2, 4))
            k = int(rng.integers(2, 6))
            dist = DiscreteDistribution(
                support=rng.uniform(0.4, 2.0, size=(k, d)), probs=rng.dirichlet(np.ones(k))
            )
            b_star = glos_optimal(dist)
            denom = dist.support @ b_star
            for _ in range(3):
                b = rng.dirichlet(np.ones(d))
                assert dist.probs @ ((dist.support @ b) / denom) <= 1 + 1e-9


class TestDistributionFiles:
    def test_distribution_roundtrip(self, tmp_path):
        path = tmp_path / "dist.txt"
        save_distribution(SYMMETRIC, path)
        back = load_distribution(path)
        np.testing.assert_array_equal(back.support, SYMMETRIC.support)
        np.testing.assert_array_equal(back.probs, SYMMETRIC.probs)

    def test_joint_roundtrip(self, tmp_path):
        up = DiscreteDistribution(support=[[1.5, 0.8], [1.0, 1.0]], probs=[0.9, 0.1])
        down = DiscreteDistribution(support=[[0.8, 1.5]], probs=[1.0])
        j = DiscreteJointDistribution(y_values=["up", "down"], cond=[up, down], y_probs=[0.5, 0.5])
        path = tmp_path / "joint.txt"
        save_joint(j, path)
        back = load_joint(path)
        assert back.y_values == ["up", "down"]
        np.testing.assert_array_equal(back.y_probs, [0.5, 0.5])
        np.testing.assert_array_equal(back.cond[0].support, up.support)
        np.testing.assert_array_equal(back.cond[1].probs, down.probs)

    def test_numeric_label_rejected_on_save(self, tmp_path):
        j = DiscreteJointDistribution(
            y_values=["1", "b"], cond=[SYMMETRIC, SYMMETRIC], y_probs=[0.5, 0.5]
        )
        with pytest.raises(ValueError, match="symbolic"):
            save_joint(j, tmp_path / "bad.txt")

    def test_invalid_probabilities_rejected(self):
        with pytest.raises(ValueError):
            DiscreteDistribution(support=[[1.0]], probs=[0.7])

    def test_nonpositive_support_rejected(self):
        with pytest.raises(ValueError):
            DiscreteDistribution(support=[[0.0, 1.0]], probs=[1.0])
