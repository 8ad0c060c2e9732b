import numpy as np
import pytest
from scipy import stats

from logopt.agent import (
    Architecture,
    Hyperparameters,
    OnlineTrader,
    ReplayStore,
    TradeRecord,
    batch_loss,
    build_winner_target,
    forward,
    gradient,
    init_agent,
    load_checkpoint,
    loss,
    parameter_count,
    sample_replay,
    save_checkpoint,
    train_step,
    zero_agent,
)
from logopt.weights import validate_weights

SMALL = Architecture(history=8, conv_channels=(8, 8, 8), fusion_units=8)


def make_record(rng, params, d=3, period=0):
    arch = params.descriptor
    state = np.abs(rng.normal(1.0, 0.3, size=(d, arch.history, arch.in_channels))) + 0.1
    advice = rng.dirichlet(np.ones(d))
    action, predicted = forward(params, state, advice)
    fluct = rng.uniform(0.9, 1.1, d)
    return TradeRecord(
        period=period,
        state=state,
        advice=advice,
        action=action,
        predicted_return=predicted,
        fluctuation=fluct,
        realized_return=float(np.log(action @ fluct)),
    )


class TestArchitecture:
    def test_parameter_count_is_d_independent(self):
        # the count is a pure function of the descriptor; no asset count enters
        assert parameter_count(SMALL) == parameter_count(SMALL)
        n = parameter_count(Architecture())
        assert n > 0

    def test_history_too_short_rejected(self):
        with pytest.raises(ValueError):
            Architecture(history=6, conv_channels=(8, 8, 8), filter_width=3)


class TestForward:
    def test_zero_parameters_give_uniform_and_zero(self):
        params = zero_agent(SMALL)
        state = np.abs(np.random.default_rng(0).normal(1, 0.2, size=(5, 8, 4)))
        advice = np.full(5, 0.2)
        b, r = forward(params, state, advice)
        np.testing.assert_array_equal(b, np.full(5, 0.2))
        assert r == 0.0

    def test_asset_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        params = init_agent(SMALL, seed=3)
        state = np.abs(rng.normal(1, 0.2, size=(4, 8, 4)))
        advice = rng.dirichlet(np.ones(4))
        perm = np.array([3, 1, 0, 2])
        b1, r1 = forward(params, state, advice)
        b2, r2 = forward(params, state[perm], advice[perm])
        np.testing.assert_allclose(b2, b1[perm], atol=1e-12)
        assert r2 == pytest.approx(r1, abs=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        params = init_agent(SMALL, seed=4)
        state = np.abs(rng.normal(1, 0.2, size=(3, 8, 4)))
        advice = rng.dirichlet(np.ones(3))
        b1, r1 = forward(params, state, advice)
        b2, r2 = forward(params, state, advice)
        np.testing.assert_array_equal(b1, b2)
        assert r1 == r2

    def test_output_is_strictly_positive_portfolio(self):
        rng = np.random.default_rng(5)
        params = init_agent(SMALL, seed=6)
        for _ in range(20):
            d = int(rng.integers(1, 7))
            state = np.abs(rng.normal(1, 0.5, size=(d, 8, 4))) + 0.05
            advice = rng.dirichlet(np.ones(d))
            b, _ = forward(params, state, advice)
            validate_weights(b)
            assert np.all(b > 0)

    def test_shape_mismatch_rejected(self):
        params = init_agent(SMALL, seed=0)
        with pytest.raises(ValueError, match="state shape"):
            forward(params, np.ones((2, 5, 4)), np.array([0.5, 0.5]))
        with pytest.raises(ValueError, match="advice"):
            forward(params, np.ones((2, 8, 4)), np.array([1.0]))


class TestWinnerTarget:
    def test_clear_winner(self):
        np.testing.assert_array_equal(build_winner_target([1.1, 0.9]), [1.0, 0.0])

    def test_tie_breaks_low_index(self):
        np.testing.assert_array_equal(build_winner_target([1.0, 1.0]), [1.0, 0.0])

    def test_argmax(self):
        np.testing.assert_array_equal(build_winner_target([0.9, 1.0, 1.3]), [0.0, 0.0, 1.0])


class TestLoss:
    def test_zero_parameter_value(self):
        params = zero_agent(SMALL)
        state = np.ones((2, 8, 4))
        advice = np.array([0.5, 0.5])
        action, predicted = forward(params, state, advice)
        x = np.array([1.1, 0.9])
        rec = TradeRecord(
            period=0,
            state=state,
            advice=advice,
            action=action,
            predicted_return=predicted,
            fluctuation=x,
            realized_return=float(np.log(action @ x)),
        )
        hp = Hyperparameters()
        assert loss(params, rec, hp) == pytest.approx(hp.beta * np.log(2.0), abs=1e-15)

    def test_linear_in_sigma(self):
        rng = np.random.default_rng(7)
        params = init_agent(SMALL, seed=8)
        rec = make_record(rng, params)
        base = Hyperparameters()
        doubled = Hyperparameters(sigma=2 * base.sigma)
        delta = loss(params, rec, doubled) - loss(params, rec, base)
        assert delta == pytest.approx(-base.sigma * rec.realized_return, abs=1e-12)

    def test_finite_for_valid_records(self):
        rng = np.random.default_rng(9)
        params = init_agent(SMALL, seed=10)
        for _ in range(20):
            rec = make_record(rng, params, d=int(rng.integers(2, 6)))
            assert np.isfinite(loss(params, rec, Hyperparameters()))


class TestGradient:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(11)
        params = init_agent(SMALL, seed=12)
        hp = Hyperparameters()
        batch = [make_record(rng, params, period=t) for t in range(10)]
        grads = gradient(params, batch, hp)
        eps = 1e-5
        for name, block in params.blocks.items():
            fd = np.zeros_like(block)
            flat, fd_flat = block.ravel(), fd.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = batch_loss(params, batch, hp)
                flat[i] = orig - eps
                down = batch_loss(params, batch, hp)
                flat[i] = orig
                fd_flat[i] = (up - down) / (2 * eps)
            denom = max(np.linalg.norm(grads[name]), np.linalg.norm(fd), 1e-10)
            rel = np.linalg.norm(grads[name] - fd) / denom
            assert rel <= 1e-4, f"block {name}: relative error {rel}"

    def test_norm_penalty_gradient(self):
        params = init_agent(SMALL, seed=13)
        hp = Hyperparameters()
        rng = np.random.default_rng(14)
        rec = make_record(rng, params)
        small = Hyperparameters(weight_penalty=1e-12)
        g_small = gradient(params, [rec], small)
        g_full = gradient(params, [rec], hp)
        norm = params.l2_norm()
        for name in params.blocks:
            expected = (hp.weight_penalty - small.weight_penalty) * params.blocks[name] / norm
            np.testing.assert_allclose(g_full[name] - g_small[name], expected, atol=1e-12)

    def test_duplicate_batch_equals_single(self):
        rng = np.random.default_rng(15)
        params = init_agent(SMALL, seed=16)
        hp = Hyperparameters()
        rec = make_record(rng, params)
        g1 = gradient(params, [rec], hp)
        g2 = gradient(params, [rec, rec], hp)
        for name in g1:
            np.testing.assert_allclose(g1[name], g2[name], atol=1e-15)


class TestSampleReplay:
    def test_single_record_forced_clamp(self):
        rng = np.random.default_rng(17)
        idx = sample_replay(5, 50.0, 20, rng, earliest=5)
        assert idx == [5] * 20

    def test_poisson_mean(self):
        rng = np.random.default_rng(18)
        idx = sample_replay(10_000, 50.0, 100_000, rng, earliest=0)
        offsets = 10_000 - np.asarray(idx)
        assert abs(offsets.mean() - 50.0) <= 1.0

    def test_deterministic_under_seed(self):
        a = sample_replay(100, 5.0, 50, np.random.default_rng(19), earliest=0)
        b = sample_replay(100, 5.0, 50, np.random.default_rng(19), earliest=0)
        assert a == b

    def test_never_outside_store(self):
        rng = np.random.default_rng(20)
        idx = sample_replay(30, 50.0, 1000, rng, earliest=25)
        assert min(idx) >= 25 and max(idx) <= 30

    def test_chi_square_goodness_of_fit(self):
        rng = np.random.default_rng(21)
        idx = sample_replay(10_000, 50.0, 100_000, rng, earliest=0)
        offsets = 10_000 - np.asarray(idx)
        lo, hi = 25, 80
        counts = np.bincount(offsets, minlength=hi + 1)
        obs = np.concatenate([[counts[:lo].sum()], counts[lo : hi + 1], [len(offsets) - counts[: hi + 1].sum()]])
        pmf = stats.poisson.pmf(np.arange(lo, hi + 1), 50.0)
        expected = np.concatenate([[stats.poisson.cdf(lo - 1, 50.0)], pmf, [stats.poisson.sf(hi, 50.0)]])
        expected = expected * len(offsets)
        _, p = stats.chisquare(obs, expected * (obs.sum() / expected.sum()))
        assert p > 0.01

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            sample_replay(3, 50.0, 4, np.random.default_rng(0), earliest=5)


class TestTrainStep:
    def test_zero_gradient_fixed_point(self):
        # zero gradient and zero velocity leave the parameters untouched
        params = zero_agent(SMALL)
        velocity = params.zeros_like_blocks()
        hp = Hyperparameters()
        before = {k: v.copy() for k, v in params.blocks.items()}
        grads = {k: np.zeros_like(v) for k, v in params.blocks.items()}
        for k in velocity:
            velocity[k] = hp.momentum * velocity[k] + grads[k]
            params.blocks[k] = params.blocks[k] - hp.learning_rate(0) * velocity[k]
        for k in before:
            np.testing.assert_array_equal(params.blocks[k], before[k])

    def test_zero_momentum_is_plain_sgd(self):
        rng = np.random.default_rng(22)
        params = init_agent(SMALL, seed=23)
        hp = Hyperparameters(momentum=0.0)
        rec = make_record(rng, params)
        expected = {k: v.copy() for k, v in params.blocks.items()}
        g = gradient(params, [rec], hp)
        lr = hp.learning_rate(0)
        for k in expected:
            expected[k] -= lr * g[k]
        velocity = params.zeros_like_blocks()
        train_step(params, velocity, [rec], hp, step=0)
        for k in expected:
            np.testing.assert_allclose(params.blocks[k], expected[k], atol=1e-15)

    def test_learning_rate_schedule_bands(self):
        hp = Hyperparameters()
        assert hp.learning_rate(0) == 1e-2
        assert hp.learning_rate(49_999) == 1e-2
        assert hp.learning_rate(50_000) == 1e-3
        assert hp.learning_rate(99_999) == 1e-3
        assert hp.learning_rate(100_000) == 1e-4
        assert hp.learning_rate(10_000_000) == 1e-4

    def test_training_descends_on_frozen_panel_records(self):
        params = init_agent(Architecture(), seed=2)
        trader = OnlineTrader(params, Hyperparameters(), seed=4, train=False)
        g = np.random.default_rng(11)
        d = 4
        for t in range(50):
            state = np.abs(g.normal(1.0, 0.1, size=(d, 10, 4))) + 0.2
            advice = g.dirichlet(np.ones(d))
            action, predicted = trader.decide(state, advice)
            fluct = g.uniform(0.95, 1.06, d)
            fluct[0] = g.uniform(1.0, 1.08)
            trader.store.add(
                TradeRecord(
                    period=t,
                    state=state,
                    advice=advice,
                    action=action,
                    predicted_return=predicted,
                    fluctuation=fluct,
                    realized_return=float(np.log(action @ fluct)),
                )
            )
        losses = [trader.train_once() for _ in range(500)]
        assert np.mean(losses[-20:]) < losses[0]

    def test_bit_reproducible(self):
        def run():
            params = init_agent(SMALL, seed=31)
            trader = OnlineTrader(params, Hyperparameters(batch_size=8), seed=32, train=True)
            g = np.random.default_rng(33)
            for t in range(12):
                state = np.abs(g.normal(1.0, 0.2, size=(3, 8, 4))) + 0.2
                advice = g.dirichlet(np.ones(3))
                action, predicted = trader.decide(state, advice)
                fluct = g.uniform(0.9, 1.1, 3)
                trader.observe(t, state, advice, action, predicted, fluct)
            return trader

        a, b = run(), run()
        for k in a.params.blocks:
            np.testing.assert_array_equal(a.params.blocks[k], b.params.blocks[k])
        for k in a.params.buffers:
            np.testing.assert_array_equal(a.params.buffers[k], b.params.buffers[k])
        assert a.history == b.history

    def test_nonfinite_gradient_aborts(self):
        params = init_agent(SMALL, seed=40)
        params.blocks["fusion_w"][0, 0] = np.inf
        rng = np.random.default_rng(41)
        state = np.abs(rng.normal(1.0, 0.2, size=(2, 8, 4))) + 0.2
        advice = np.array([0.5, 0.5])
        action = np.array([0.5, 0.5])
        rec = TradeRecord(
            period=0,
            state=state,
            advice=advice,
            action=action,
            predicted_return=0.0,
            fluctuation=np.array([1.0, 1.0]),
            realized_return=0.0,
        )
        with pytest.raises((FloatingPointError, ValueError)):
            train_step(params, params.zeros_like_blocks(), [rec], Hyperparameters(), 0)


class TestReplayStore:
    def test_contiguity_enforced(self):
        store = ReplayStore()
        params = zero_agent(SMALL)
        rng = np.random.default_rng(50)
        store.add(make_record(rng, params, period=4))
        with pytest.raises(ValueError, match="contiguous"):
            store.add(make_record(rng, params, period=6))


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        params = init_agent(SMALL, seed=60)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(params, path)
        back = load_checkpoint(path)
        assert back.descriptor == SMALL
        for k in params.blocks:
            np.testing.assert_array_equal(back.blocks[k], params.blocks[k])
        for k in params.buffers:
            np.testing.assert_array_equal(back.buffers[k], params.buffers[k])

    def test_descriptor_mismatch_rejected(self, tmp_path):
        params = init_agent(SMALL, seed=61)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(params, path)
        with pytest.raises(ValueError, match="architecture"):
            load_checkpoint(path, expected=Architecture())


class TestTradeRecord:
    def test_realized_return_consistency_enforced(self):
        with pytest.raises(ValueError, match="inconsistent"):
            TradeRecord(
                period=0,
                state=np.ones((2, 8, 4)),
                advice=np.array([0.5, 0.5]),
                action=np.array([0.5, 0.5]),
                predicted_return=0.0,
                fluctuation=np.array([1.1, 0.9]),
                realized_return=0.5,
            )

    def test_nonpositive_action_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            TradeRecord(
                period=0,
                state=np.ones((2, 8, 4)),
                advice=np.array([0.5, 0.5]),
                action=np.array([1.0, 0.0]),
                predicted_return=0.0,
                fluctuation=np.array([1.0, 1.0]),
                realized_return=0.0,
            )
