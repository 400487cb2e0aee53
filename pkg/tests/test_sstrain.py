import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import perturbed
from parmix.core import Batch, Example, RngStream, StreamArray, Vocab
from parmix.exactdist import encode, parallel_proposal, sequential_proposal
from parmix.models.base import CountingModel
from parmix.models.tabular import point_mass_chain, tabular_random, uniform_tabular
from parmix.schedule import MixingConfig
from parmix.sstrain import (
    build_conditioning,
    conditioned_loss,
    conditioned_nll,
    example_streams,
    parallel_ss,
    parallel_ss_batch,
    sequential_ss,
    sequential_ss_batch,
    ss_training_step,
    teacher_forcing_loss,
    training_step,
)


def empirical_tv(mixed: np.ndarray, exact, V: int) -> float:
    codes = np.zeros(len(mixed), dtype=np.int64)
    for t in range(mixed.shape[1]):
        codes = codes * V + mixed[:, t]
    freq = np.bincount(codes, minlength=V ** mixed.shape[1]) / len(mixed)
    return 0.5 * float(np.abs(freq - exact.probs).sum())


def neural_batch(rows, ctx=None):
    gold = np.asarray(rows, dtype=np.int64)
    ctx = ctx or [()] * len(gold)
    return Batch(tuple(ctx), gold, np.ones_like(gold, dtype=bool))


class TestLosses:
    def test_uniform_model_nll(self):
        model = uniform_tabular(Vocab(4), 5)
        assert teacher_forcing_loss(model, Example((), (0, 1, 2, 3, 0))) == pytest.approx(5 * math.log(4), abs=1e-12)

    def test_tabular_hand_computation(self, tab33):
        loss = teacher_forcing_loss(tab33, Example((), (0, 1)))
        expected = -(math.log(tab33.table(())[0]) + math.log(tab33.table((0,))[1]))
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_mixed_conditioning_scores_gold(self, tab33):
        loss = conditioned_loss(tab33, Example((), (0, 1, 2)), (2, 2, 2))
        expected = -(math.log(tab33.table(())[0]) + math.log(tab33.table((2,))[1])
                     + math.log(tab33.table((2, 2))[2]))
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_nll_zero_off_mask(self, tab33):
        batch = Batch.from_examples([Example((), (0, 1, 2)), Example((), (1,))])
        nll = conditioned_nll(tab33, batch, batch.gold)
        assert nll[1, 1] == 0 and nll[1, 2] == 0 and nll[1, 0] > 0


class TestParallelTrace:
    def test_p_zero_returns_gold_bitwise(self, tab33):
        ex = Example((), (2, 0, 1))
        for K in (1, 2, 5):
            res = parallel_ss(tab33, ex, 0.0, K, RngStream(3))
            assert res.mixed == ex.target
            assert teacher_forcing_loss(tab33, ex) == conditioned_loss(tab33, ex, res.mixed)

    def test_copy_forward_rule(self, tab33):
        ex = Example((), (2, 0, 1))
        for seed in range(30):
            res = parallel_ss(tab33, ex, 0.7, 4, RngStream(seed))
            assert res.trace[0].mixed == ex.target
            for k in range(2, 5):
                prev, cur = res.trace[k - 1].mixed, res.trace[k].mixed
                assert cur[: k - 1] == prev[: k - 1]
            for k in range(1, 5):
                state = res.trace[k]
                for t in range(k - 1, 3):
                    assert state.mixed[t] == (state.sampled[t] if res.coins[k - 1][t] else ex.target[t])

    def test_p_one_first_pass_is_samples(self, tab33):
        res = parallel_ss(tab33, Example((), (2, 0, 1)), 1.0, 1, RngStream(0))
        assert res.mixed == res.trace[1].sampled and all(res.coins[0])

    def test_coins_redrawn_per_pass(self):
        model = uniform_tabular(Vocab(3), 12)
        res = parallel_ss(model, Example((), (0,) * 12), 0.5, 3, RngStream(1))
        assert res.coins[1][2:] != res.coins[2][2:]
        fixed = parallel_ss(model, Example((), (0,) * 12), 0.5, 3, RngStream(1), fixed_coins=True)
        assert fixed.coins[1][2:] == fixed.coins[2][2:]

    def test_padding_never_mixed(self):
        model = uniform_tabular(Vocab(3), 4)
        batch = Batch.from_examples([Example((), (1, 1, 1, 1)), Example((), (1,))], fill=0)
        out = parallel_ss_batch(model, batch, 1.0, 3, example_streams(RngStream(0), 2), keep_trace=True)
        assert np.all(out.mixed[1, 1:] == 0)
        assert not out.coins[:, 1, 1:].any()

    def test_batch_composition_invariance(self, tab33):
        ex = [Example((), (0, 1, 2)), Example((), (2, 2, 2)), Example((), (1, 0, 0))]
        streams = [RngStream(5).split(i) for i in range(3)]
        together = parallel_ss_batch(tab33, Batch.from_examples(ex), 0.6, 2, StreamArray.of(streams)).mixed
        for i in range(3):
            alone = parallel_ss(tab33, ex[i], 0.6, 2, streams[i]).mixed
            assert tuple(together[i]) == alone

    def test_rejects_bad_arguments(self, tab33):
        ex = Example((), (0, 1, 2))
        with pytest.raises(ValueError):
            parallel_ss(tab33, ex, 1.5, 1, RngStream(0))
        with pytest.raises(ValueError):
            parallel_ss(tab33, ex, 0.5, 0, RngStream(0))


class TestSequential:
    def test_p_zero_is_gold(self, tab33):
        assert sequential_ss(tab33, Example((), (1, 2, 0)), 0.0, RngStream(0)).mixed == (1, 2, 0)

    def test_point_mass_model(self):
        model = point_mass_chain(Vocab(3), 3, [2, 0, 1])
        assert sequential_ss(model, Example((), (1, 1, 1)), 1.0, RngStream(0)).mixed == (2, 0, 1)

    def test_call_counts(self, tab33):
        batch = Batch.from_examples([Example((), (0, 1, 2))] * 4)
        counting = CountingModel(tab33)
        sequential_ss_batch(counting, batch, 0.5, example_streams(RngStream(0), 4))
        assert counting.reset() == 3
        parallel_ss_batch(counting, batch, 0.5, 4, example_streams(RngStream(0), 4))
        assert counting.reset() == 4


@pytest.mark.parametrize("p,K", [(0.25, 1), (0.5, 2), (1.0, 3), (1.0, 1)])
def test_parallel_monte_carlo_matches_enumeration(tab33, p, K):
    gold = (2, 0, 1)
    n = 100_000
    mixed = parallel_ss_batch(tab33, Batch.repeat(Example((), gold), n), p, K,
                              example_streams(RngStream(11), n)).mixed
    assert empirical_tv(mixed, parallel_proposal(tab33, gold, p, K), 3) <= 0.01


@pytest.mark.parametrize("p", [0.25, 1.0])
def test_sequential_monte_carlo_matches_enumeration(tab33, p):
    gold = (2, 0, 1)
    n = 100_000
    mixed = sequential_ss_batch(tab33, Batch.repeat(Example((), gold), n), p, example_streams(RngStream(12), n)).mixed
    assert empirical_tv(mixed, sequential_proposal(tab33, gold, p), 3) <= 0.01


class TestTrainingStep:
    def batch(self):
        return neural_batch([[3, 4, 5, 2], [6, 7, 2, 0]], [(3, 4), (5,)])

    def test_teacher_forcing_equals_p_zero_bitwise(self, small_neural):
        model = perturbed(small_neural)
        batch = self.batch()
        tf = training_step(model, batch, "teacher-forcing", 0.0, 1, RngStream(0))
        for method in ("parallel-ss", "sequential-ss"):
            ss = training_step(model, batch, method, 0.0, 3, RngStream(0))
            assert tf[0] == ss[0]
            assert all(tf[1][k].tobytes() == ss[1][k].tobytes() for k in tf[1])

    def test_gradients_treat_samples_as_constants(self, small_neural):
        model = perturbed(small_neural).astype(np.float64)
        batch = self.batch()
        cond = build_conditioning(model, batch, "parallel-ss", 0.9, 2, RngStream(4))
        assert not np.array_equal(cond, batch.gold)
        frozen = model.loss_and_grads(cond, batch.gold, batch.mask, batch.contexts)
        live = training_step(model, batch, "parallel-ss", 0.9, 2, RngStream(4))
        assert frozen[0] == live[0]
        assert all(np.array_equal(frozen[1][k], live[1][k]) for k in live[1])

    @pytest.mark.parametrize("method,calls", [("teacher-forcing", 1), ("parallel-ss", 3), ("sequential-ss", 5)])
    def test_inference_calls(self, small_neural, method, calls):
        counting = CountingModel(small_neural)
        training_step(counting, self.batch(), method, 0.5, 2, RngStream(0))
        assert counting.reset() == calls

    def test_warmup_step_is_teacher_forcing(self, small_neural):
        model = perturbed(small_neural)
        cfg = MixingConfig(p_max=0.5, passes=2, warmup_steps=10, total_steps=20)
        tf = training_step(model, self.batch(), "teacher-forcing", 0.0, 1, RngStream(0))
        ss = ss_training_step(model, self.batch(), cfg, 5, RngStream(0))
        assert tf[0] == ss[0]

    def test_deterministic(self, small_neural):
        model = perturbed(small_neural)
        cfg = MixingConfig(p_max=0.8, passes=2, warmup_steps=0, total_steps=5)
        a = ss_training_step(model, self.batch(), cfg, 5, RngStream(9))
        b = ss_training_step(model, self.batch(), cfg, 5, RngStream(9))
        assert a[0] == b[0]

    def test_unknown_method(self, small_neural):
        with pytest.raises(ValueError):
            training_step(small_neural, self.batch(), "beam-ss", 0.5, 1, RngStream(0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 1.0), st.integers(1, 5),
       st.lists(st.integers(0, 2), min_size=1, max_size=4))
def test_parallel_invariants(seed, p, K, gold):
    model = tabular_random(Vocab(3), 4, 1.0, RngStream(seed))
    res = parallel_ss(model, Example((), tuple(gold)), p, K, RngStream(seed).split("mix"))
    assert len(res.trace) == K + 1 and len(res.mixed) == len(gold)
    for k in range(1, K + 1):
        cur, prev = res.trace[k].mixed, res.trace[k - 1].mixed
        assert cur[: k - 1] == prev[: k - 1]
        for t in range(k - 1, len(gold)):
            assert cur[t] in (gold[t], res.trace[k].sampled[t])
        # every sampled token has positive probability under its conditioning prefix
        for t, tok in enumerate(res.trace[k].sampled):
            assert model.table(prev[:t])[tok] > 0
    if p == 0.0:
        assert res.mixed == tuple(gold)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_p_one_first_positions_follow_ancestral_support(seed):
    model = tabular_random(Vocab(2), 3, 0.3, RngStream(seed))
    res = parallel_ss(model, Example((), (0, 1, 0)), 1.0, 3, RngStream(seed))
    probs = parallel_proposal(model, (0, 1, 0), 1.0, 3).probs
    assert probs[encode(res.mixed, 2)] > 0
