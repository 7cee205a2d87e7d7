"""Transformer contract: causality, determinism, the autoregressive
factorization identity, greedy generation, pooling, and checkpoint io."""

import numpy as np
import pytest

from predgen import autodiff as ad
from predgen.autodiff import Tensor
from predgen.linalg import finite_diff_grad
from predgen.losses import writer_ce
from predgen.model import (
    ContextOverflowError,
    HiddenStates,
    ModelConfig,
    forward,
    forward_batch,
    generate,
    generate_batch,
    init_params,
    load_checkpoint,
    pool,
    save_checkpoint,
)
from predgen.optim import Adam
from predgen.vocab import BOS, EOS, SEP, default_vocab

TINY = ModelConfig(d_model=16, n_layers=2, n_heads=2, context_len=24, seed=0)


@pytest.fixture(scope="module")
def tiny_model():
    return init_params(TINY)


def rand_ids(rng, length):
    return rng.integers(4, TINY.vocab_size, size=length)


class TestForward:
    def test_causality(self, tiny_model):
        rng = np.random.default_rng(0)
        ids = rand_ids(rng, 10)
        base, _ = forward(tiny_model, TINY, ids)
        for t in range(1, 10):
            tweaked = ids.copy()
            tweaked[t] = (tweaked[t] - 4 + 1) % (TINY.vocab_size - 4) + 4
            out, _ = forward(tiny_model, TINY, tweaked)
            np.testing.assert_array_equal(out[:t], base[:t])
            assert np.abs(out[t:] - base[t:]).max() > 0

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(1)
        ids = rand_ids(rng, 8)
        a, _ = forward(init_params(TINY), TINY, ids)
        b, _ = forward(init_params(TINY), TINY, ids)
        np.testing.assert_array_equal(a, b)

    def test_single_token_shapes(self, tiny_model):
        logits, states = forward(tiny_model, TINY, [BOS])
        assert logits.shape == (1, TINY.vocab_size)
        assert states.values.shape == (1, TINY.d_model)

    def test_context_overflow(self, tiny_model):
        with pytest.raises(ContextOverflowError):
            forward(tiny_model, TINY, list(range(4, 4 + TINY.context_len + 1)))

    def test_autoregressive_factorization(self, tiny_model):
        """Full-sequence log P(Y|X) equals the sum of stepwise terms."""
        rng = np.random.default_rng(2)
        x = list(rand_ids(rng, 5))
        y = list(rand_ids(rng, 4))
        seq = x + y
        logits, _ = forward(tiny_model, TINY, seq)

        def logprob(logits_row, tok):
            shifted = logits_row - logits_row.max()
            return shifted[tok] - np.log(np.exp(shifted).sum())

        whole = sum(
            logprob(logits[len(x) - 1 + t], y[t]) for t in range(len(y))
        )
        stepwise = 0.0
        for t in range(len(y)):
            prefix = x + y[:t]
            step_logits, _ = forward(tiny_model, TINY, prefix)
            stepwise += logprob(step_logits[-1], y[t])
        assert whole == pytest.approx(stepwise, abs=1e-8)


class TestGenerate:
    def test_max_new_zero(self, tiny_model):
        tokens, states = generate(tiny_model, TINY, [BOS, SEP], max_new=0)
        assert tokens == [] and states is None

    def test_eos_dominant_head_stops_immediately(self):
        # pin the final states to e1, then point e1 hard at EOS
        params = init_params(TINY)
        params["ln_f_g"] = Tensor(np.zeros(TINY.d_model), requires_grad=True)
        bias = np.zeros(TINY.d_model)
        bias[0] = 1.0
        params["ln_f_b"] = Tensor(bias, requires_grad=True)
        head = np.zeros_like(params["head"].data)
        head[0, EOS] = 50.0
        params["head"] = Tensor(head, requires_grad=True)
        tokens, states = generate(params, TINY, [BOS, SEP], max_new=5)
        assert tokens == [EOS]
        assert states.values.shape == (1, TINY.d_model)

    def test_generated_states_match_forward(self, tiny_model):
        tokens, states = generate(tiny_model, TINY, [BOS, 5, 6, SEP], max_new=4)
        full_logits, full_states = forward(tiny_model, TINY, [BOS, 5, 6, SEP] + tokens)
        np.testing.assert_allclose(
            states.values, full_states.values[4 : 4 + len(tokens)], rtol=1e-12
        )

    def test_memorized_addition(self):
        """Overfit one example until train loss < 1e-3, then decode it."""
        vocab = default_vocab()
        cfg = ModelConfig(d_model=32, n_layers=2, n_heads=2, context_len=16, seed=3)
        params = init_params(cfg)
        x = [BOS] + vocab.encode("2 plus 3") + [SEP]
        y = vocab.encode("5") + [EOS]
        seq = np.array([x + y])
        gold = np.array(y)
        opt = Adam(params, lr=5e-3)
        loss_val = np.inf
        for _ in range(1200):
            logits, _ = forward_batch(params, cfg, seq)
            loss = writer_ce(logits[0, len(x) - 1 : len(x) + len(y) - 1], gold)
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_val = loss.item()
            if loss_val < 1e-3:
                break
        assert loss_val < 1e-3
        tokens, _ = generate(params, cfg, x, max_new=4)
        assert tokens == [vocab.encode("5")[0], EOS]

    def test_batched_rows_stop_independently(self, tiny_model):
        prefixes = [[BOS, 5, SEP], [BOS, 6, 7, 8, SEP]]
        tokens, spans = generate_batch(tiny_model, TINY, prefixes, max_new=3)
        assert len(tokens) == 2
        for toks, span in zip(tokens, spans):
            assert span.shape == (len(toks), TINY.d_model)

    def test_per_row_limits(self, tiny_model):
        prefixes = [[BOS, 5, SEP], [BOS, 6, SEP]]
        tokens, _ = generate_batch(
            tiny_model, TINY, prefixes, max_new=4, stop_at_eos=False, limits=[2, 4]
        )
        assert len(tokens[0]) == 2 and len(tokens[1]) == 4


class TestPool:
    def test_single_row_specs_agree(self):
        states = HiddenStates(np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_array_equal(pool(states, "last_token"),
                                      pool(states, "mean"))

    def test_mean(self):
        states = HiddenStates(np.array([[1.0, 1.0], [3.0, 3.0]]))
        np.testing.assert_array_equal(pool(states, "mean"), [2.0, 2.0])

    def test_last_token_bit_exact(self):
        rng = np.random.default_rng(4)
        values = rng.normal(size=(5, 3))
        np.testing.assert_array_equal(pool(HiddenStates(values), "last_token"),
                                      values[-1])

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        values = rng.normal(size=(4, 6))
        a = pool(HiddenStates(values.copy()), "mean")
        b = pool(HiddenStates(values.copy()), "mean")
        np.testing.assert_array_equal(a, b)

    def test_empty_states_error(self):
        with pytest.raises(ValueError):
            pool(np.empty((0, 4)), "mean")


class TestModelGradients:
    def test_full_loss_matches_finite_differences(self):
        """d(loss)/d(params) on a 2-layer, d=8 model, rel. error < 1e-4."""
        cfg = ModelConfig(d_model=8, n_layers=2, n_heads=2, context_len=10, seed=6)
        params = init_params(cfg)
        rng = np.random.default_rng(6)
        ids = np.array([[BOS, 5, 6, SEP, 8, 9, EOS]])
        gold = np.array([8, 9, EOS])

        def loss_fn():
            logits, _ = forward_batch(params, cfg, ids)
            return writer_ce(logits[0, 3:6], gold)

        loss_fn().backward()
        for name, p in params.items():
            flat = p.data.reshape(-1)
            got = p.grad.reshape(-1)
            n_probe = min(4, flat.size)
            coords = rng.choice(flat.size, size=n_probe, replace=False)
            for c in coords:
                orig = flat[c]
                h = 1e-5
                flat[c] = orig + h
                f_plus = loss_fn().item()
                flat[c] = orig - h
                f_minus = loss_fn().item()
                flat[c] = orig
                fd = (f_plus - f_minus) / (2 * h)
                assert got[c] == pytest.approx(fd, rel=1e-4, abs=1e-7), name


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        params = init_params(TINY)
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, params, TINY, rng_state={"step": 3})
        loaded, cfg, rng_state = load_checkpoint(path)
        assert cfg == TINY
        assert rng_state == {"step": 3}
        assert loaded.keys() == params.keys()
        for name in params:
            np.testing.assert_array_equal(loaded[name].data, params[name].data)
        ids = np.random.default_rng(8).integers(4, TINY.vocab_size, size=6)
        a, _ = forward(params, TINY, ids)
        b, _ = forward(loaded, TINY, ids)
        np.testing.assert_array_equal(a, b)
