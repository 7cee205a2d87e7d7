"""Adapter semantics: classification over span embeddings, and the numeric
token codec including its rounding rule and failure positions."""

import numpy as np
import pytest

from predgen.adapters import (
    ClassifierHead,
    DecodeError,
    Prediction,
    adapt_classify,
    cls_embedding,
    decode_number,
    encode_number,
    init_classifier_head,
    regression_director_loss,
    render_number,
)
from predgen.autodiff import Tensor
from predgen.losses import OrderedPenalty, per_token_ce
from predgen.model import HiddenStates
from predgen.vocab import EOS, default_vocab


def head_from(w, cls_spec="last_generated_token"):
    return ClassifierHead(W=Tensor(np.asarray(w, dtype=float), requires_grad=True),
                          cls_spec=cls_spec)


class TestAdaptClassify:
    def test_zero_weights_give_uniform(self):
        states = HiddenStates(np.random.default_rng(0).normal(size=(4, 6)))
        pred = adapt_classify(states, head_from(np.zeros((3, 6))))
        np.testing.assert_allclose(pred.value, np.full(3, 1 / 3))

    def test_opposed_rows_analytic_sigmoid(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=5)
        states = HiddenStates(np.vstack([rng.normal(size=5), v]))  # last row is v
        pred = adapt_classify(states, head_from(np.vstack([v, -v])))
        z = 2 * float(v @ v)
        sigma = 1 / (1 + np.exp(-z))
        np.testing.assert_allclose(pred.value, [sigma, 1 - sigma], rtol=1e-12)

    def test_distribution_normalized(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            states = HiddenStates(rng.normal(size=(3, 8)))
            pred = adapt_classify(states, head_from(rng.normal(size=(5, 8))))
            assert pred.value.shape == (5,)
            assert pred.value.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(pred.value >= 0)

    def test_empty_span_error(self):
        with pytest.raises(ValueError, match="empty generated span"):
            cls_embedding(np.empty((0, 4)), "last_generated_token")

    def test_only_span_rows_matter(self):
        """The classifier sees the generated span's states and nothing else."""
        rng = np.random.default_rng(3)
        span = rng.normal(size=(3, 6))
        head = head_from(rng.normal(size=(4, 6)))
        a = adapt_classify(HiddenStates(span, span_offset=10), head)
        b = adapt_classify(HiddenStates(span.copy(), span_offset=99), head)
        np.testing.assert_array_equal(a.value, b.value)

    def test_mean_spec(self):
        states = np.array([[1.0, 0.0], [3.0, 2.0]])
        np.testing.assert_array_equal(
            cls_embedding(states, "mean_of_generated"), [2.0, 1.0]
        )

    def test_init_head_shape(self):
        head = init_classifier_head(4, 16, seed=0)
        assert head.W.shape == (4, 16) and head.num_classes == 4


class TestDecodeNumber:
    def test_example_13_4(self):
        assert decode_number(list("13.4")).value == pytest.approx(13.4)

    def test_example_0_75(self):
        assert decode_number(list("0.75")).value == pytest.approx(0.75)

    def test_double_dot_position(self):
        with pytest.raises(DecodeError) as err:
            decode_number(list("..1"))
        assert err.value.position == 1

    def test_second_dot_rejected(self):
        with pytest.raises(DecodeError) as err:
            decode_number(list("1.2.3"))
        assert err.value.position == 4

    def test_negative(self):
        assert decode_number(list("-12.5")).value == pytest.approx(-12.5)

    def test_trailing_eos_allowed(self):
        vocab = default_vocab()
        ids = vocab.encode("0.75") + [EOS]
        assert decode_number(ids).value == pytest.approx(0.75)

    def test_stray_symbol(self):
        with pytest.raises(DecodeError) as err:
            decode_number(list("12a"))
        assert err.value.position == 3

    def test_empty_and_bare_minus(self):
        with pytest.raises(DecodeError):
            decode_number([EOS])
        with pytest.raises(DecodeError):
            decode_number(list("-"))

    def test_leading_zeros_permitted(self):
        assert decode_number(list("007")).value == pytest.approx(7.0)

    def test_trailing_dot_rejected(self):
        with pytest.raises(DecodeError):
            decode_number(list("3."))


class TestEncodeNumber:
    def test_example_0_75(self):
        vocab = default_vocab()
        assert encode_number(0.75, 2) == vocab.encode("0.75")

    def test_negative(self):
        assert render_number(-1.5, 1) == "-1.5"

    def test_round_half_away_from_zero(self):
        assert render_number(0.005, 2) == "0.01"
        assert render_number(-0.005, 2) == "-0.01"

    def test_zero_decimals(self):
        assert render_number(13.0, 0) == "13"

    def test_overflow(self):
        with pytest.raises(OverflowError):
            render_number(1e6, 2)

    def test_bad_decimals(self):
        with pytest.raises(ValueError):
            render_number(1.0, 7)

    @pytest.mark.parametrize("decimals", range(0, 7))
    def test_roundtrip_within_half_ulp(self, decimals):
        rng = np.random.default_rng(decimals)
        values = rng.uniform(-1e5, 1e5, size=10000)
        tol = 0.5 * 10.0**-decimals + 1e-12
        for x in values:
            back = decode_number(encode_number(float(x), decimals)).value
            assert abs(back - x) <= tol


class TestRegressionDirectorLoss:
    def test_first_digit_error_costs_more_than_last(self):
        """Against gold 0.75, the director charges '1.75' (wrong leading
        digit) strictly more than '0.76' (wrong trailing digit) at equal
        per-token CE."""
        vocab = default_vocab()
        gold = np.array(vocab.encode("0.75"))
        alpha = OrderedPenalty((1.67, 1.33, 1.01, 1.00))
        v = len(vocab)

        def logits_predicting(text):
            pred = vocab.encode(text)
            logits = np.full((4, v), -60.0)
            for i, tok in enumerate(pred):
                # matched digits are certain; the single wrong digit gets a
                # fixed margin, so both variants pay the same per-token CE
                logits[i, tok] = 60.0 if tok == gold[i] else 8.0
            return logits

        wrong_first = regression_director_loss(logits_predicting("1.75"), gold, alpha)
        wrong_last = regression_director_loss(logits_predicting("0.76"), gold, alpha)
        assert wrong_first > wrong_last
        assert wrong_first / wrong_last == pytest.approx(1.67, rel=1e-9)

    def test_delegates_to_ordered_ce(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(3, 10))
        gold = rng.integers(0, 10, size=3)
        alpha = OrderedPenalty((1.5, 1.2, 1.0))
        from predgen.losses import ordered_ce

        assert regression_director_loss(logits, gold, alpha) == ordered_ce(
            logits, gold, alpha
        )
