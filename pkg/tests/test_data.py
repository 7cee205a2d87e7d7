"""Generator determinism, labeling oracles, split disjointness, tokenization
closure, and the file ingestion paths."""

import json
import logging

import numpy as np
import pytest

from predgen.data import (
    DatasetSpec,
    RowError,
    SchemaError,
    gen_arithmetic,
    gen_toy_classification,
    gen_toy_regression,
    input_token_ids,
    keyword_rule,
    load_file,
    max_target_len,
    overlap_score,
    target_token_ids,
)
from predgen.vocab import BOS, EOS, SEP, default_vocab


class TestClassification:
    SPEC = DatasetSpec(task="classification", train_size=700, test_size=300,
                       classes=2, seed=5)

    def test_keyword_oracle_scores_perfectly(self):
        for ex in gen_toy_classification(self.SPEC):
            assert keyword_rule(ex.input_text, 2) == ex.target

    def test_seed_determinism(self):
        a = gen_toy_classification(self.SPEC)
        b = gen_toy_classification(self.SPEC)
        assert [(e.input_text, e.target, e.split) for e in a] == [
            (e.input_text, e.target, e.split) for e in b
        ]

    def test_class_balance(self):
        examples = gen_toy_classification(
            DatasetSpec(task="classification", train_size=1000, test_size=0,
                        classes=2, seed=1)
        )
        share = np.mean([e.target for e in examples])
        assert 0.45 <= share <= 0.55

    def test_label_noise_breaks_rule(self):
        noisy = gen_toy_classification(
            DatasetSpec(task="classification", train_size=500, test_size=0,
                        classes=2, seed=2, noise=0.3)
        )
        flipped = sum(
            keyword_rule(e.input_text, 2) != e.target for e in noisy
        )
        assert 100 <= flipped <= 200  # ~30% of 500

    def test_eight_class_cap(self):
        with pytest.raises(ValueError):
            DatasetSpec(task="classification", classes=9)


class TestRegression:
    def test_overlap_examples(self):
        assert overlap_score(["sun", "moon"], ["sun", "moon"]) == 1.0
        assert overlap_score(["sun", "moon"], ["rock", "sand"]) == 0.0
        assert overlap_score(["sun", "moon"], ["sun", "star"]) == 0.5

    def test_targets_match_overlap_oracle(self):
        spec = DatasetSpec(task="regression", train_size=300, test_size=100, seed=3)
        for ex in gen_toy_regression(spec):
            left, right = ex.input_text.split(" vs ")
            want = float(
                f"{overlap_score(left.split(), right.split()):.2f}"
            )
            assert ex.target == pytest.approx(want)

    def test_half_overlap_renders_to_0_50(self):
        assert f"{overlap_score(['a', 'b'], ['a', 'c']):.2f}" == "0.50"


class TestArithmetic:
    def test_exact_integer_oracle(self):
        spec = DatasetSpec(task="arithmetic", train_size=800, test_size=200, seed=4)
        examples = gen_arithmetic(spec)
        assert len(examples) == 1000
        for ex in examples:
            a, op, b = ex.input_text.split()
            want = int(a) + int(b) if op == "plus" else int(a) - int(b)
            assert ex.target == want

    def test_simple_cases_present_form(self):
        spec = DatasetSpec(task="arithmetic", train_size=50, test_size=0,
                           seed=6, operand_max=9)
        for ex in gen_arithmetic(spec):
            assert ex.input_text.split()[1] in ("plus", "minus")


class TestSplitsAndTokenization:
    @pytest.mark.parametrize("task", ["classification", "regression", "arithmetic"])
    def test_disjoint_splits_and_clean_tokenization(self, task):
        spec = DatasetSpec(task=task, train_size=200, test_size=80, seed=7)
        examples = {
            "classification": gen_toy_classification,
            "regression": gen_toy_regression,
            "arithmetic": gen_arithmetic,
        }[task](spec)
        train = {e.input_text for e in examples if e.split == "train"}
        test = {e.input_text for e in examples if e.split == "test"}
        assert len(train) == 200 and len(test) == 80
        assert not train & test
        vocab = default_vocab()
        for e in examples:
            ids = input_token_ids(e.input_text, vocab)
            assert ids[0] == BOS and ids[-1] == SEP
            tgt = target_token_ids(e.target, task, spec.decimals, vocab)
            assert tgt[-1] == EOS

    def test_max_target_len(self):
        spec = DatasetSpec(task="regression", train_size=50, test_size=10, seed=8)
        examples = gen_toy_regression(spec)
        assert max_target_len(examples, "regression", 2) == 5  # "0.50" + EOS


class TestLoadFile:
    def test_csv_happy_path(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("text,label\nhi,1\n")
        examples = load_file(
            path, "csv", {"text": "text", "target": "label", "task": "classification"}
        )
        assert len(examples) == 1
        assert examples[0].input_text == "hi" and examples[0].target == 1

    def test_jsonl_real_target(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text(json.dumps({"text": "sun moon", "target": "0.75"}) + "\n")
        examples = load_file(
            path, "jsonl", {"text": "text", "target": "target", "task": "regression"}
        )
        assert examples[0].target == pytest.approx(0.75)

    def test_missing_column_names_it(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("text,label\nhi,1\n")
        with pytest.raises(SchemaError, match="score"):
            load_file(
                path, "csv",
                {"text": "text", "target": "score", "task": "regression"},
            )

    def test_unparseable_target_carries_line(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("text,label\nhi,1\nbye,zzz\n")
        with pytest.raises(RowError) as err:
            load_file(
                path, "csv",
                {"text": "text", "target": "label", "task": "classification"},
            )
        assert err.value.line == 3

    def test_out_of_alphabet_replaced_and_warned(self, tmp_path, caplog):
        path = tmp_path / "data.csv"
        path.write_text('text,label\n"Héllo, World!",0\n')
        with caplog.at_level(logging.WARNING):
            examples = load_file(
                path, "csv",
                {"text": "text", "target": "label", "task": "classification"},
            )
        assert "replaced" in caplog.text
        vocab = default_vocab()
        vocab.encode(examples[0].input_text)  # must not raise

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            load_file(tmp_path / "x.bin", "parquet", {})
