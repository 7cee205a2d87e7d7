"""Synthetic dataset generators plus file ingestion for user-supplied data.

All generators are pure functions of their spec (seeded), produce inputs
that tokenize without substitution, and keep train/test disjoint by
construction: every generated input string is unique, the first
``train_size`` go to train and the rest to test.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .adapters import render_number
from .vocab import BOS, EOS, SEP, Vocab, default_vocab

log = logging.getLogger(__name__)

TASKS = ("classification", "regression", "arithmetic")


class SchemaError(ValueError):
    """Input file is missing a declared column/field."""


class RowError(ValueError):
    """A data row failed to parse; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Example:
    input_text: str
    target: "int | float"
    split: str = "train"


@dataclass(frozen=True)
class DatasetSpec:
    name: str = "toy"
    task: str = "classification"
    train_size: int = 512
    test_size: int = 128
    seed: int = 0
    classes: int = 4
    decimals: int = 2
    noise: float = 0.0
    operand_max: int = 99
    value_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task {self.task!r} not in {TASKS}")
        if self.task == "classification" and not 2 <= self.classes <= 8:
            raise ValueError("classes must lie in [2, 8]")
        if self.task == "regression" and not 1 <= self.decimals <= 4:
            raise ValueError("decimals must lie in [1, 4]")
        if self.task == "arithmetic" and self.operand_max > 99:
            raise ValueError("operands are capped at 99")


CLASS_KEYWORDS = ("great", "awful", "fine", "weird", "bold", "tired", "sharp", "plain")

_NOUNS = (
    "movie", "book", "song", "play", "meal", "trip",
    "show", "game", "talk", "ride", "tune", "tale",
)
_FILLERS = (
    "long", "short", "loud", "quiet", "slow", "fast",
    "big", "small", "odd", "even", "warm", "cold",
    "dark", "light", "rough", "soft",
)

_REGRESSION_WORDS = (
    "sun", "moon", "star", "rain", "wind", "snow",
    "tree", "leaf", "rock", "sand", "wave", "fire",
    "bird", "fish", "wolf", "bear", "frog", "moth",
    "road", "lake", "hill", "cave", "reef", "dune",
)


def _generate_unique(rng, size: int, make) -> list:
    """Draw until ``size`` unique (text, target) rows exist."""
    rows, seen = [], set()
    attempts = 0
    while len(rows) < size:
        attempts += 1
        if attempts > 200 * size:
            raise RuntimeError("generator space too small for requested size")
        text, target = make(rng)
        if text in seen:
            continue
        seen.add(text)
        rows.append((text, target))
    return rows


def _to_examples(rows, spec: DatasetSpec) -> list[Example]:
    out = []
    for i, (text, target) in enumerate(rows):
        split = "train" if i < spec.train_size else "test"
        out.append(Example(input_text=text, target=target, split=split))
    return out


def gen_toy_classification(spec: DatasetSpec) -> list[Example]:
    """Sentiment-style template strings whose class is a keyword rule.

    The class-k keyword is the only class keyword in the text, so a simple
    keyword lookup scores 100% when the label-noise rate is zero.
    """
    rng = np.random.default_rng(spec.seed)
    keywords = CLASS_KEYWORDS[: spec.classes]

    def make(rng):
        cls = int(rng.integers(spec.classes))
        noun = _NOUNS[rng.integers(len(_NOUNS))]
        filler = _FILLERS[rng.integers(len(_FILLERS))]
        text = f"the {noun} was {keywords[cls]} and {filler}"
        label = cls
        if spec.noise > 0 and rng.random() < spec.noise:
            label = int((cls + 1 + rng.integers(spec.classes - 1)) % spec.classes)
        return text, label

    rows = _generate_unique(rng, spec.train_size + spec.test_size, make)
    return _to_examples(rows, spec)


def keyword_rule(text: str, classes: int) -> int:
    """The generating rule, usable as an oracle for noise-free data."""
    for cls, kw in enumerate(CLASS_KEYWORDS[:classes]):
        if kw in text.split():
            return cls
    raise ValueError(f"no class keyword in {text!r}")


def overlap_score(words_a: list[str], words_b: list[str]) -> float:
    """Normalized multiset overlap: |a & b| / max(|a|, |b|)."""
    shared = 0
    pool = list(words_b)
    for w in words_a:
        if w in pool:
            pool.remove(w)
            shared += 1
    return shared / max(len(words_a), len(words_b))


def gen_toy_regression(spec: DatasetSpec) -> list[Example]:
    """Pairs of short phrases scored by normalized word overlap in [0, 1]."""
    rng = np.random.default_rng(spec.seed)

    def make(rng):
        len_a = int(rng.integers(2, 4))
        len_b = int(rng.integers(2, 4))
        words_a = list(rng.choice(_REGRESSION_WORDS, size=len_a, replace=False))
        # share a seeded number of words so every overlap level appears often
        want_shared = int(rng.integers(0, min(len_a, len_b) + 1))
        shared = list(rng.choice(words_a, size=want_shared, replace=False))
        rest_bank = [w for w in _REGRESSION_WORDS if w not in words_a]
        rest = list(rng.choice(rest_bank, size=len_b - want_shared, replace=False))
        words_b = shared + rest
        rng.shuffle(words_b)
        text = " ".join(words_a) + " vs " + " ".join(words_b)
        target = float(render_number(overlap_score(words_a, words_b), spec.decimals))
        return text, target

    rows = _generate_unique(rng, spec.train_size + spec.test_size, make)
    return _to_examples(rows, spec)


def gen_arithmetic(spec: DatasetSpec) -> list[Example]:
    """Verbal addition/subtraction problems with exact integer targets.

    Rendered with words ("47 minus 83") so every example stays inside the
    tokenizer alphabet; evaluation treats answers within 1e-4 as correct.
    """
    rng = np.random.default_rng(spec.seed)

    def make(rng):
        a = int(rng.integers(0, spec.operand_max + 1))
        b = int(rng.integers(0, spec.operand_max + 1))
        if rng.random() < 0.5:
            return f"{a} plus {b}", a + b
        return f"{a} minus {b}", a - b

    rows = _generate_unique(rng, spec.train_size + spec.test_size, make)
    return _to_examples(rows, spec)


def generate(spec: DatasetSpec) -> list[Example]:
    """Dispatch on the spec's task kind."""
    if spec.task == "classification":
        return gen_toy_classification(spec)
    if spec.task == "regression":
        return gen_toy_regression(spec)
    return gen_arithmetic(spec)


# -- token framing ---------------------------------------------------------
# One framing shared by every regime: BOS, the input characters, then SEP;
# the target region (digit tokens + EOS) follows the SEP position.


def input_token_ids(text: str, vocab: Vocab | None = None) -> list[int]:
    vocab = vocab or default_vocab()
    return [BOS] + vocab.encode(text) + [SEP]


def target_token_ids(
    target, task: str, decimals: int = 2, vocab: Vocab | None = None
) -> list[int]:
    vocab = vocab or default_vocab()
    if task == "classification":
        rendered = str(int(target))
    elif task == "regression":
        rendered = render_number(float(target), decimals)
    else:
        rendered = str(int(target))
    return vocab.encode(rendered) + [EOS]


def max_target_len(examples, task: str, decimals: int = 2) -> int:
    return max(
        len(target_token_ids(ex.target, task, decimals)) for ex in examples
    )


# -- file ingestion ------------------------------------------------------------


def _clean_text(text: str, vocab: Vocab) -> tuple[str, int]:
    text = text.lower()
    cleaned = []
    replaced = 0
    for ch in text:
        if vocab.contains_symbol(ch):
            cleaned.append(ch)
        else:
            cleaned.append(" ")
            replaced += 1
    return "".join(cleaned), replaced


def _parse_target(raw, task: str, line: int):
    try:
        return int(raw) if task == "classification" else float(raw)
    except (TypeError, ValueError):
        raise RowError(f"cannot parse target {raw!r} as {task}", line) from None


def load_file(path, format: str, mapping: dict) -> list[Example]:
    """Read a CSV or JSONL file into Examples.

    ``mapping`` declares the text/target columns and the task kind, e.g.
    ``{"text": "sentence", "target": "label", "task": "classification"}``.
    Characters outside the tokenizer alphabet are replaced by spaces and
    counted in one warning summary.
    """
    if format not in ("csv", "jsonl"):
        raise ValueError(f"format must be csv or jsonl, got {format!r}")
    for key in ("text", "target", "task"):
        if key not in mapping:
            raise SchemaError(f"mapping is missing the {key!r} entry")
    task = mapping["task"]
    if task not in ("classification", "regression"):
        raise SchemaError(f"mapping task must be classification or regression")

    vocab = default_vocab()
    examples = []
    replaced_total = 0

    if format == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for col in (mapping["text"], mapping["target"]):
                if col not in header:
                    raise SchemaError(f"column {col!r} not found in {header}")
            for line, row in enumerate(reader, start=2):  # header is line 1
                text, n = _clean_text(row[mapping["text"]], vocab)
                replaced_total += n
                target = _parse_target(row[mapping["target"]], task, line)
                split = row.get(mapping.get("split", ""), "train") or "train"
                examples.append(Example(text, target, split))
    else:
        with open(path, encoding="utf-8") as fh:
            for line, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                obj = json.loads(raw)
                for col in (mapping["text"], mapping["target"]):
                    if col not in obj:
                        raise SchemaError(f"field {col!r} missing on line {line}")
                text, n = _clean_text(str(obj[mapping["text"]]), vocab)
                replaced_total += n
                target = _parse_target(obj[mapping["target"]], task, line)
                split = obj.get(mapping.get("split", ""), "train") or "train"
                examples.append(Example(text, target, split))

    if replaced_total:
        log.warning(
            "%s: replaced %d out-of-alphabet characters with spaces",
            path,
            replaced_total,
        )
    return examples
