"""Task adapters: from generated-token hidden states to structured outputs.

Classification applies a trainable matrix to one embedding extracted from
the generated span and softmaxes the result.  Regression trains through a
position-weighted token cross-entropy and, at evaluation time, decodes the
generated digit tokens into a real value.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .losses import ordered_ce
from .model import HiddenStates
from .vocab import EOS, Vocab, default_vocab

CLS_SPECS = ("last_generated_token", "mean_of_generated")


class DecodeError(ValueError):
    """A generated token sequence that is not a well-formed number.

    ``position`` is the 1-based index of the offending token.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


@dataclass
class Prediction:
    kind: str  # "class_distribution" | "real_value"
    value: "np.ndarray | float"


@dataclass
class ClassifierHead:
    """Trainable map from a span embedding to class logits."""

    W: Tensor  # (num_classes, d)
    cls_spec: str = "last_generated_token"

    def __post_init__(self):
        if self.W.ndim != 2 or self.W.shape[0] < 2:
            raise ValueError("head needs shape (num_classes >= 2, d)")
        if self.cls_spec not in CLS_SPECS:
            raise ValueError(f"cls_spec {self.cls_spec!r} not in {CLS_SPECS}")

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]


def init_classifier_head(
    num_classes: int, d_model: int, seed: int = 0, cls_spec: str = "last_generated_token"
) -> ClassifierHead:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC1A55)))
    w = Tensor(rng.normal(0.0, 0.02, size=(num_classes, d_model)), requires_grad=True)
    return ClassifierHead(W=w, cls_spec=cls_spec)


def cls_embedding(states, cls_spec: str):
    """Extract the classification embedding from a generated span's states."""
    if isinstance(states, HiddenStates):
        states = states.values
    if isinstance(states, Tensor):
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValueError("empty generated span: generation produced no tokens")
        if cls_spec == "last_generated_token":
            return states[states.shape[0] - 1]
        return states.mean(axis=0)
    values = np.asarray(states, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ValueError("empty generated span: generation produced no tokens")
    if cls_spec == "last_generated_token":
        return values[-1]
    if cls_spec == "mean_of_generated":
        return values.mean(axis=0)
    raise ValueError(f"cls_spec {cls_spec!r} not in {CLS_SPECS}")


def class_logits(states, head: ClassifierHead) -> Tensor:
    """Differentiable class logits from span states (training path)."""
    v = cls_embedding(states, head.cls_spec)
    if not isinstance(v, Tensor):
        v = Tensor(v)
    return ad.matmul(head.W, v.reshape(-1, 1)).reshape(-1)


def adapt_classify(states, head: ClassifierHead) -> Prediction:
    """Softmax class distribution from the generated span."""
    logits = class_logits(states, head)
    dist = ad.softmax(logits.detach(), axis=-1).data
    return Prediction(kind="class_distribution", value=dist)


# -- numeric token codec -------------------------------------------------------


def _to_chars(tokens, vocab: Vocab) -> list[str]:
    chars = []
    for tok in tokens:
        if isinstance(tok, str):
            chars.append(tok)
        else:
            tok = int(tok)
            if tok == EOS:
                chars.append("<eos>")
            else:
                chars.append(vocab.decode([tok]))
    return chars


def decode_number(tokens, vocab: Vocab | None = None) -> Prediction:
    """Parse digit tokens as ['-'] digits ['.' digits]; trailing EOS allowed.

    Raises :class:`DecodeError` with the 1-based offending position for
    anything outside that grammar (two dots, empty digit runs, stray
    symbols).
    """
    vocab = vocab or default_vocab()
    chars = _to_chars(tokens, vocab)
    if chars and chars[-1] == "<eos>":
        chars = chars[:-1]
    if not chars:
        raise DecodeError("empty number", 1)

    i = 0
    if chars[i] == "-":
        i += 1
    start_int = i
    while i < len(chars) and chars[i].isdigit():
        i += 1
    if i == start_int:
        raise DecodeError(f"expected digit, got {chars[i] if i < len(chars) else 'end'!r}",
                          i + 1)
    if i < len(chars) and chars[i] == ".":
        i += 1
        start_frac = i
        while i < len(chars) and chars[i].isdigit():
            i += 1
        if i == start_frac:
            raise DecodeError("expected digit after decimal point", i + 1)
    if i != len(chars):
        raise DecodeError(f"unexpected symbol {chars[i]!r}", i + 1)
    return Prediction(kind="real_value", value=float("".join(chars)))


def render_number(x: float, decimals: int) -> str:
    """Fixed-point rendering with exactly ``decimals`` fractional digits.

    Ties round half away from zero.
    """
    if not 0 <= decimals <= 6:
        raise ValueError("decimals must lie in [0, 6]")
    if not np.isfinite(x) or abs(x) >= 1e6:
        raise OverflowError(f"value {x} outside the renderable range |x| < 1e6")
    quantum = Decimal(1).scaleb(-decimals)
    return str(Decimal(repr(float(x))).quantize(quantum, rounding=ROUND_HALF_UP))


def encode_number(x: float, decimals: int, vocab: Vocab | None = None) -> list[int]:
    """Token ids of the fixed-point rendering (inverse of decode_number)."""
    vocab = vocab or default_vocab()
    return vocab.encode(render_number(x, decimals))


def regression_director_loss(logits, gold, alpha):
    """Ordered-penalty cross-entropy over the generated span."""
    return ordered_ce(logits, gold, alpha)
