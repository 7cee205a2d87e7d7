"""The writer-director loss family.

The writer loss is token-level cross-entropy over the generated span; the
director loss scores the structured prediction.  The alignment combiner
evaluates

    max(L_W^2, L_D^2) * exp(-|log L_W - log L_D|)

which is algebraically the product L_W * L_D for positive inputs but is kept
in the max/exp form on purpose: the numerical behaviour of that evaluation
order is part of what gets measured.  Both inputs are clamped below by a
small epsilon (1e-8) before the logs.

Every function accepts either plain numpy values (vectorized, returns
ndarray/float) or autodiff ``Tensor``s (returns a Tensor wired into the
caller's graph).  The tie L_W = L_D uses the symmetric subgradient: the max
splits half/half and the exponential term contributes zero derivative there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

EPS_CLAMP = 1e-8

COMBINERS = ("wdal", "multiplicative", "adaptive", "director_only")


@dataclass
class LossBreakdown:
    """One training step's loss components and their combination."""

    writer: float
    director: float
    combined: float
    combiner: str


@dataclass(frozen=True)
class OrderedPenalty:
    """Monotonically non-increasing positive per-position weights."""

    alpha: tuple

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        if not alpha:
            raise ValueError("alpha must be non-empty")
        if alpha[-1] <= 0:
            raise ValueError("alpha entries must be positive")
        if any(a < b for a, b in zip(alpha, alpha[1:])):
            raise ValueError(f"alpha must be non-increasing, got {alpha}")
        object.__setattr__(self, "alpha", alpha)

    def __len__(self):
        return len(self.alpha)


def default_ordered_penalty(m: int) -> OrderedPenalty:
    """Front-loaded weights: 1.67, 1.33, 1.01, then 1.00 for the tail."""
    head = (1.67, 1.33, 1.01)
    alpha = (head + (1.0,) * m)[:m]
    return OrderedPenalty(alpha)


# -- cross-entropy building blocks --------------------------------------------


def _per_token_ce_array(logits: np.ndarray, gold: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1))
    return logz - shifted[np.arange(len(gold)), gold]


def per_token_ce(logits, gold) -> "np.ndarray | Tensor":
    """Cross-entropy of each position's distribution against its gold token."""
    gold = np.asarray(gold, dtype=np.int64)
    if isinstance(logits, Tensor):
        if logits.ndim != 2 or logits.shape[0] != len(gold):
            raise ValueError(
                f"logits {logits.shape} do not match {len(gold)} gold tokens"
            )
        return ad.gather_last(ad.log_softmax(logits, axis=-1), gold) * -1.0
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] != len(gold):
        raise ValueError(f"logits {logits.shape} do not match {len(gold)} gold tokens")
    return _per_token_ce_array(logits, gold)


def writer_ce(logits, gold, pad_id: int | None = None):
    """Mean next-token cross-entropy over the target span, PAD excluded."""
    gold = np.asarray(gold, dtype=np.int64)
    if gold.size < 1:
        raise ValueError("gold must contain at least one token")
    keep = np.ones(len(gold), dtype=bool) if pad_id is None else gold != pad_id
    if not keep.any():
        raise ValueError("all gold positions are padding")
    ce = per_token_ce(logits, gold)
    if isinstance(ce, Tensor):
        return (ce * keep.astype(np.float64)).sum() / int(keep.sum())
    return float(ce[keep].mean())


def ordered_ce(logits, gold, alpha) -> "float | Tensor":
    """Position-weighted sum of per-token cross-entropies."""
    if not isinstance(alpha, OrderedPenalty):
        alpha = OrderedPenalty(tuple(alpha))
    gold = np.asarray(gold, dtype=np.int64)
    m = len(gold)
    if len(alpha) < m:
        raise ValueError(f"alpha has {len(alpha)} weights but target has {m} tokens")
    weights = np.asarray(alpha.alpha[:m], dtype=np.float64)
    ce = per_token_ce(logits, gold)
    if isinstance(ce, Tensor):
        return (ce * weights).sum()
    return float((ce * weights).sum())


# -- combiners -----------------------------------------------------------------


def _check_finite(*values) -> None:
    for v in values:
        data = v.data if isinstance(v, Tensor) else np.asarray(v)
        if not np.all(np.isfinite(data)):
            raise ValueError("loss inputs must be finite")


def wdal(loss_writer, loss_director, eps: float = EPS_CLAMP):
    """The max/exp alignment form; equals the product for positive inputs."""
    _check_finite(loss_writer, loss_director)
    if isinstance(loss_writer, Tensor) or isinstance(loss_director, Tensor):
        lw = ad.maximum(loss_writer, eps)
        ld = ad.maximum(loss_director, eps)
        authority = ad.maximum(lw * lw, ld * ld)
        penalty = ad.exp(-ad.absolute(ad.log(lw) - ad.log(ld)))
        return authority * penalty
    lw = np.maximum(np.asarray(loss_writer, dtype=np.float64), eps)
    ld = np.maximum(np.asarray(loss_director, dtype=np.float64), eps)
    out = np.maximum(lw * lw, ld * ld) * np.exp(-np.abs(np.log(lw) - np.log(ld)))
    return float(out) if out.ndim == 0 else out


def wdal_grad(loss_writer, loss_director, eps: float = EPS_CLAMP):
    """Exact gradient pair of the max/exp form.

    Away from the tie the form differentiates to (L_D, L_W), the same as the
    product identity.  At L_W = L_D the max is subdifferentiable; the
    symmetric element (weight 1/2 per branch) composed with the exponential
    term's zero derivative lands on (L_W, L_D), which sits inside the
    subgradient hull {(2a*L_W, 2(1-a)*L_D) : a in [0, 1]}.
    """
    _check_finite(loss_writer, loss_director)
    lw_raw = np.asarray(loss_writer, dtype=np.float64)
    ld_raw = np.asarray(loss_director, dtype=np.float64)
    lw = np.maximum(lw_raw, eps)
    ld = np.maximum(ld_raw, eps)
    # clamp pass-through: zero once the raw input falls below the floor
    pass_w = (lw_raw > eps) + 0.5 * (lw_raw == eps)
    pass_d = (ld_raw > eps) + 0.5 * (ld_raw == eps)
    gw = ld * pass_w
    gd = lw * pass_d
    if gw.ndim == 0:
        return float(gw), float(gd)
    return gw, gd


def multiplicative(loss_writer, loss_director):
    """Plain product, no clamping, no log-space evaluation."""
    _check_finite(loss_writer, loss_director)
    if isinstance(loss_writer, Tensor) or isinstance(loss_director, Tensor):
        return ad.as_tensor(loss_writer) * ad.as_tensor(loss_director)
    out = np.asarray(loss_writer, dtype=np.float64) * np.asarray(
        loss_director, dtype=np.float64
    )
    return float(out) if out.ndim == 0 else out


@dataclass
class AdaptiveState:
    """Exponential moving averages of recent loss magnitudes."""

    decay: float = 0.99
    ema_writer: float = 1.0
    ema_director: float = 1.0

    def weight(self) -> float:
        return self.ema_director / (self.ema_writer + self.ema_director)

    def update(self, loss_writer: float, loss_director: float) -> None:
        d = self.decay
        self.ema_writer = d * self.ema_writer + (1 - d) * abs(loss_writer)
        self.ema_director = d * self.ema_director + (1 - d) * abs(loss_director)


def adaptive(loss_writer, loss_director, state: AdaptiveState):
    """Inverse-magnitude weighted sum w*L_W + (1-w)*L_D, w = ema_D/(ema_W+ema_D).

    The weights are computed from the state before this call's update, and
    are treated as constants in differentiation.
    """
    _check_finite(loss_writer, loss_director)
    w = state.weight()
    if isinstance(loss_writer, Tensor) or isinstance(loss_director, Tensor):
        combined = ad.as_tensor(loss_writer) * w + ad.as_tensor(loss_director) * (
            1.0 - w
        )
        state.update(float(ad.as_tensor(loss_writer).data),
                     float(ad.as_tensor(loss_director).data))
        return combined
    combined = w * float(loss_writer) + (1.0 - w) * float(loss_director)
    state.update(float(loss_writer), float(loss_director))
    return combined


def combine(
    combiner: str,
    loss_writer,
    loss_director,
    adaptive_state: AdaptiveState | None = None,
    eps: float = EPS_CLAMP,
):
    """Dispatch to the configured combiner; returns the combined loss."""
    if combiner == "wdal":
        return wdal(loss_writer, loss_director, eps=eps)
    if combiner == "multiplicative":
        return multiplicative(loss_writer, loss_director)
    if combiner == "adaptive":
        if adaptive_state is None:
            raise ValueError("adaptive combiner needs an AdaptiveState")
        return adaptive(loss_writer, loss_director, adaptive_state)
    if combiner == "director_only":
        return ad.as_tensor(loss_director) if isinstance(
            loss_director, Tensor
        ) else float(loss_director)
    raise ValueError(f"unknown combiner {combiner!r}; expected one of {COMBINERS}")
