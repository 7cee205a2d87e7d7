"""A tiny decoder-only autoregressive transformer with exposed hidden states.

Pre-norm blocks, learned positional embeddings, untied output head: the
smallest standard recipe that trains stably at d_model = 64.  The forward
pass returns both next-token logits and the final-layer (pre-head) hidden
state of every position; greedy generation reuses the same pass.

Parameters live in an ordered dict of named ``Tensor``s so the optimizer,
checkpoints, and gradient checks all see one flat namespace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .vocab import EOS, default_vocab

CHECKPOINT_VERSION = 1


class ContextOverflowError(ValueError):
    """Sequence longer than the model's context window."""


class CheckpointError(ValueError):
    """Malformed or version-incompatible checkpoint document."""


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    context_len: int = 64
    vocab_size: int = len(default_vocab())
    seed: int = 0

    def __post_init__(self):
        if min(self.d_model, self.n_layers, self.n_heads, self.context_len) < 1:
            raise ValueError("all model dimensions must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )


@dataclass
class HiddenStates:
    """Per-token final-layer representations for a span of positions."""

    values: np.ndarray  # (L, d)
    span_offset: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError(f"states need shape (L>=1, d), got {self.values.shape}")


def init_params(config: ModelConfig) -> dict[str, Tensor]:
    """Seeded Gaussian init (std 0.02); layernorm gains 1, biases 0."""
    rng = np.random.default_rng(config.seed)
    d, ff = config.d_model, 4 * config.d_model

    def normal(*shape):
        return Tensor(rng.normal(0.0, 0.02, size=shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    params: dict[str, Tensor] = {
        "tok_emb": normal(config.vocab_size, d),
        "pos_emb": normal(config.context_len, d),
    }
    for i in range(config.n_layers):
        p = f"layer{i}."
        params[p + "ln1_g"] = ones(d)
        params[p + "ln1_b"] = zeros(d)
        params[p + "attn_wq"] = normal(d, d)
        params[p + "attn_wk"] = normal(d, d)
        params[p + "attn_wv"] = normal(d, d)
        params[p + "attn_wo"] = normal(d, d)
        params[p + "attn_bo"] = zeros(d)
        params[p + "ln2_g"] = ones(d)
        params[p + "ln2_b"] = zeros(d)
        params[p + "mlp_wi"] = normal(d, ff)
        params[p + "mlp_bi"] = zeros(ff)
        params[p + "mlp_wo"] = normal(ff, d)
        params[p + "mlp_bo"] = zeros(d)
    params["ln_f_g"] = ones(d)
    params["ln_f_b"] = zeros(d)
    params["head"] = normal(d, config.vocab_size)
    return params


def _attention(x, params, prefix, config, mask):
    B, L, d = x.shape
    H = config.n_heads
    dh = d // H
    q = ad.matmul(x, params[prefix + "attn_wq"])
    k = ad.matmul(x, params[prefix + "attn_wk"])
    v = ad.matmul(x, params[prefix + "attn_wv"])
    # (B, L, d) -> (B, H, L, dh)
    q = q.reshape(B, L, H, dh).transpose((0, 2, 1, 3))
    k = k.reshape(B, L, H, dh).transpose((0, 2, 1, 3))
    v = v.reshape(B, L, H, dh).transpose((0, 2, 1, 3))
    scores = ad.matmul(q, k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
    scores = scores + mask  # additive -inf above the diagonal
    attn = ad.softmax(scores, axis=-1)
    out = ad.matmul(attn, v)
    out = out.transpose((0, 2, 1, 3)).reshape(B, L, d)
    return ad.matmul(out, params[prefix + "attn_wo"]) + params[prefix + "attn_bo"]


_MASK_NEG = -1e30


def forward_batch(
    params: dict[str, Tensor], config: ModelConfig, ids: np.ndarray
) -> tuple[Tensor, Tensor]:
    """Causal forward over a (B, L) id batch -> (logits (B,L,V), states (B,L,d)).

    Right-padding is safe without a key mask: a row's real tokens all precede
    its padding, and the causal mask already hides later positions.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    B, L = ids.shape
    if L > config.context_len:
        raise ContextOverflowError(
            f"sequence length {L} exceeds context_len {config.context_len}"
        )
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ValueError("token id outside vocabulary")

    x = ad.take_rows(params["tok_emb"], ids) + params["pos_emb"][np.arange(L)]
    mask = np.triu(np.full((L, L), _MASK_NEG), k=1)
    for i in range(config.n_layers):
        p = f"layer{i}."
        h = ad.layer_norm(x) * params[p + "ln1_g"] + params[p + "ln1_b"]
        x = x + _attention(h, params, p, config, mask)
        h = ad.layer_norm(x) * params[p + "ln2_g"] + params[p + "ln2_b"]
        h = ad.gelu(ad.matmul(h, params[p + "mlp_wi"]) + params[p + "mlp_bi"])
        x = x + ad.matmul(h, params[p + "mlp_wo"]) + params[p + "mlp_bo"]
    states = ad.layer_norm(x) * params["ln_f_g"] + params["ln_f_b"]
    logits = ad.matmul(states, params["head"])
    return logits, states


def forward(
    params: dict[str, Tensor], config: ModelConfig, ids
) -> tuple[np.ndarray, HiddenStates]:
    """Single-sequence forward: logits (L, |V|) and states (L, d) as arrays."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise ValueError("forward expects a non-empty 1-d token sequence")
    with ad.no_grad():
        logits, states = forward_batch(params, config, ids[None, :])
    return logits.data[0], HiddenStates(states.data[0], span_offset=0)


def generate_batch(
    params: dict[str, Tensor],
    config: ModelConfig,
    prefixes: list[list[int]],
    max_new: int,
    stop_at_eos: bool = True,
    limits=None,
) -> tuple[list[list[int]], list[np.ndarray]]:
    """Greedy decoding for a batch of (possibly unequal-length) prefixes.

    Each row grows at its own frontier inside a right-padded buffer, so no
    attention mask tricks are needed.  Argmax ties break toward the lower
    token id (numpy argmax convention).  ``limits`` optionally caps each
    row's generated count individually (scheduled sampling runs free for
    exactly the gold length).  Returns per-row generated ids (including the
    terminating EOS when produced) and the hidden states of those tokens.
    """
    B = len(prefixes)
    if B == 0 or max_new < 0:
        raise ValueError("need at least one prefix and max_new >= 0")
    lengths = np.array([len(p) for p in prefixes], dtype=np.int64)
    if lengths.min() < 1:
        raise ValueError("prefixes must be non-empty")
    if lengths.max() + max_new > config.context_len:
        raise ContextOverflowError(
            f"prefix {lengths.max()} + max_new {max_new} exceeds "
            f"context_len {config.context_len}"
        )
    row_caps = (
        np.full(B, max_new, dtype=np.int64)
        if limits is None
        else np.minimum(np.asarray(limits, dtype=np.int64), max_new)
    )
    if max_new == 0:
        d = config.d_model
        return [[] for _ in range(B)], [np.empty((0, d)) for _ in range(B)]

    buf = np.zeros((B, lengths.max() + max_new), dtype=np.int64)
    for b, p in enumerate(prefixes):
        buf[b, : len(p)] = p
    frontier = lengths.copy()
    counts = np.zeros(B, dtype=np.int64)
    done = counts >= row_caps

    with ad.no_grad():
        for _ in range(max_new):
            if done.all():
                break
            width = int(frontier.max())
            logits, _ = forward_batch(params, config, buf[:, :width])
            last = logits.data[np.arange(B), frontier - 1]
            nxt = last.argmax(axis=1)
            for b in range(B):
                if done[b]:
                    continue
                buf[b, frontier[b]] = nxt[b]
                frontier[b] += 1
                counts[b] += 1
                if counts[b] >= row_caps[b] or (stop_at_eos and nxt[b] == EOS):
                    done[b] = True
        # one clean pass over the final sequences to harvest states; the
        # causal mask makes these identical to the incremental states
        width = int(frontier.max())
        _, states = forward_batch(params, config, buf[:, :width])

    tokens = [buf[b, lengths[b] : frontier[b]].tolist() for b in range(B)]
    spans = [states.data[b, lengths[b] : frontier[b]] for b in range(B)]
    return tokens, spans


def generate(
    params: dict[str, Tensor],
    config: ModelConfig,
    prefix,
    max_new: int,
) -> tuple[list[int], HiddenStates | None]:
    """Greedy decode one prefix; stops at EOS or after max_new tokens."""
    prefix = list(np.asarray(prefix, dtype=np.int64))
    tokens, spans = generate_batch(params, config, [prefix], max_new)
    if not tokens[0]:
        return [], None
    return tokens[0], HiddenStates(spans[0], span_offset=len(prefix))


def pool(states: HiddenStates | np.ndarray, spec: str = "last_token") -> np.ndarray:
    """Deterministically collapse (n, d) states to a single d-vector."""
    values = states.values if isinstance(states, HiddenStates) else np.asarray(states)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ValueError("pool needs a non-empty (n, d) state matrix")
    if spec == "last_token":
        return values[-1].copy()
    if spec == "mean":
        return values.mean(axis=0)
    raise ValueError(f"unknown pooling spec {spec!r}")


# -- checkpoint io -------------------------------------------------------------


def save_checkpoint(
    path,
    params: dict[str, Tensor],
    config: ModelConfig,
    rng_state: dict | None = None,
) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": {
            "d_model": config.d_model,
            "n_layers": config.n_layers,
            "n_heads": config.n_heads,
            "context_len": config.context_len,
            "vocab_size": config.vocab_size,
            "seed": config.seed,
        },
        "rng_state": rng_state or {},
        "params": {
            name: {"shape": list(p.data.shape), "values": p.data.reshape(-1).tolist()}
            for name, p in params.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[dict[str, Tensor], ModelConfig, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointError(f"{path}: not a checkpoint document")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format_version {doc['format_version']}"
        )
    config = ModelConfig(**doc["config"])
    params = {}
    for name, entry in doc["params"].items():
        arr = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        params[name] = Tensor(arr, requires_grad=True)
    return params, config, doc.get("rng_state", {})
