"""Mutual-information machinery built on a Donsker-Varadhan lower bound.

A small two-layer statistics network T(y, z) is trained to maximize

    E_joint[T] - log E_marginal[exp(T)]

with marginal pairs formed by shuffling z within each batch.  The supremum
of that objective over T is I(Y; Z), so the trained value is a lower-bound
estimate (in nats; small negative values are estimator noise).

Full-sequence hidden states are compressed per sequence to k rows of
Sigma V^T before estimation, mirroring how pooled representations compress
to a single vector; comparing the two estimates is the data-processing
check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import DatasetSpec, generate, input_token_ids, max_target_len
from .linalg import truncated_svd
from .model import ModelConfig, forward, generate_batch, pool
from .optim import Adam


@dataclass(frozen=True)
class MineConfig:
    hidden: int = 128
    epochs: int = 200
    batch_size: int = 256
    lr: float = 1e-4
    seed: int = 0
    eval_batches: int = 10
    min_pairs: int = 512


@dataclass
class MIEstimate:
    nats: float
    n_samples: int
    epochs: int
    seed: int


def reduce_states(z, k: int) -> np.ndarray:
    """Per-sequence compression of (n, d) states to the top-k score rows.

    Sequences shorter than k rows are zero-padded in n before reduction.
    """
    values = getattr(z, "values", z)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ValueError("states must be a non-empty (n, d) matrix")
    n, d = values.shape
    if not 1 <= k <= d:
        raise ValueError(f"k={k} outside [1, d={d}]")
    if n < k:
        values = np.vstack([values, np.zeros((k - n, d))])
    return truncated_svd(values, k)


def _prepare_pairs(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2:
        ys, zs = pairs
    else:
        ys = [p[0] for p in pairs]
        zs = [p[1] for p in pairs]
    y = np.asarray(ys, dtype=np.float64)
    z = np.asarray(zs, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if z.ndim == 1:
        z = z[:, None]
    if z.ndim > 2:
        z = z.reshape(len(z), -1)
    if y.ndim > 2:
        y = y.reshape(len(y), -1)
    return y, z


def _standardize(x: np.ndarray) -> np.ndarray:
    # deterministic per-column rescaling; leaves MI unchanged, helps training
    mu = x.mean(axis=0, keepdims=True)
    sd = x.std(axis=0, keepdims=True)
    sd[sd < 1e-12] = 1.0
    return (x - mu) / sd


class MineEstimator:
    """Two-layer tanh statistics network plus its optimizer state."""

    def __init__(self, dim_y: int, dim_z: int, cfg: MineConfig):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x313E)))
        din, h = dim_y + dim_z, cfg.hidden
        self.params = {
            "w1": Tensor(rng.normal(0, 1 / np.sqrt(din), (din, h)), requires_grad=True),
            "b1": Tensor(np.zeros(h), requires_grad=True),
            "w2": Tensor(rng.normal(0, 1 / np.sqrt(h), (h, 1)), requires_grad=True),
            "b2": Tensor(np.zeros(1), requires_grad=True),
        }
        self.opt = Adam(self.params, lr=cfg.lr)
        self.rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xDA7A)))

    def statistic(self, yz: "np.ndarray | Tensor") -> Tensor:
        x = yz if isinstance(yz, Tensor) else Tensor(yz)
        h = ad.tanh(ad.matmul(x, self.params["w1"]) + self.params["b1"])
        return (ad.matmul(h, self.params["w2"]) + self.params["b2"]).reshape(-1)

    def dv_objective(self, y: np.ndarray, z: np.ndarray, perm: np.ndarray) -> Tensor:
        t_joint = self.statistic(np.hstack([y, z]))
        t_marg = self.statistic(np.hstack([y, z[perm]]))
        # stable log-mean-exp; the shift is a constant w.r.t. parameters
        shift = float(t_marg.data.max())
        log_mean = ad.log(ad.exp(t_marg - shift).mean()) + shift
        return t_joint.mean() - log_mean

    def fit(self, y: np.ndarray, z: np.ndarray) -> float:
        n = len(y)
        bs = self.cfg.batch_size
        for _ in range(self.cfg.epochs):
            order = self.rng.permutation(n)
            for lo in range(0, n - bs + 1, bs):
                idx = order[lo : lo + bs]
                perm = self.rng.permutation(len(idx))
                obj = self.dv_objective(y[idx], z[idx], perm)
                self.opt.zero_grad()
                (obj * -1.0).backward()
                self.opt.step()
        # final estimate: fresh evaluation batches, no gradient
        vals = []
        with ad.no_grad():
            for _ in range(self.cfg.eval_batches):
                idx = self.rng.permutation(n)[:bs]
                perm = self.rng.permutation(len(idx))
                vals.append(self.dv_objective(y[idx], z[idx], perm).item())
        return float(np.mean(vals))


def mine_estimate(pairs, cfg: MineConfig | None = None) -> MIEstimate:
    """Train the statistics network and return the lower-bound estimate."""
    cfg = cfg or MineConfig()
    y, z = _prepare_pairs(pairs)
    n = len(y)
    if n != len(z):
        raise ValueError("y and z must pair up one-to-one")
    if n < cfg.min_pairs:
        raise ValueError(f"need at least {cfg.min_pairs} pairs, got {n}")
    if n < cfg.batch_size:
        raise ValueError(f"fewer pairs ({n}) than batch size ({cfg.batch_size})")
    y = _standardize(y)
    z = _standardize(z)
    est = MineEstimator(y.shape[1], z.shape[1], cfg)
    nats = est.fit(y, z)
    return MIEstimate(nats=nats, n_samples=n, epochs=cfg.epochs, seed=cfg.seed)


# -- representation extraction ---------------------------------------------


def _target_repr(example, spec: DatasetSpec) -> np.ndarray:
    if spec.task == "classification":
        onehot = np.zeros(spec.classes)
        onehot[int(example.target)] = 1.0
        return onehot
    return np.array([float(example.target)])


def pooled_representations(
    params, config: ModelConfig, examples, pool_spec: str = "last_token"
) -> np.ndarray:
    """One pooled d-vector per example from the input span's states."""
    out = []
    for ex in examples:
        ids = input_token_ids(ex.input_text)
        _, states = forward(params, config, ids)
        out.append(pool(states, pool_spec))
    return np.asarray(out)


def reduced_representations(
    params, config: ModelConfig, examples, k: int, max_new: int
) -> np.ndarray:
    """Per example: greedy-generate, then compress the full-sequence states."""
    out = []
    prefixes = [input_token_ids(ex.input_text) for ex in examples]
    tokens, _ = generate_batch(params, config, prefixes, max_new)
    for prefix, gen in zip(prefixes, tokens):
        _, states = forward(params, config, prefix + gen)
        out.append(reduce_states(states.values, k).reshape(-1))
    return np.asarray(out)


def dpi_compare(
    model_predictor,
    model_generative,
    spec: DatasetSpec,
    k: int = 2,
    cfg: MineConfig | None = None,
    pool_spec: str = "last_token",
) -> tuple[MIEstimate, MIEstimate]:
    """Estimate I(Y; pooled) for the predictor vs I(Y; reduced) for the
    generative model over all train+test examples of the dataset."""
    cfg = cfg or MineConfig()
    examples = generate(spec)
    y = np.asarray([_target_repr(ex, spec) for ex in examples])

    pred_params, pred_config = model_predictor
    gen_params, gen_config = model_generative
    z_pooled = pooled_representations(pred_params, pred_config, examples, pool_spec)
    m = max_target_len(examples, spec.task, spec.decimals)
    z_reduced = reduced_representations(gen_params, gen_config, examples, k, m)

    i_pooled = mine_estimate((y, z_pooled), cfg)
    i_full = mine_estimate((y, z_reduced), cfg)
    return i_pooled, i_full


def token_mi_matrix(
    model,
    spec: DatasetSpec,
    target_position: int = 0,
    cfg: MineConfig | None = None,
) -> np.ndarray:
    """Per-input-position MI with the predicted token's hidden state.

    Positions are analyzed up to the shortest input in the dataset.  Returns
    an (n_positions, 1) column of nats.
    """
    cfg = cfg or MineConfig()
    params, config = model
    examples = generate(spec)
    prefixes = [input_token_ids(ex.input_text) for ex in examples]
    n_pos = min(len(p) for p in prefixes)
    m = max_target_len(examples, spec.task, spec.decimals)

    input_states = []
    target_states = []
    tokens, spans = generate_batch(params, config, prefixes, max(m, target_position + 1))
    for prefix, span in zip(prefixes, spans):
        _, states = forward(params, config, prefix)
        input_states.append(states.values[:n_pos])
        pos = min(target_position, len(span) - 1)
        target_states.append(span[pos])
    input_states = np.asarray(input_states)  # (N, n_pos, d)
    target_states = np.asarray(target_states)  # (N, d)

    out = np.zeros((n_pos, 1))
    for i in range(n_pos):
        est = mine_estimate((target_states, input_states[:, i, :]), cfg)
        out[i, 0] = est.nats
    return out


# -- csv emission ------------------------------------------------------------


def write_mi_report(path, rows: list[dict]) -> None:
    """rows: dicts with dataset, representation, k, seed, nats."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["dataset", "representation", "k", "seed", "nats"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_token_mi(path, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "nats"])
        for i, v in enumerate(np.asarray(values).reshape(-1)):
            writer.writerow([i, f"{v:.6f}"])
