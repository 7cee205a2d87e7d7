"""Training and evaluation engine for the three regimes.

* predictor: pooled input states -> linear head (the classic fine-tune).
* generator: teacher-forced next-token cross-entropy, decoded at eval.
* predgen:   scheduled-sampling conditioning, one forward per step, writer
  loss plus a task-adapter director loss combined by the configured rule.

One training step of predgen: (1) build the mixed target prefix at the
step's mixing probability, (2) run a single forward over
[BOS, X, SEP, mixed], (3) writer loss over the target positions against
gold, (4) director loss from the same forward's hidden states, (5) combine,
(6) update model and head jointly.  Both losses reading one forward is the
consistency rule the combiner depends on.

Evaluation is always free-running: greedy generation with no gold
conditioning, which is the regime inference actually faces.

Loss trace conventions in losses.csv: predgen rows carry the true
(L_W, L_D, combined) triple; the generator's single loss is logged as L_W
and the predictor's head loss as L_D, with combined equal to the trained
loss in both cases.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import losses as L
from .adapters import (
    ClassifierHead,
    DecodeError,
    cls_embedding,
    decode_number,
    init_classifier_head,
)
from .autodiff import Tensor
from .data import (
    DatasetSpec,
    Example,
    generate as generate_dataset,
    input_token_ids,
    max_target_len,
    target_token_ids,
)
from .losses import AdaptiveState, OrderedPenalty, default_ordered_penalty
from .model import (
    ModelConfig,
    forward_batch,
    generate_batch,
    init_params,
    save_checkpoint,
)
from .optim import Adam
from .sampling import SamplingSchedule, mixing_prob
from .vocab import EOS, PAD, VocabError, default_vocab

REGIMES = ("predictor", "generator", "predgen")

ABLATION_AXES = ("max_steps_for_sampling", "granularity", "loss_combiner")


class ConfigError(ValueError):
    """Inconsistent or invalid run configuration."""


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 3e-4
    steps: int = 1500
    batch_size: int = 16


@dataclass(frozen=True)
class TaskConfig:
    cls_spec: str = "last_generated_token"
    pool_spec: str = "last_token"
    ordered_alpha: tuple | None = None
    eps_clamp: float = 1e-8


@dataclass(frozen=True)
class RunConfig:
    regime: str
    dataset: DatasetSpec = DatasetSpec()
    model: ModelConfig = ModelConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    schedule: SamplingSchedule | None = None
    loss: str = "wdal"
    task: TaskConfig = TaskConfig()
    seed: int = 0
    eval_every: int = 0
    # test-harness overrides: pin the mixing probability for a whole run
    # ("p forced to 0/1"), or hand the generator an ordered weighting so a
    # degenerate predgen run has an exactly matching baseline
    force_mixing_prob: float | None = None
    generator_alpha: tuple | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime {self.regime!r} not in {REGIMES}")
        if self.regime == "predictor" and self.schedule is not None:
            raise ConfigError("predictor runs do not take a sampling schedule")
        if self.regime == "generator" and self.schedule is not None:
            raise ConfigError("generator runs do not take a sampling schedule")
        if self.loss not in L.COMBINERS:
            raise ConfigError(f"loss {self.loss!r} not in {L.COMBINERS}")

    def resolved_schedule(self) -> SamplingSchedule:
        return self.schedule or SamplingSchedule()


@dataclass
class Metrics:
    n: int = 0
    accuracy: float | None = None
    mse: float | None = None
    mae: float | None = None
    exact_match: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass
class TraceRow:
    step: int
    writer: float
    director: float
    combined: float


@dataclass
class RunResult:
    config: RunConfig
    params: dict
    head: ClassifierHead | None
    reg_head: dict | None
    trace: list[TraceRow]
    evals: list[dict]
    final: dict
    sampling_draws: int = 0
    sampling_generated: int = 0


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from heterogeneous parts."""
    text = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


def config_hash(run: RunConfig) -> str:
    doc = json.dumps(config_to_dict(run), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:12]


def config_to_dict(run: RunConfig) -> dict:
    doc = dataclasses.asdict(run)
    return doc


# -- encoding ------------------------------------------------------------------


@dataclass
class _Encoded:
    input_ids: list[int]
    target_ids: list[int]
    label: int
    value: float


def _encode_examples(examples: list[Example], spec: DatasetSpec) -> list[_Encoded]:
    out = []
    for ex in examples:
        tgt = target_token_ids(ex.target, spec.task, spec.decimals)
        label = int(ex.target) if spec.task == "classification" else 0
        value = float(ex.target) if spec.task != "classification" else 0.0
        out.append(_Encoded(input_token_ids(ex.input_text), tgt, label, value))
    return out


def _required_context(encoded: list[_Encoded]) -> int:
    return max(len(e.input_ids) + len(e.target_ids) for e in encoded)


def _pad_batch(rows: list[list[int]]) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


# -- shared loss pieces ----------------------------------------------------


def _writer_batch_loss(logits: Tensor, batch_rows: list[_Encoded]):
    """Mean CE over every target position in the batch, PAD excluded."""
    B = len(batch_rows)
    width = logits.shape[1]
    gold = np.zeros((B, width), dtype=np.int64)
    mask = np.zeros((B, width), dtype=np.float64)
    for b, enc in enumerate(batch_rows):
        n, m = len(enc.input_ids), len(enc.target_ids)
        gold[b, n - 1 : n + m - 1] = enc.target_ids
        mask[b, n - 1 : n + m - 1] = 1.0
    ce = ad.gather_last(ad.log_softmax(logits, axis=-1), gold) * -1.0
    return (ce * mask).sum() / float(mask.sum()), ce, mask


def _ordered_batch_loss(ce: Tensor, batch_rows: list[_Encoded], alpha: OrderedPenalty):
    """Per-example ordered-penalty sum, averaged over the batch."""
    B, width = ce.shape
    weights = np.zeros((B, width), dtype=np.float64)
    for b, enc in enumerate(batch_rows):
        n, m = len(enc.input_ids), len(enc.target_ids)
        if len(alpha) < m:
            raise ConfigError(
                f"ordered alpha has {len(alpha)} weights but target needs {m}"
            )
        weights[b, n - 1 : n + m - 1] = alpha.alpha[:m]
    return (ce * weights).sum() / float(B)


def _last_target_states(states: Tensor, batch_rows: list[_Encoded]) -> Tensor:
    rows = np.arange(len(batch_rows))
    last = np.array(
        [len(e.input_ids) + len(e.target_ids) - 1 for e in batch_rows], dtype=np.int64
    )
    return states[rows, last]


def _classifier_loss(
    states: Tensor, batch_rows: list[_Encoded], head: ClassifierHead
) -> Tensor:
    if head.cls_spec == "last_generated_token":
        cls = _last_target_states(states, batch_rows)
    else:
        B, width = states.shape[0], states.shape[1]
        mask = np.zeros((B, width, 1), dtype=np.float64)
        for b, enc in enumerate(batch_rows):
            n, m = len(enc.input_ids), len(enc.target_ids)
            mask[b, n : n + m, 0] = 1.0 / m
        cls = (states * mask).sum(axis=1)
    logits = ad.matmul(cls, head.W.transpose((1, 0)))
    labels = np.array([e.label for e in batch_rows], dtype=np.int64)
    ce = ad.gather_last(ad.log_softmax(logits, axis=-1), labels) * -1.0
    return ce.mean()


# -- training ----------------------------------------------------------------


def _pooled_vectors(states: Tensor, rows: list[_Encoded], pool_spec: str) -> Tensor:
    B = len(rows)
    if pool_spec == "last_token":
        idx = np.array([len(e.input_ids) - 1 for e in rows], dtype=np.int64)
        return states[np.arange(B), idx]
    if pool_spec == "mean":
        width = states.shape[1]
        mask = np.zeros((B, width, 1), dtype=np.float64)
        for b, enc in enumerate(rows):
            mask[b, : len(enc.input_ids), 0] = 1.0 / len(enc.input_ids)
        return (states * mask).sum(axis=1)
    raise ConfigError(f"unknown pool spec {pool_spec!r}")


def _validate_context(run: RunConfig, encoded: list[_Encoded]) -> None:
    need = _required_context(encoded)
    if need > run.model.context_len:
        raise ConfigError(
            f"dataset needs context_len >= {need}, model has {run.model.context_len}"
        )


def _mixed_target_region(
    params,
    model_cfg: ModelConfig,
    batch_rows: list[_Encoded],
    p: float,
    rng: np.random.Generator,
    granularity: str,
) -> tuple[list[list[int]], int, int]:
    """The conditioning tokens for the target region, mixed at probability p.

    Returns (per-row token lists, coins drawn, positions/sequences that used
    the model's own tokens).  The model's tokens are produced free-running
    (no EOS stop) so every row keeps its gold length.
    """
    B = len(batch_rows)
    golds = [e.target_ids for e in batch_rows]
    if granularity == "sequence":
        coins = rng.random(B) < p
        used = int(coins.sum())
        mixed = [list(g) for g in golds]
        if used:
            sel = [b for b in range(B) if coins[b]]
            prefixes = [batch_rows[b].input_ids for b in sel]
            limits = [len(golds[b]) for b in sel]
            tokens, _ = generate_batch(
                params,
                model_cfg,
                prefixes,
                max_new=max(limits),
                stop_at_eos=False,
                limits=limits,
            )
            for b, toks in zip(sel, tokens):
                mixed[b] = toks
        return mixed, B, used

    # token granularity: one coin per gold position, model tokens conditioned
    # on the prefix mixed so far
    max_m = max(len(g) for g in golds)
    coin_grid = rng.random((B, max_m)) < p
    buffers = [list(e.input_ids) for e in batch_rows]
    mixed: list[list[int]] = [[] for _ in range(B)]
    draws = 0
    used = 0
    for t in range(max_m):
        active = [b for b in range(B) if t < len(golds[b])]
        draws += len(active)
        need_model = [b for b in active if coin_grid[b, t]]
        nxt: dict[int, int] = {}
        if need_model:
            ids = _pad_batch([buffers[b] for b in need_model])
            with ad.no_grad():
                logits, _ = forward_batch(params, model_cfg, ids)
            lengths = np.array([len(buffers[b]) for b in need_model])
            last = logits.data[np.arange(len(need_model)), lengths - 1]
            choice = last.argmax(axis=1)
            nxt = {b: int(c) for b, c in zip(need_model, choice)}
        for b in active:
            tok = nxt[b] if b in nxt else golds[b][t]
            if b in nxt:
                used += 1
            mixed[b].append(tok)
            buffers[b].append(tok)
    return mixed, draws, used


def train(run: RunConfig) -> RunResult:
    """Train one configured run and return parameters, traces, and metrics."""
    if run.regime == "predictor":
        return _train_predictor(run)
    if run.regime == "generator":
        return _train_generator(run)
    return _train_predgen(run)


def _setup(run: RunConfig):
    examples = generate_dataset(run.dataset)
    spec = run.dataset
    train_rows = _encode_examples([e for e in examples if e.split == "train"], spec)
    model_cfg = replace(run.model, seed=derive_seed(run.seed, "init", run.model.seed))
    params = init_params(model_cfg)
    batch_rng = np.random.default_rng(derive_seed(run.seed, "batches"))
    return examples, train_rows, model_cfg, params, batch_rng


def _eval_points(run: RunConfig):
    if run.eval_every and run.eval_every > 0:
        return set(range(run.eval_every, run.optimizer.steps, run.eval_every))
    return set()


def train_predictor(cfg: RunConfig) -> tuple[dict, Metrics]:
    result = _train_predictor(cfg)
    return result.params, Metrics(**{k: v for k, v in result.final["test"].items()})


def _train_predictor(run: RunConfig) -> RunResult:
    examples, train_rows, model_cfg, params, batch_rng = _setup(run)
    spec = run.dataset
    _validate_context(run, train_rows)
    head = None
    reg_head = None
    trainables = dict(params)
    if spec.task == "classification":
        head = init_classifier_head(
            spec.classes, model_cfg.d_model, seed=derive_seed(run.seed, "head")
        )
        trainables["cls_head"] = head.W
    else:
        rng = np.random.default_rng(derive_seed(run.seed, "head"))
        reg_head = {
            "w": Tensor(rng.normal(0, 0.02, size=(model_cfg.d_model, 1)),
                        requires_grad=True),
            "b": Tensor(np.zeros(1), requires_grad=True),
        }
        trainables["reg_w"] = reg_head["w"]
        trainables["reg_b"] = reg_head["b"]
    opt = Adam(trainables, lr=run.optimizer.lr)

    trace: list[TraceRow] = []
    evals: list[dict] = []
    eval_at = _eval_points(run)
    result = RunResult(run, params, head, reg_head, trace, evals, {})
    B = run.optimizer.batch_size
    for step in range(run.optimizer.steps):
        idx = batch_rng.integers(0, len(train_rows), size=B)
        rows = [train_rows[i] for i in idx]
        ids = _pad_batch([r.input_ids for r in rows])
        logits, states = forward_batch(params, model_cfg, ids)
        pooled = _pooled_vectors(states, rows, run.task.pool_spec)
        if spec.task == "classification":
            cls_logits = ad.matmul(pooled, head.W.transpose((1, 0)))
            labels = np.array([r.label for r in rows], dtype=np.int64)
            ce = ad.gather_last(ad.log_softmax(cls_logits, axis=-1), labels) * -1.0
            loss = ce.mean()
        else:
            preds = (ad.matmul(pooled, reg_head["w"]) + reg_head["b"]).reshape(-1)
            targets = np.array([r.value for r in rows])
            diff = preds - targets
            loss = (diff * diff).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(TraceRow(step, 0.0, loss.item(), loss.item()))
        if step in eval_at:
            evals.append(_eval_record(result, model_cfg, step))
    result.final = _final_evals(result, model_cfg, run.optimizer.steps)
    return result


def _train_generator(run: RunConfig) -> RunResult:
    examples, train_rows, model_cfg, params, batch_rng = _setup(run)
    _validate_context(run, train_rows)
    opt = Adam(dict(params), lr=run.optimizer.lr)
    alpha = OrderedPenalty(run.generator_alpha) if run.generator_alpha else None

    trace: list[TraceRow] = []
    evals: list[dict] = []
    eval_at = _eval_points(run)
    result = RunResult(run, params, None, None, trace, evals, {})
    B = run.optimizer.batch_size
    for step in range(run.optimizer.steps):
        idx = batch_rng.integers(0, len(train_rows), size=B)
        rows = [train_rows[i] for i in idx]
        ids = _pad_batch([r.input_ids + r.target_ids for r in rows])
        logits, _ = forward_batch(params, model_cfg, ids)
        mean_ce, ce, _ = _writer_batch_loss(logits, rows)
        if alpha is not None:
            loss = _ordered_batch_loss(ce, rows, alpha)
        else:
            loss = mean_ce
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(TraceRow(step, loss.item(), 0.0, loss.item()))
        if step in eval_at:
            evals.append(_eval_record(result, model_cfg, step))
    result.final = _final_evals(result, model_cfg, run.optimizer.steps)
    return result


def train_generator(cfg: RunConfig) -> tuple[dict, Metrics]:
    result = _train_generator(cfg)
    return result.params, Metrics(**{k: v for k, v in result.final["test"].items()})


def _train_predgen(run: RunConfig) -> RunResult:
    examples, train_rows, model_cfg, params, batch_rng = _setup(run)
    spec = run.dataset
    _validate_context(run, train_rows)
    schedule = run.resolved_schedule()
    schedule = replace(
        schedule, seed=derive_seed(run.seed, "sampling", schedule.seed)
    )
    head = None
    trainables = dict(params)
    if spec.task == "classification":
        head = init_classifier_head(
            spec.classes,
            model_cfg.d_model,
            seed=derive_seed(run.seed, "head"),
            cls_spec=run.task.cls_spec,
        )
        trainables["cls_head"] = head.W
    alpha = (
        OrderedPenalty(run.task.ordered_alpha)
        if run.task.ordered_alpha
        else default_ordered_penalty(max_target_len(examples, spec.task, spec.decimals))
    )
    opt = Adam(trainables, lr=run.optimizer.lr)
    adaptive_state = AdaptiveState()

    trace: list[TraceRow] = []
    evals: list[dict] = []
    eval_at = _eval_points(run)
    result = RunResult(run, params, head, None, trace, evals, {})
    B = run.optimizer.batch_size
    for step in range(run.optimizer.steps):
        idx = batch_rng.integers(0, len(train_rows), size=B)
        rows = [train_rows[i] for i in idx]
        p = (
            run.force_mixing_prob
            if run.force_mixing_prob is not None
            else mixing_prob(schedule, step)
        )
        rng = schedule.rng_for_step(step)
        mixed, draws, used = (
            ([list(r.target_ids) for r in rows], B, 0)
            if p == 0.0
            else _mixed_target_region(
                params, model_cfg, rows, p, rng, schedule.granularity
            )
        )
        result.sampling_draws += draws
        result.sampling_generated += used

        ids = _pad_batch(
            [r.input_ids + m for r, m in zip(rows, mixed)]
        )
        logits, states = forward_batch(params, model_cfg, ids)
        loss_writer, ce, _ = _writer_batch_loss(logits, rows)
        if spec.task == "classification":
            loss_director = _classifier_loss(states, rows, head)
        else:
            loss_director = _ordered_batch_loss(ce, rows, alpha)
        combined = L.combine(
            run.loss,
            loss_writer,
            loss_director,
            adaptive_state=adaptive_state,
            eps=run.task.eps_clamp,
        )
        opt.zero_grad()
        combined.backward()
        opt.step()
        trace.append(
            TraceRow(step, loss_writer.item(), loss_director.item(), combined.item())
        )
        if step in eval_at:
            evals.append(_eval_record(result, model_cfg, step))
    result.final = _final_evals(result, model_cfg, run.optimizer.steps)
    return result


def train_predgen(cfg: RunConfig) -> tuple[dict, Metrics]:
    result = _train_predgen(cfg)
    return result.params, Metrics(**{k: v for k, v in result.final["test"].items()})


# -- evaluation ----------------------------------------------------------------


def _worst_case(spec: DatasetSpec) -> tuple[float, float]:
    lo, hi = spec.value_range
    span = float(hi - lo)
    return span * span, span


def evaluate(
    params,
    run: RunConfig,
    split: str,
    head: ClassifierHead | None = None,
    reg_head: dict | None = None,
    model_cfg: ModelConfig | None = None,
) -> Metrics:
    """Free-running metrics on one split of the run's dataset."""
    spec = run.dataset
    examples = [e for e in generate_dataset(spec) if e.split == split]
    encoded = _encode_examples(examples, spec)
    model_cfg = model_cfg or run.model
    vocab = default_vocab()

    if run.regime == "predictor":
        ids = _pad_batch([r.input_ids for r in encoded])
        with ad.no_grad():
            _, states = forward_batch(params, model_cfg, ids)
            pooled = _pooled_vectors(states, encoded, run.task.pool_spec)
            if spec.task == "classification":
                logits = ad.matmul(pooled, head.W.transpose((1, 0))).data
                preds = logits.argmax(axis=1)
                labels = np.array([r.label for r in encoded])
                return Metrics(n=len(encoded),
                               accuracy=float((preds == labels).mean()))
            preds = (ad.matmul(pooled, reg_head["w"]) + reg_head["b"]).data.reshape(-1)
        targets = np.array([r.value for r in encoded])
        err = preds - targets
        metrics = Metrics(
            n=len(encoded),
            mse=float((err**2).mean()),
            mae=float(np.abs(err).mean()),
        )
        if spec.task == "arithmetic":
            metrics.exact_match = float((np.abs(err) < 1e-4).mean())
        return metrics

    # generative regimes: greedy decode, exposure-realistic
    m = max_target_len(generate_dataset(spec), spec.task, spec.decimals)
    prefixes = [r.input_ids for r in encoded]
    tokens, spans = generate_batch(params, model_cfg, prefixes, max_new=m + 2)

    if spec.task == "classification":
        labels = np.array([r.label for r in encoded])
        if run.regime == "predgen":
            preds = []
            for span in spans:
                v = cls_embedding(span, head.cls_spec)
                preds.append(int(np.argmax(head.W.data @ v)))
            preds = np.array(preds)
        else:
            preds = []
            for toks in tokens:
                body = [t for t in toks if t != EOS]
                try:
                    preds.append(int(vocab.decode(body)))
                except (VocabError, ValueError):
                    preds.append(-1)  # malformed label scores as wrong
            preds = np.array(preds)
        return Metrics(n=len(encoded), accuracy=float((preds == labels).mean()))

    worst_sq, worst_abs = _worst_case(spec)
    sqs, abss, exact = [], [], []
    for r, toks in zip(encoded, tokens):
        try:
            value = decode_number(toks, vocab).value
            err = value - r.value
            sqs.append(err * err)
            abss.append(abs(err))
            exact.append(1.0 if abs(err) < 1e-4 else 0.0)
        except DecodeError:
            sqs.append(worst_sq)
            abss.append(worst_abs)
            exact.append(0.0)
    metrics = Metrics(
        n=len(encoded), mse=float(np.mean(sqs)), mae=float(np.mean(abss))
    )
    if spec.task == "arithmetic":
        metrics.exact_match = float(np.mean(exact))
    return metrics


def _eval_record(result: RunResult, model_cfg, step: int) -> dict:
    rec = {"step": step}
    for split in ("train", "test"):
        m = evaluate(
            result.params,
            result.config,
            split,
            head=result.head,
            reg_head=result.reg_head,
            model_cfg=model_cfg,
        )
        rec[split] = m.to_dict()
    return rec


def _final_evals(result: RunResult, model_cfg, steps: int) -> dict:
    rec = _eval_record(result, model_cfg, steps)
    result.evals.append(rec)
    return {"train": rec["train"], "test": rec["test"]}


# -- ablation driver -----------------------------------------------------------


def _with_axis_value(run: RunConfig, axis: str, value) -> RunConfig:
    if axis == "max_steps_for_sampling":
        schedule = replace(run.resolved_schedule(), max_steps_for_sampling=int(value))
        return replace(run, schedule=schedule)
    if axis == "granularity":
        schedule = replace(run.resolved_schedule(), granularity=str(value))
        return replace(run, schedule=schedule)
    if axis == "loss_combiner":
        return replace(run, loss=str(value))
    raise ConfigError(f"unknown ablation axis {axis!r}; expected {ABLATION_AXES}")


def default_axis_values(axis: str):
    if axis == "max_steps_for_sampling":
        return [50, 1000, 7000]
    if axis == "granularity":
        return list(("sequence", "token"))
    if axis == "loss_combiner":
        return list(L.COMBINERS)
    raise ConfigError(f"unknown ablation axis {axis!r}; expected {ABLATION_AXES}")


def ablate(run: RunConfig, axis: str, values=None) -> list[dict]:
    """Matched-seed runs across one axis; returns one comparison row per value."""
    values = list(values) if values is not None else default_axis_values(axis)
    configs = [_with_axis_value(run, axis, v) for v in values]
    workers = max(1, int(os.environ.get("PREDGEN_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(train, configs))
    else:
        results = [train(cfg) for cfg in configs]
    rows = []
    for value, res in zip(values, results):
        row = {"axis": axis, "value": value}
        row.update({f"test_{k}": v for k, v in res.final["test"].items()})
        rows.append(row)
    return rows


# -- artifacts -----------------------------------------------------------------


def run_and_save(run: RunConfig, out_dir) -> Path:
    """Execute a run and write its artifact directory; returns the path."""
    out_dir = Path(out_dir)
    run_dir = out_dir / f"{run.dataset.name}-{run.regime}-{config_hash(run)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    result = train(run)

    with open(run_dir / "config.json", "w") as fh:
        json.dump(config_to_dict(run), fh, indent=2, sort_keys=True)
    with open(run_dir / "losses.csv", "w") as fh:
        fh.write("step,L_W,L_D,combined\n")
        for row in result.trace:
            fh.write(
                f"{row.step},{row.writer!r},{row.director!r},{row.combined!r}\n"
            )
    with open(run_dir / "metrics.jsonl", "w") as fh:
        for rec in result.evals:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(run_dir / "metrics.json", "w") as fh:
        json.dump(result.final, fh, indent=2, sort_keys=True)
    model_cfg = replace(
        run.model, seed=derive_seed(run.seed, "init", run.model.seed)
    )
    save_checkpoint(
        run_dir / "checkpoint.json",
        result.params,
        model_cfg,
        rng_state={"run_seed": run.seed},
    )
    return run_dir
