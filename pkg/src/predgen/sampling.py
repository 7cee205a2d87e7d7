"""Scheduled sampling: when training conditions on its own generations.

The mixing probability p ramps linearly from 0 to 1 over the first
``max_steps_for_sampling`` training steps and plateaus at 1 afterwards.
Mixing happens either for whole sequences (one coin per sequence) or per
token (one coin per position, with the model's token conditioned on the
prefix mixed so far).  Sampled tokens are discrete ids: no gradient ever
flows through the choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

GRANULARITIES = ("sequence", "token")


@dataclass(frozen=True)
class SamplingSchedule:
    max_steps_for_sampling: int = 1000
    granularity: str = "sequence"
    seed: int = 0

    def __post_init__(self):
        if self.max_steps_for_sampling < 1:
            raise ValueError("max_steps_for_sampling must be a positive int")
        if self.granularity not in GRANULARITIES:
            raise ValueError(
                f"granularity {self.granularity!r} not in {GRANULARITIES}"
            )

    def rng_for_step(self, step: int, worker_id: int = 0) -> np.random.Generator:
        """Isolated, reproducible stream for one (worker, step) pair."""
        return np.random.default_rng(
            np.random.SeedSequence((self.seed, worker_id, step))
        )


def mixing_prob(schedule: SamplingSchedule, step: int) -> float:
    """Linear ramp min(1, step / T); 0 at step 0, 1 from step T onwards."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return min(1.0, step / schedule.max_steps_for_sampling)


def mix_sequence(
    gold: Sequence[int],
    generated: Sequence[int],
    p: float,
    rng: np.random.Generator,
) -> list[int]:
    """Whole-sequence choice: gold with probability 1-p, generated with p."""
    use_generated = rng.random() < p
    return list(generated if use_generated else gold)


def mix_token(
    gold: Sequence[int],
    generated_prefix_provider: Callable[[list[int]], int],
    p: float,
    rng: np.random.Generator,
) -> list[int]:
    """Per-position choice over the gold positions.

    With probability p a position holds the model's own token, produced by
    the provider from the mixed prefix built so far; otherwise the gold
    token.  With p = 1 this is exactly free-running greedy generation for
    len(gold) steps.
    """
    mixed: list[int] = []
    for t in range(len(gold)):
        if rng.random() < p:
            mixed.append(int(generated_prefix_provider(mixed)))
        else:
            mixed.append(int(gold[t]))
    return mixed
