"""Group-relative advantage normalization and the clipped surrogate objective.

Pure numeric functions: no model, no gradients. Advantages use the
population standard deviation of the group, floored to keep zero-variance
groups finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class GrpoParams:
    epsilon: float = 0.2
    beta: float = 0.01
    std_floor: float = STD_FLOOR

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.std_floor <= 0:
            raise ValueError("std_floor must be positive")


@dataclass(frozen=True)
class RolloutGroup:
    """G rollouts for one input: rewards and their normalized advantages."""

    input_id: str
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.rewards:
            raise ValueError("a rollout group needs at least one reward")
        if len(self.rewards) != len(self.advantages):
            raise ValueError("rewards and advantages must have equal length")

    @property
    def size(self) -> int:
        return len(self.rewards)

    @classmethod
    def from_rewards(cls, input_id: str, rewards, categories=(), std_floor: float = STD_FLOOR):
        rewards = tuple(float(r) for r in rewards)
        return cls(
            input_id=input_id,
            rewards=rewards,
            advantages=tuple(advantages(rewards, std_floor)),
            categories=tuple(categories),
        )


def advantages(rewards, std_floor: float = STD_FLOOR) -> list[float]:
    """A_i = (r_i - mean) / max(population std, std_floor)."""
    rewards = [float(r) for r in rewards]
    if not rewards:
        raise ValueError("rewards must be non-empty")
    n = len(rewards)
    mean = sum(rewards) / n
    var = sum((r - mean) ** 2 for r in rewards) / n
    std = math.sqrt(var)
    denom = max(std, std_floor)
    return [(r - mean) / denom for r in rewards]


def clip(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def grpo_objective(
    ratios,
    advantages_in,
    kl: float,
    params: GrpoParams | None = None,
) -> float:
    """(1/G) sum_i min(ratio_i*A_i, clip(ratio_i, 1-eps, 1+eps)*A_i) - beta*kl."""
    params = params or GrpoParams()
    ratios = [float(r) for r in ratios]
    advs = [float(a) for a in advantages_in]
    if not ratios or len(ratios) != len(advs):
        raise ValueError("ratios and advantages must be non-empty and equal length")
    lo, hi = 1.0 - params.epsilon, 1.0 + params.epsilon
    total = 0.0
    for ratio, adv in zip(ratios, advs):
        total += min(ratio * adv, clip(ratio, lo, hi) * adv)
    return total / len(ratios) - params.beta * kl
