from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

from selftrain_mt.common import ConfigError, ContractError

DEFAULT_STOP_THRESHOLD = 0.2
DEFAULT_STOP_WINDOW = 4


@dataclass(slots=True)
class StopState:
    history: List[Tuple[int, float]] = field(default_factory=list)  # (step, dev BLEU)
    threshold: float = DEFAULT_STOP_THRESHOLD
    window: int = DEFAULT_STOP_WINDOW

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ConfigError(f"Stop window must be >= 1, got {self.window}")
        if self.threshold < 0:
            raise ConfigError(f"Stop threshold must be non-negative, got {self.threshold}")

    def record(self, step: int, bleu: float) -> None:
        if self.history and step <= self.history[-1][0]:
            raise ContractError(f"Evaluation steps must increase: {step} after {self.history[-1][0]}")
        self.history.append((step, bleu))

    @staticmethod
    def from_scores(
        scores: List[float], threshold: float = DEFAULT_STOP_THRESHOLD, window: int = DEFAULT_STOP_WINDOW
    ) -> StopState:
        return StopState([(i + 1, s) for i, s in enumerate(scores)], threshold, window)


def should_stop(state: StopState) -> bool:
    """
    True once the best dev BLEU of the last `window` evaluations improves on the best of every earlier
    evaluation by less than `threshold`.
    """
    if len(state.history) < state.window + 1:
        return False
    scores = [bleu for _, bleu in state.history]
    recent_best = max(scores[-state.window :])
    earlier_best = max(scores[: -state.window])
    return recent_best - earlier_best < state.threshold
