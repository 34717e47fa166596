from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Tuple

import numpy as np

from selftrain_mt.common import ConfigError, ContractError, DimensionError
from selftrain_mt.tensor.tensor_autodiff import Array, Tensor

DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPSILON = 1e-8


@dataclass(slots=True, frozen=True)
class AdamState:
    first_moment: Dict[str, Array]
    second_moment: Dict[str, Array]
    step_count: int
    learning_rate: float
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    epsilon: float = DEFAULT_EPSILON

    @staticmethod
    def fresh(params: Mapping[str, Tensor], learning_rate: float) -> AdamState:
        """Zeroed moments for every parameter."""
        if learning_rate < 0:
            raise ConfigError(f"Learning rate must be non-negative, got {learning_rate}")
        return AdamState(
            first_moment={name: np.zeros_like(p.data) for name, p in params.items()},
            second_moment={name: np.zeros_like(p.data) for name, p in params.items()},
            step_count=0,
            learning_rate=learning_rate,
        )


def adam_step(
    params: Mapping[str, Tensor], grads: Mapping[str, Array], state: AdamState
) -> Tuple[Mapping[str, Tensor], AdamState]:
    """
    One bias-corrected Adam update. Parameter tensors are updated in place (their data arrays are
    replaced) and returned together with the new optimizer state.
    """
    for name, param in params.items():
        if name not in grads or name not in state.first_moment:
            raise ContractError(f"No gradient or optimizer moment for parameter '{name}'")
        if grads[name].shape != param.data.shape or state.first_moment[name].shape != param.data.shape:
            raise DimensionError(
                f"Adam shape mismatch for '{name}': parameter {list(param.data.shape)}, "
                f"gradient {list(grads[name].shape)}, moment {list(state.first_moment[name].shape)}"
            )

    step = state.step_count + 1
    first: Dict[str, Array] = {}
    second: Dict[str, Array] = {}
    correction1 = 1.0 - state.beta1**step
    correction2 = 1.0 - state.beta2**step
    for name, param in params.items():
        g = grads[name]
        m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        param.data = param.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        first[name] = m
        second[name] = v

    new_state = AdamState(
        first_moment=first,
        second_moment=second,
        step_count=step,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return params, new_state
