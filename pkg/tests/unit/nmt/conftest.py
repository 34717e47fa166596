from typing import List, Tuple

import numpy as np
import pytest

from selftrain_mt.nmt.nmt_config import ModelConfig, TrainSettings
from selftrain_mt.nmt.nmt_model import ParameterSet, init_parameters, parameter_shapes


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Small enough for finite differences and exhaustive search."""
    return ModelConfig(
        source_vocab_size=9,
        target_vocab_size=7,
        embedding_size=4,
        hidden_size=5,
        dropout=0.0,
        max_decode_length=12,
    )


@pytest.fixture
def tiny_params(tiny_config: ModelConfig) -> ParameterSet:
    return init_parameters(tiny_config, np.random.default_rng(0))


def spread_params(config: ModelConfig, seed: int, scale: float = 0.8) -> ParameterSet:
    """Random parameters with peaked output distributions, so decoding has no near-ties."""
    rng = np.random.default_rng(seed)
    return ParameterSet.from_arrays(
        config, {name: rng.normal(scale=scale, size=shape) for name, shape in parameter_shapes(config).items()}
    )


@pytest.fixture
def copy_pairs() -> List[Tuple[List[int], List[int]]]:
    """50 copy-task pairs over ids 4..8."""
    rng = np.random.default_rng(21)
    pairs = []
    for _ in range(50):
        sentence = [int(t) for t in rng.integers(4, 9, size=int(rng.integers(2, 5)))]
        pairs.append((sentence, list(sentence)))
    return pairs


@pytest.fixture
def quick_settings() -> TrainSettings:
    return TrainSettings(batch_size=10, learning_rate=0.01, eval_interval=5, max_steps=10, keep_last=2)
