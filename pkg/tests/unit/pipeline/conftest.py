from pathlib import Path
from typing import Iterator, List, Optional, Sequence
from unittest.mock import patch

import pytest

from selftrain_mt.nmt.nmt_decode import Hypothesis
from selftrain_mt.nmt.nmt_model import ParameterSet
from selftrain_mt.pipeline.pipeline_config import ExperimentConfig
from selftrain_mt.pipeline.toy_task import ToyTaskSpec, generate_toy_task
from selftrain_mt.subword.vocab import EOS_ID

TINY_TOY = ToyTaskSpec(parallel_size=60, mono_size=30, dev_size=8, test_size=8, lexicon_size=20, seed=3)

TINY_TRAINING = {
    "num_merges": 40,
    "vocab_size": 200,
    "embedding_size": 6,
    "hidden_size": 6,
    "dropout": 0.0,
    "max_decode_length": 20,
    "batch_size": 16,
    "learning_rate": 0.002,
    "eval_interval": 2,
    "max_steps": 4,
    "test_beam": 2,
}


@pytest.fixture
def toy_config(tmp_path: Path) -> ExperimentConfig:
    """A tiny toy task on disk with a config that trains for a handful of steps."""
    config_path = generate_toy_task(TINY_TOY).write(tmp_path / "toy", **TINY_TRAINING)
    return ExperimentConfig.from_file(config_path)


def copy_translate(
    sources: Sequence[Sequence[int]],
    params: ParameterSet,
    beam: Optional[int] = None,
    workers: int = 1,
    chunk_size: int = 32,
) -> List[Hypothesis]:
    """Stand-in translator: echoes the source ids, which are valid ids of the shared vocabulary."""
    return [Hypothesis((*src, EOS_ID), tuple(-0.5 - 0.01 * i for i in range(len(src) + 1))) for src in sources]


@pytest.fixture
def echo_translations() -> Iterator[None]:
    with patch("selftrain_mt.pipeline.pipeline_service.translate_batch", side_effect=copy_translate):
        yield
