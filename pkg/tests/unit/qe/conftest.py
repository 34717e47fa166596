import pytest

from selftrain_mt.nmt.nmt_config import ModelConfig


@pytest.fixture
def qe_config() -> ModelConfig:
    return ModelConfig(source_vocab_size=9, target_vocab_size=8, embedding_size=4, hidden_size=5, dropout=0.0)
