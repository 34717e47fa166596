from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from selftrain_mt.common import ConfigError
from selftrain_mt.evaluation.stopping import DEFAULT_STOP_THRESHOLD, DEFAULT_STOP_WINDOW
from selftrain_mt.formatter import KeyValueFormatter

# Desk-scale defaults. The reference setup is a 2-layer, 512-unit LSTM with batch 64,
# learning rate 0.0002, dropout 0.3 and evaluation every 5,000 steps.
DEFAULT_EMBEDDING_SIZE = 32
DEFAULT_HIDDEN_SIZE = 64
DEFAULT_DROPOUT = 0.1
DEFAULT_MAX_DECODE_LENGTH = 200
DEFAULT_BATCH_SIZE = 64
DEFAULT_LEARNING_RATE = 0.002
DEFAULT_EVAL_INTERVAL = 100
DEFAULT_MAX_STEPS = 3000
DEFAULT_KEEP_LAST = 8


@dataclass(slots=True, frozen=True)
class ModelConfig:
    source_vocab_size: int
    target_vocab_size: int
    embedding_size: int = DEFAULT_EMBEDDING_SIZE
    hidden_size: int = DEFAULT_HIDDEN_SIZE
    encoder_layers: int = 1
    decoder_layers: int = 1
    # Annotations concatenate forward and backward states unless disabled.
    bidirectional: bool = True
    dropout: float = DEFAULT_DROPOUT
    # Hard cap; the per-sentence limit is 2 * source length + 5.
    max_decode_length: int = DEFAULT_MAX_DECODE_LENGTH
    attention: str = "additive"

    def __post_init__(self) -> None:
        sizes = {
            "source_vocab_size": self.source_vocab_size,
            "target_vocab_size": self.target_vocab_size,
            "embedding_size": self.embedding_size,
            "hidden_size": self.hidden_size,
            "encoder_layers": self.encoder_layers,
            "decoder_layers": self.decoder_layers,
            "max_decode_length": self.max_decode_length,
        }
        for name, value in sizes.items():
            if value <= 0:
                raise ConfigError(f"ModelConfig.{name} must be positive, got {value}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"ModelConfig.dropout must be in [0, 1), got {self.dropout}")
        if self.attention != "additive":
            raise ConfigError(f"Unsupported attention type '{self.attention}' (only 'additive')")

    @property
    def annotation_size(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)

    def to_text(self) -> str:
        return KeyValueFormatter.to_text(KeyValueFormatter.dataclass_to_dict(self))

    @staticmethod
    def from_mapping(values: Mapping[str, str]) -> ModelConfig:
        return KeyValueFormatter.dataclass_from_mapping(ModelConfig, values)


@dataclass(slots=True, frozen=True)
class TrainSettings:
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_LEARNING_RATE
    # Evaluate (and checkpoint) every eval_interval steps.
    eval_interval: int = DEFAULT_EVAL_INTERVAL
    max_steps: int = DEFAULT_MAX_STEPS
    keep_last: int = DEFAULT_KEEP_LAST
    stop_threshold: float = DEFAULT_STOP_THRESHOLD
    stop_window: int = DEFAULT_STOP_WINDOW
    # The stop rule is not consulted before this many steps of a phase.
    min_steps: int = 0

    def __post_init__(self) -> None:
        for name in ("batch_size", "eval_interval", "max_steps", "keep_last", "stop_window"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"TrainSettings.{name} must be positive, got {getattr(self, name)}")
        if self.min_steps < 0:
            raise ConfigError(f"TrainSettings.min_steps must be non-negative, got {self.min_steps}")
        if self.learning_rate < 0:
            raise ConfigError(f"TrainSettings.learning_rate must be non-negative, got {self.learning_rate}")
        if self.stop_threshold < 0:
            raise ConfigError(f"TrainSettings.stop_threshold must be non-negative, got {self.stop_threshold}")

    def to_text(self) -> str:
        return KeyValueFormatter.to_text(KeyValueFormatter.dataclass_to_dict(self))

    @staticmethod
    def from_mapping(values: Mapping[str, str]) -> TrainSettings:
        return KeyValueFormatter.dataclass_from_mapping(TrainSettings, values)
