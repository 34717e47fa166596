from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Tuple

from selftrain_mt.common import ConfigError, CorpusError
from selftrain_mt.formatter import KeyValueFormatter
from selftrain_mt.nmt.nmt_config import ModelConfig, TrainSettings
from selftrain_mt.selection.fda_selection import DEFAULT_DECAY, DEFAULT_MAX_ORDER, fraction_size
from selftrain_mt.subword.vocab import MIN_VOCAB_SIZE

METHOD_SL = "SL"
METHOD_SL_DS = "SL+DS"
METHOD_SL_QE = "SL+QE"
METHOD_SL_DS_QE = "SL+DS+QE"
METHODS = (METHOD_SL, METHOD_SL_DS, METHOD_SL_QE, METHOD_SL_DS_QE)

PATH_KEYS = (
    "parallel_source",
    "parallel_target",
    "mono_source",
    "dev_source",
    "dev_target",
    "test_source",
    "test_target",
    "output_dir",
)


def uses_selection(method: str) -> bool:
    return "DS" in method.split("+")


def uses_qe(method: str) -> bool:
    return "QE" in method.split("+")


@dataclass(slots=True, frozen=True)
class ScheduleEntry:
    n: int  # sentences added to the selected pool this iteration
    m: int  # of which the best m are kept


def parse_schedule(text: str) -> List[ScheduleEntry]:
    """'n1:m1,n2:m2' -> entries; an empty string means no schedule."""
    entries: List[ScheduleEntry] = []
    for item in filter(None, (part.strip() for part in text.split(","))):
        try:
            n_text, m_text = item.split(":")
            entries.append(ScheduleEntry(int(n_text), int(m_text)))
        except ValueError as e:
            raise ConfigError(f"Invalid schedule entry {item!r}, expected n:m") from e
    return entries


def format_schedule(entries: List[ScheduleEntry]) -> str:
    return ",".join(f"{e.n}:{e.m}" for e in entries)


@dataclass(slots=True, frozen=True)
class ExperimentConfig:
    parallel_source: str
    parallel_target: str
    mono_source: str
    dev_source: str
    dev_target: str
    test_source: str
    test_target: str
    output_dir: str = "runs"
    method: str = METHOD_SL_DS_QE
    # 0 means derived from the monolingual corpus size B: n = ceil(B / 3), m = ceil(B / 8)
    n: int = 0
    m: int = 0
    schedule: str = ""
    nmax: int = DEFAULT_MAX_ORDER
    decay: float = DEFAULT_DECAY
    num_merges: int = 2000
    vocab_size: int = 1000
    seed: int = 1
    embedding_size: int = 32
    hidden_size: int = 64
    encoder_layers: int = 1
    decoder_layers: int = 1
    bidirectional: bool = True
    dropout: float = 0.1
    max_decode_length: int = 200
    batch_size: int = 64
    learning_rate: float = 0.002
    eval_interval: int = 100
    max_steps: int = 3000
    keep_last: int = 8
    stop_threshold: float = 0.2
    stop_window: int = 4
    min_steps: int = 0
    test_beam: int = 5
    workers: int = 1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"Unknown method '{self.method}' (expected one of {', '.join(METHODS)})")
        if self.n < 0 or self.m < 0:
            raise ConfigError(f"Selection sizes must be non-negative (n={self.n}, m={self.m})")
        if self.n and self.m and self.method == METHOD_SL_DS_QE and self.n <= self.m:
            raise ConfigError(f"Selection size n must exceed the kept size m (n={self.n}, m={self.m})")
        for entry in self.schedule_entries:
            if entry.m < 1 or entry.n <= entry.m:
                raise ConfigError(f"Schedule entry {entry.n}:{entry.m} must satisfy n > m >= 1")
        minimums = {"num_merges": 0, "vocab_size": MIN_VOCAB_SIZE, "test_beam": 1, "workers": 1}
        for name, minimum in minimums.items():
            if getattr(self, name) < minimum:
                raise ConfigError(f"ExperimentConfig.{name} must be >= {minimum}, got {getattr(self, name)}")
        # fail early on model and training settings
        self.model_config(self.vocab_size, self.vocab_size)
        self.train_settings()

    @property
    def schedule_entries(self) -> List[ScheduleEntry]:
        return parse_schedule(self.schedule)

    def model_config(self, source_vocab_size: int, target_vocab_size: int) -> ModelConfig:
        return ModelConfig(
            source_vocab_size=source_vocab_size,
            target_vocab_size=target_vocab_size,
            embedding_size=self.embedding_size,
            hidden_size=self.hidden_size,
            encoder_layers=self.encoder_layers,
            decoder_layers=self.decoder_layers,
            bidirectional=self.bidirectional,
            dropout=self.dropout,
            max_decode_length=self.max_decode_length,
        )

    def train_settings(self) -> TrainSettings:
        return TrainSettings(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            eval_interval=self.eval_interval,
            max_steps=self.max_steps,
            keep_last=self.keep_last,
            stop_threshold=self.stop_threshold,
            stop_window=self.stop_window,
            min_steps=self.min_steps,
        )

    def with_overrides(self, **changes: object) -> ExperimentConfig:
        return replace(self, **changes)  # type: ignore[arg-type]

    def to_dict(self) -> Dict[str, object]:
        return KeyValueFormatter.dataclass_to_dict(self)

    def to_text(self) -> str:
        return KeyValueFormatter.to_text(self.to_dict())

    @staticmethod
    def from_mapping(values: Dict[str, str], base_dir: Path | None = None) -> ExperimentConfig:
        """Relative paths are resolved against base_dir (the directory of the config file)."""
        resolved = dict(values)
        if base_dir is not None:
            for key in PATH_KEYS:
                if key in resolved and resolved[key] and not Path(resolved[key]).is_absolute():
                    resolved[key] = str(base_dir / resolved[key])
        return KeyValueFormatter.dataclass_from_mapping(ExperimentConfig, resolved)

    @staticmethod
    def from_file(path: str | Path) -> ExperimentConfig:
        path = Path(path)
        if not path.is_file():
            raise CorpusError(f"Config file not found: {path}")
        values = KeyValueFormatter.parse(path.read_text(encoding="utf-8"), source=str(path))
        return ExperimentConfig.from_mapping(values, base_dir=path.parent)


def resolve_sizes(config: ExperimentConfig, mono_size: int) -> Tuple[int, int]:
    """(n, m) with zero entries derived from the monolingual corpus size."""
    n = config.n or fraction_size(mono_size, 1, 3)
    m = config.m or fraction_size(mono_size, 1, 8)
    return n, m
