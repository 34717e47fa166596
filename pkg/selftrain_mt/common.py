from __future__ import annotations

import logging
import os
import sys
import zlib
from dataclasses import dataclass
from typing import List

import numpy as np

logger = logging.getLogger("selftrain-mt")


class SelfTrainEnvVarNames:
    log_level = "SELFTRAIN_LOG_LEVEL"
    workers = "SELFTRAIN_WORKERS"  # threads used by batch translation and QE scoring
    output_dir = "SELFTRAIN_OUTPUT_DIR"

    @staticmethod
    def all() -> List[str]:
        return [
            SelfTrainEnvVarNames.log_level,
            SelfTrainEnvVarNames.workers,
            SelfTrainEnvVarNames.output_dir,
        ]


DEFAULT_SELFTRAIN_LOG_LEVEL = "INFO"
DEFAULT_SELFTRAIN_WORKERS = 1
DEFAULT_SELFTRAIN_OUTPUT_DIR = "runs"


@dataclass(slots=True, frozen=True)
class GlobalSelfTrainConfig:
    log_level: str
    workers: int
    output_dir: str

    @staticmethod
    def from_env() -> GlobalSelfTrainConfig:
        workers = DEFAULT_SELFTRAIN_WORKERS
        workers_env = os.getenv(SelfTrainEnvVarNames.workers)
        if workers_env:
            try:
                workers = max(1, int(workers_env))
            except ValueError:
                # Ignore invalid worker counts
                pass

        return GlobalSelfTrainConfig(
            log_level=os.getenv(SelfTrainEnvVarNames.log_level, DEFAULT_SELFTRAIN_LOG_LEVEL).upper(),
            workers=workers,
            output_dir=os.getenv(SelfTrainEnvVarNames.output_dir, DEFAULT_SELFTRAIN_OUTPUT_DIR),
        )

    @staticmethod
    def existing_env_vars() -> List[str]:
        """Return a list of environment variable names that are currently set."""
        result: List[str] = []
        for env_var in SelfTrainEnvVarNames.all():
            if os.getenv(env_var) is not None:
                result.append(env_var)
        return result


def configure_logging(level: str = DEFAULT_SELFTRAIN_LOG_LEVEL) -> None:
    """
    Send toolkit logs to stderr. stdout is reserved for data products (translations, records),
    so nothing diagnostic may ever be written there.
    """
    if not any(getattr(handler, "_selftrain", False) for handler in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        setattr(handler, "_selftrain", True)
        logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False


def named_rng(seed: int, stream: str) -> np.random.Generator:
    """
    Derive an independent generator for a named stream ("init", "shuffle", "dropout", ...)
    from the single experiment seed. The same (seed, stream) always yields the same sequence.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(stream.encode("utf-8"))]))


class SelfTrainError(Exception):
    """Base class of every error raised by the toolkit."""


class DimensionError(SelfTrainError, ValueError):
    pass


class DomainError(SelfTrainError, ValueError):
    pass


class TokenIndexError(SelfTrainError, IndexError):
    pass


class ContractError(SelfTrainError, ValueError):
    pass


class InputError(SelfTrainError, ValueError):
    pass


class ConfigError(SelfTrainError, ValueError):
    pass


class ScoreError(SelfTrainError, ValueError):
    pass


class CorpusError(SelfTrainError, OSError):
    pass


class TrainingDivergedError(SelfTrainError, RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"Non-finite training loss {loss} at step {step}")
        self.step = step
        self.loss = loss


class StageError(SelfTrainError, RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"Stage '{stage}' failed: {message}")
        self.stage = stage
