from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from selftrain_mt.common import InputError, TrainingDivergedError, logger, named_rng
from selftrain_mt.evaluation.stopping import StopState, should_stop
from selftrain_mt.nmt.nmt_checkpoint import Checkpoint
from selftrain_mt.nmt.nmt_config import ModelConfig, TrainSettings
from selftrain_mt.nmt.nmt_model import EncodedPair, ParameterSet, init_parameters, make_batch, teacher_forced_loss
from selftrain_mt.tensor.tensor_autodiff import Tape
from selftrain_mt.tensor.tensor_optim import AdamState, adam_step

# Called with the current parameters at every evaluation; returns dev BLEU.
Evaluator = Callable[[ParameterSet], float]

PHASE_KEY = "phase"
PHASE_BOUNDARY_KEY = "phase_boundary"
DEV_BLEU_KEY = "dev_bleu"


@dataclass(eq=False)
class TrainingRun:
    checkpoints: List[Checkpoint]
    history: List[Tuple[int, float]]  # (step, dev BLEU)
    losses: List[Tuple[int, float]]  # (step, mean training loss since the previous checkpoint)
    params: ParameterSet
    final_step: int
    phase_boundary: Optional[int] = None
    stopped_early: bool = False
    seconds: float = field(default=0.0, compare=False)

    def phase_checkpoints(self, phase: str) -> List[Checkpoint]:
        return [c for c in self.checkpoints if c.metadata.get(PHASE_KEY) == phase]

    @property
    def best_checkpoint(self) -> Optional[Checkpoint]:
        """Checkpoint with the highest dev BLEU, earliest step on ties."""
        scored = [c for c in self.checkpoints if DEV_BLEU_KEY in c.metadata]
        if not scored:
            return None
        return max(scored, key=lambda c: (float(c.metadata[DEV_BLEU_KEY]), -c.step))


def _batches(pairs: Sequence[EncodedPair], batch_size: int, rng: np.random.Generator) -> Iterator[List[EncodedPair]]:
    """Endless stream of batches; every epoch visits the pairs in a fresh random order."""
    while True:
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), batch_size):
            yield [pairs[int(i)] for i in order[start : start + batch_size]]


def train(
    pairs: Sequence[EncodedPair],
    config: ModelConfig,
    settings: TrainSettings,
    seed: int,
    evaluator: Optional[Evaluator] = None,
    params: Optional[ParameterSet] = None,
    start_step: int = 0,
    phase: str = "train",
) -> TrainingRun:
    """
    Teacher-forced cross-entropy training with Adam. A checkpoint is taken every `eval_interval` steps and
    after the last step; with an evaluator, training stops as soon as the dev-BLEU stop rule fires.
    Passing `params` continues from them (with fresh optimizer moments); otherwise parameters are
    initialized from the seed.
    """
    if not pairs:
        raise InputError(f"No training pairs for phase '{phase}'")
    params = params if params is not None else init_parameters(config, named_rng(seed, "init"))
    batches = _batches(pairs, settings.batch_size, named_rng(seed, f"shuffle.{phase}"))
    dropout_rng = named_rng(seed, f"dropout.{phase}") if config.dropout > 0 else None
    optimizer = AdamState.fresh(params.tensors, settings.learning_rate)
    stop_state = StopState(threshold=settings.stop_threshold, window=settings.stop_window)

    checkpoints: List[Checkpoint] = []
    losses: List[Tuple[int, float]] = []
    interval_losses: List[float] = []
    step = start_step
    stopped_early = False
    started = time.perf_counter()
    logger.info(
        f"Training phase '{phase}' on {len(pairs)} pairs from step {start_step} (max {settings.max_steps} steps)"
    )

    for local_step in range(1, settings.max_steps + 1):
        tape = Tape()
        loss = teacher_forced_loss(tape, params, make_batch(next(batches)), dropout_rng)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDivergedError(step + 1, value)
        grads = tape.backward(loss, params.tensors)
        _, optimizer = adam_step(params.tensors, grads, optimizer)
        step += 1
        interval_losses.append(value)

        if local_step % settings.eval_interval != 0 and local_step != settings.max_steps:
            continue

        mean_loss = float(np.mean(interval_losses))
        losses.append((step, mean_loss))
        interval_losses = []
        metadata = {PHASE_KEY: phase, "loss": repr(mean_loss)}
        message = f"[{phase}] step {step}: loss {mean_loss:.4f}"
        if evaluator is not None:
            bleu = float(evaluator(params))
            stop_state.record(step, bleu)
            metadata[DEV_BLEU_KEY] = repr(bleu)
            message += f", dev BLEU {bleu:.2f}"
        checkpoints.append(Checkpoint.from_parameters(params, step, metadata))
        logger.info(message)

        if evaluator is not None and local_step >= settings.min_steps and should_stop(stop_state):
            stopped_early = True
            logger.info(f"[{phase}] stop rule fired at step {step}")
            break

    return TrainingRun(
        checkpoints=checkpoints,
        history=list(stop_state.history),
        losses=losses,
        params=params,
        final_step=step,
        stopped_early=stopped_early,
        seconds=time.perf_counter() - started,
    )


def pretrain_finetune(
    synthetic: Sequence[EncodedPair],
    authentic: Sequence[EncodedPair],
    config: ModelConfig,
    settings: TrainSettings,
    seed: int,
    evaluator: Optional[Evaluator] = None,
) -> TrainingRun:
    """Pre-train on synthetic pairs, then fine-tune the same parameters on authentic pairs."""
    if not synthetic or not authentic:
        raise InputError(
            f"Pre-train/fine-tune needs both data sets (synthetic {len(synthetic)}, authentic {len(authentic)})"
        )
    pretrain = train(synthetic, config, settings, seed, evaluator, phase="pretrain")
    boundary = pretrain.final_step
    finetune = train(
        authentic, config, settings, seed, evaluator, params=pretrain.params, start_step=boundary, phase="finetune"
    )
    checkpoints = pretrain.checkpoints + finetune.checkpoints
    for checkpoint in checkpoints:
        checkpoint.metadata[PHASE_BOUNDARY_KEY] = str(boundary)
    return TrainingRun(
        checkpoints=checkpoints,
        history=pretrain.history + finetune.history,
        losses=pretrain.losses + finetune.losses,
        params=finetune.params,
        final_step=finetune.final_step,
        phase_boundary=boundary,
        stopped_early=finetune.stopped_early,
        seconds=pretrain.seconds + finetune.seconds,
    )
