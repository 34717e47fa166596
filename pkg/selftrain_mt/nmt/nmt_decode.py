from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from selftrain_mt.common import ConfigError, InputError, logger
from selftrain_mt.nmt.nmt_config import ModelConfig
from selftrain_mt.nmt.nmt_model import (
    DecoderState,
    EncoderContext,
    ParameterSet,
    decoder_step,
    init_decoder_state,
    prepare_context,
)
from selftrain_mt.subword.vocab import BOS_ID, EOS_ID, PAD_ID
from selftrain_mt.tensor.tensor_autodiff import Array, Tape, Tensor

DEFAULT_TRANSLATE_CHUNK = 32


@dataclass(slots=True, frozen=True)
class Hypothesis:
    tokens: Tuple[int, ...]  # ends in EOS unless the length limit was hit
    token_log_probs: Tuple[float, ...]
    score: float = field(init=False)

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.token_log_probs):
            raise InputError(f"{len(self.tokens)} tokens but {len(self.token_log_probs)} log-probabilities")
        object.__setattr__(self, "score", float(sum(self.token_log_probs)))

    @property
    def normalized_score(self) -> float:
        return self.score / len(self.tokens) if self.tokens else 0.0

    @property
    def content_ids(self) -> List[int]:
        """Tokens without the terminating EOS."""
        return list(self.tokens[:-1]) if self.tokens and self.tokens[-1] == EOS_ID else list(self.tokens)


def decode_limit(source_length: int, config: ModelConfig) -> int:
    return min(config.max_decode_length, 2 * source_length + 5)


def _selectable(log_probs: Array) -> Array:
    """Log-probabilities with PAD and BOS ruled out; reported values stay untouched."""
    masked = log_probs.copy()
    masked[..., PAD_ID] = -np.inf
    masked[..., BOS_ID] = -np.inf
    return masked


def _check_sources(sources: Sequence[Sequence[int]]) -> None:
    for idx, src in enumerate(sources):
        if len(src) == 0:
            raise InputError(f"Cannot translate an empty source sentence (position {idx})")


def _greedy_batch(sources: Sequence[Sequence[int]], params: ParameterSet) -> List[Hypothesis]:
    size = len(sources)
    width = max(len(src) for src in sources)
    source = np.full((size, width), PAD_ID, dtype=np.int64)
    for row, src in enumerate(sources):
        source[row, : len(src)] = src
    mask = np.arange(width)[None, :] < np.array([len(src) for src in sources])[:, None]

    tape = Tape(record=False)
    context = prepare_context(tape, params, source, mask)
    state = init_decoder_state(tape, params, context)
    limits = [decode_limit(len(src), params.config) for src in sources]
    tokens: List[List[int]] = [[] for _ in range(size)]
    log_probs: List[List[float]] = [[] for _ in range(size)]
    done = [False] * size
    prev = np.full(size, BOS_ID, dtype=np.int64)

    for _ in range(max(limits)):
        out = decoder_step(tape, params, prev, state, context)
        choice = np.argmax(_selectable(out.log_probs.data), axis=-1)
        for row in range(size):
            if done[row]:
                continue
            token = int(choice[row])
            tokens[row].append(token)
            log_probs[row].append(float(out.log_probs.data[row, token]))
            done[row] = token == EOS_ID or len(tokens[row]) >= limits[row]
        if all(done):
            break
        prev = choice.astype(np.int64)
        state = out.state

    return [Hypothesis(tuple(t), tuple(lp)) for t, lp in zip(tokens, log_probs)]


def _tile_context(context: EncoderContext, rows: int) -> EncoderContext:
    return EncoderContext(
        annotations=Tensor(np.repeat(context.annotations.data, rows, axis=0)),
        projected=Tensor(np.repeat(context.projected.data, rows, axis=0)),
        mask=np.repeat(context.mask, rows, axis=0),
    )


def _gather_state(state: DecoderState, rows: Sequence[int]) -> DecoderState:
    index = np.asarray(rows, dtype=np.int64)
    return DecoderState(tuple((Tensor(h.data[index]), Tensor(c.data[index])) for h, c in state.layers))


def _beam(source_ids: Sequence[int], params: ParameterSet, width: int) -> Hypothesis:
    """
    Keep the `width` best prefixes by summed log-probability. A prefix that emits EOS (or reaches the length
    limit) is finished; search stops once `width` hypotheses are finished or nothing is left alive. The winner is
    picked by score per token.
    """
    source = np.asarray([list(source_ids)], dtype=np.int64)
    tape = Tape(record=False)
    base = prepare_context(tape, params, source, np.ones_like(source, dtype=bool))
    state = init_decoder_state(tape, params, base)
    limit = decode_limit(len(source_ids), params.config)

    # (tokens, log-probs, running score)
    alive: List[Tuple[List[int], List[float], float]] = [([], [], 0.0)]
    finished: List[Hypothesis] = []
    for _ in range(limit):
        context = base if len(alive) == 1 else _tile_context(base, len(alive))
        prev = np.array([hyp[0][-1] if hyp[0] else BOS_ID for hyp in alive], dtype=np.int64)
        out = decoder_step(tape, params, prev, state, context)
        log_probs = out.log_probs.data
        selectable = _selectable(log_probs)
        candidates = np.array([hyp[2] for hyp in alive])[:, None] + selectable
        # primary key: running score; then the step log-probability; then flat index
        order = np.lexsort((-selectable.ravel(), -candidates.ravel()))[:width]

        survivors: List[Tuple[List[int], List[float], float]] = []
        rows: List[int] = []
        vocab = log_probs.shape[-1]
        for flat in order:
            if not np.isfinite(candidates.flat[flat]):
                continue
            row, token = divmod(int(flat), vocab)
            tokens = alive[row][0] + [token]
            token_lps = alive[row][1] + [float(log_probs[row, token])]
            running = alive[row][2] + float(log_probs[row, token])
            if token == EOS_ID or len(tokens) >= limit:
                finished.append(Hypothesis(tuple(tokens), tuple(token_lps)))
            else:
                survivors.append((tokens, token_lps, running))
                rows.append(row)
        if len(finished) >= width or not survivors:
            break
        alive = survivors
        state = _gather_state(out.state, rows)

    ranked = sorted(range(len(finished)), key=lambda i: (-finished[i].normalized_score, i))
    return finished[ranked[0]]


def translate(source_ids: Sequence[int], params: ParameterSet, beam: Optional[int] = None) -> Hypothesis:
    """Greedy decoding when beam is None, beam search of the given width otherwise."""
    _check_sources([source_ids])
    if beam is None:
        return _greedy_batch([source_ids], params)[0]
    if beam < 1:
        raise ConfigError(f"Beam width must be >= 1, got {beam}")
    return _beam(source_ids, params, beam)


def translate_batch(
    sources: Sequence[Sequence[int]],
    params: ParameterSet,
    beam: Optional[int] = None,
    workers: int = 1,
    chunk_size: int = DEFAULT_TRANSLATE_CHUNK,
) -> List[Hypothesis]:
    """Translate many sentences; results come back in input order whatever the worker count."""
    _check_sources(sources)
    if not sources:
        return []
    if beam is None:
        chunks = [sources[i : i + chunk_size] for i in range(0, len(sources), chunk_size)]

        def run(chunk: Sequence[Sequence[int]]) -> List[Hypothesis]:
            return _greedy_batch(chunk, params)

    else:
        chunks = [[src] for src in sources]
        width = beam

        def run(chunk: Sequence[Sequence[int]]) -> List[Hypothesis]:
            return [translate(chunk[0], params, width)]

    logger.debug(f"Translating {len(sources)} sentences in {len(chunks)} chunks with {workers} workers")
    if workers <= 1:
        results = [run(chunk) for chunk in chunks]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run, chunks))
    return [hyp for chunk_result in results for hyp in chunk_result]
