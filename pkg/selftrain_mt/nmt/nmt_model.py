"""
Attention encoder-decoder.

Encoder annotations h_j concatenate forward and backward recurrent states. At decoder step i the
previous state s_{i-1} scores every annotation with e_ij = v_a . tanh(W s_{i-1} + U h_j); the
weights a_ij are the softmax of e_i over j and the context is c_i = sum_j a_ij h_j. The new state is
s_i = f(s_{i-1}, y_{i-1}, c_i) with f a 4-gate LSTM cell, and the next-token distribution is
g(y_{i-1}, s_i, c_i): a tanh readout followed by a softmax projection over the target vocabulary.

Weight matrices are stored input-major (x @ W), so W s appears as s @ W in the code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from selftrain_mt.common import ContractError, InputError
from selftrain_mt.nmt.nmt_config import ModelConfig
from selftrain_mt.subword.vocab import BOS_ID, EOS_ID, PAD_ID
from selftrain_mt.tensor.tensor_autodiff import Array, IntArray, Tape, Tensor

INIT_SCALE = 0.1
FORGET_GATE_BIAS = 1.0

EncodedPair = Tuple[Sequence[int], Sequence[int]]


def _directions(config: ModelConfig) -> Tuple[str, ...]:
    return ("fw", "bw") if config.bidirectional else ("fw",)


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Every parameter name with its shape, in canonical order."""
    emb, hid, ann = config.embedding_size, config.hidden_size, config.annotation_size
    shapes: Dict[str, Tuple[int, ...]] = {
        "src_embed": (config.source_vocab_size, emb),
        "tgt_embed": (config.target_vocab_size, emb),
    }
    layer_in = emb
    for layer in range(config.encoder_layers):
        for direction in _directions(config):
            shapes[f"enc.{layer}.{direction}.W"] = (layer_in, 4 * hid)
            shapes[f"enc.{layer}.{direction}.U"] = (hid, 4 * hid)
            shapes[f"enc.{layer}.{direction}.b"] = (4 * hid,)
        layer_in = ann
    shapes["dec.init.W"] = (ann, hid)
    shapes["dec.init.b"] = (hid,)
    layer_in = emb + ann
    for layer in range(config.decoder_layers):
        shapes[f"dec.{layer}.W"] = (layer_in, 4 * hid)
        shapes[f"dec.{layer}.U"] = (hid, 4 * hid)
        shapes[f"dec.{layer}.b"] = (4 * hid,)
        layer_in = hid
    shapes["att.W"] = (hid, hid)
    shapes["att.U"] = (ann, hid)
    shapes["att.v"] = (hid,)
    shapes["out.hidden.W"] = (hid + ann + emb, hid)
    shapes["out.hidden.b"] = (hid,)
    shapes["out.W"] = (hid, config.target_vocab_size)
    shapes["out.b"] = (config.target_vocab_size,)
    return shapes


@dataclass(eq=False)
class ParameterSet:
    config: ModelConfig
    tensors: Dict[str, Tensor]

    def __post_init__(self) -> None:
        expected = parameter_shapes(self.config)
        if list(expected) != list(self.tensors):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise ContractError(f"Parameter names do not match config (missing {missing}, unexpected {extra})")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ContractError(f"Parameter '{name}' has shape {self.tensors[name].shape}, expected {shape}")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def arrays(self) -> Dict[str, Array]:
        return {name: t.data for name, t in self.tensors.items()}

    def copy(self) -> ParameterSet:
        return ParameterSet(self.config, {name: Tensor(t.data.copy(), name=name) for name, t in self.tensors.items()})

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(t.data))) for t in self.tensors.values())

    @staticmethod
    def from_arrays(config: ModelConfig, arrays: Dict[str, Array]) -> ParameterSet:
        expected = parameter_shapes(config)
        if set(arrays) != set(expected):
            raise ContractError(f"Parameter names do not match config: {sorted(set(arrays) ^ set(expected))}")
        return ParameterSet(config, {name: Tensor(np.array(arrays[name]), name=name) for name in expected})


def init_parameters(config: ModelConfig, rng: np.random.Generator) -> ParameterSet:
    """Uniform(-0.1, 0.1) everywhere, LSTM forget-gate biases set to 1."""
    hid = config.hidden_size
    tensors: Dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        data = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        if (name.startswith("enc.") or name.startswith("dec.")) and name.endswith(".b") and "init" not in name:
            data[hid : 2 * hid] = FORGET_GATE_BIAS
        tensors[name] = Tensor(data, name=name)
    return ParameterSet(config, tensors)


def zero_parameters(config: ModelConfig) -> ParameterSet:
    return ParameterSet(
        config, {name: Tensor(np.zeros(shape), name=name) for name, shape in parameter_shapes(config).items()}
    )


@dataclass(slots=True, frozen=True)
class Batch:
    source: IntArray
    source_mask: NDArray[np.bool_]
    target_in: IntArray
    target_out: IntArray
    target_mask: NDArray[np.bool_]

    @property
    def size(self) -> int:
        return int(self.source.shape[0])


def make_batch(pairs: Sequence[EncodedPair]) -> Batch:
    """Pad a list of (source ids, target ids); targets get BOS on input and EOS on output."""
    if not pairs:
        raise InputError("Cannot build a batch from no pairs")
    for idx, (src, _) in enumerate(pairs):
        if len(src) == 0:
            raise InputError(f"Empty source sentence at batch position {idx}")
    size = len(pairs)
    src_len = max(len(src) for src, _ in pairs)
    tgt_len = max(len(tgt) for _, tgt in pairs) + 1
    source = np.full((size, src_len), PAD_ID, dtype=np.int64)
    target_in = np.full((size, tgt_len), PAD_ID, dtype=np.int64)
    target_out = np.full((size, tgt_len), PAD_ID, dtype=np.int64)
    for row, (src, tgt) in enumerate(pairs):
        source[row, : len(src)] = src
        target_in[row, : len(tgt) + 1] = [BOS_ID, *tgt]
        target_out[row, : len(tgt) + 1] = [*tgt, EOS_ID]
    lengths = np.array([len(tgt) + 1 for _, tgt in pairs])
    return Batch(
        source=source,
        source_mask=source != PAD_ID,
        target_in=target_in,
        target_out=target_out,
        target_mask=np.arange(tgt_len)[None, :] < lengths[:, None],
    )


@dataclass(slots=True, frozen=True)
class EncoderAnnotations:
    h: Array  # [T_x, 2 * hidden] for a single sentence


@dataclass(eq=False)
class EncoderContext:
    annotations: Tensor  # [B, T, D]
    projected: Tensor  # U h_j, [B, T, hidden]
    mask: NDArray[np.bool_]  # [B, T]


@dataclass(eq=False)
class DecoderState:
    layers: Tuple[Tuple[Tensor, Tensor], ...]  # (hidden, cell) per layer

    @property
    def top(self) -> Tensor:
        return self.layers[-1][0]


@dataclass(eq=False)
class StepOutput:
    state: DecoderState
    log_probs: Tensor  # [B, V]
    attention: Tensor  # [B, T]

    def distribution(self) -> Array:
        return np.exp(self.log_probs.data)


def lstm_cell(
    tape: Tape, x: Tensor, h: Tensor, c: Tensor, w: Tensor, u: Tensor, b: Tensor
) -> Tuple[Tensor, Tensor]:
    hid = h.shape[-1]
    gates = tape.add_bias(tape.add(tape.matmul(x, w), tape.matmul(h, u)), b)
    input_gate = tape.sigmoid(tape.slice_last(gates, 0, hid))
    forget_gate = tape.sigmoid(tape.slice_last(gates, hid, 2 * hid))
    candidate = tape.tanh(tape.slice_last(gates, 2 * hid, 3 * hid))
    output_gate = tape.sigmoid(tape.slice_last(gates, 3 * hid, 4 * hid))
    c_new = tape.add(tape.mul(forget_gate, c), tape.mul(input_gate, candidate))
    h_new = tape.mul(output_gate, tape.tanh(c_new))
    return h_new, c_new


def encode_batch(
    tape: Tape,
    params: ParameterSet,
    source: IntArray,
    source_mask: NDArray[np.bool_],
    dropout_rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Annotations [B, T, D]; padded positions never influence real ones."""
    config = params.config
    size, length = source.shape
    hid = config.hidden_size
    layer_input = tape.dropout(tape.embedding(params["src_embed"], source), config.dropout, dropout_rng)
    keep = source_mask.astype(np.float64)

    layer_output = layer_input
    for layer in range(config.encoder_layers):
        per_direction: List[Tensor] = []
        for direction in _directions(config):
            w = params[f"enc.{layer}.{direction}.W"]
            u = params[f"enc.{layer}.{direction}.U"]
            b = params[f"enc.{layer}.{direction}.b"]
            h = Tensor(np.zeros((size, hid)))
            c = Tensor(np.zeros((size, hid)))
            states: List[Optional[Tensor]] = [None] * length
            order = range(length) if direction == "fw" else range(length - 1, -1, -1)
            for t in order:
                h_new, c_new = lstm_cell(tape, tape.select_time(layer_input, t), h, c, w, u, b)
                m = keep[:, t : t + 1]
                h = tape.masked_update(h_new, h, m)
                c = tape.masked_update(c_new, c, m)
                states[t] = h
            per_direction.append(tape.stack([s for s in states if s is not None], axis=1))
        layer_output = tape.concat(per_direction, axis=-1) if len(per_direction) > 1 else per_direction[0]
        if layer < config.encoder_layers - 1:
            layer_output = tape.dropout(layer_output, config.dropout, dropout_rng)
        layer_input = layer_output
    return layer_output


def encode(source_ids: Sequence[int], params: ParameterSet) -> EncoderAnnotations:
    if len(source_ids) == 0:
        raise InputError("Cannot encode an empty source sentence")
    source = np.asarray([list(source_ids)], dtype=np.int64)
    annotations = encode_batch(Tape(record=False), params, source, np.ones_like(source, dtype=bool))
    return EncoderAnnotations(h=annotations.data[0])


def prepare_context(
    tape: Tape,
    params: ParameterSet,
    source: IntArray,
    source_mask: NDArray[np.bool_],
    dropout_rng: Optional[np.random.Generator] = None,
) -> EncoderContext:
    annotations = encode_batch(tape, params, source, source_mask, dropout_rng)
    return EncoderContext(
        annotations=annotations, projected=tape.matmul(annotations, params["att.U"]), mask=source_mask
    )


def attention(
    tape: Tape, params: ParameterSet, prev_state: Tensor, context: EncoderContext
) -> Tuple[Tensor, Tensor]:
    """(c_i [B, D], a_i [B, T]) from s_{i-1} [B, H]."""
    ws = tape.matmul(prev_state, params["att.W"])
    energy = tape.matvec(tape.tanh(tape.broadcast_add(context.projected, ws)), params["att.v"])
    weights = tape.softmax(energy, mask=context.mask)
    return tape.weighted_sum(weights, context.annotations), weights


def init_decoder_state(tape: Tape, params: ParameterSet, context: EncoderContext) -> DecoderState:
    """s_0 = tanh(mean_j(h_j) W_init + b_init) for every layer, zero cells."""
    lengths = context.mask.sum(axis=1, keepdims=True)
    uniform = Tensor(context.mask.astype(np.float64) / lengths)
    mean = tape.weighted_sum(uniform, context.annotations)
    s0 = tape.tanh(tape.add_bias(tape.matmul(mean, params["dec.init.W"]), params["dec.init.b"]))
    zeros = Tensor(np.zeros(s0.shape))
    return DecoderState(layers=tuple((s0, zeros) for _ in range(params.config.decoder_layers)))


def decoder_step(
    tape: Tape,
    params: ParameterSet,
    prev_tokens: IntArray,
    state: DecoderState,
    context: EncoderContext,
    dropout_rng: Optional[np.random.Generator] = None,
) -> StepOutput:
    config = params.config
    y_emb = tape.dropout(
        tape.embedding(params["tgt_embed"], np.asarray(prev_tokens, dtype=np.int64)), config.dropout, dropout_rng
    )
    context_vector, weights = attention(tape, params, state.top, context)

    x = tape.concat([y_emb, context_vector])
    new_layers: List[Tuple[Tensor, Tensor]] = []
    for layer in range(config.decoder_layers):
        h, c = state.layers[layer]
        h_new, c_new = lstm_cell(
            tape, x, h, c, params[f"dec.{layer}.W"], params[f"dec.{layer}.U"], params[f"dec.{layer}.b"]
        )
        new_layers.append((h_new, c_new))
        x = tape.dropout(h_new, config.dropout, dropout_rng) if layer < config.decoder_layers - 1 else h_new

    s_i = tape.dropout(new_layers[-1][0], config.dropout, dropout_rng)
    readout_in = tape.concat([s_i, context_vector, y_emb])
    readout = tape.tanh(tape.add_bias(tape.matmul(readout_in, params["out.hidden.W"]), params["out.hidden.b"]))
    readout = tape.dropout(readout, config.dropout, dropout_rng)
    logits = tape.add_bias(tape.matmul(readout, params["out.W"]), params["out.b"])
    return StepOutput(state=DecoderState(tuple(new_layers)), log_probs=tape.log_softmax(logits), attention=weights)


def _teacher_forced_picks(
    tape: Tape, params: ParameterSet, batch: Batch, dropout_rng: Optional[np.random.Generator]
) -> List[Tensor]:
    context = prepare_context(tape, params, batch.source, batch.source_mask, dropout_rng)
    state = init_decoder_state(tape, params, context)
    picks: List[Tensor] = []
    for t in range(batch.target_in.shape[1]):
        out = decoder_step(tape, params, batch.target_in[:, t], state, context, dropout_rng)
        state = out.state
        picks.append(tape.pick(out.log_probs, batch.target_out[:, t]))
    return picks


def teacher_forced_loss(
    tape: Tape, params: ParameterSet, batch: Batch, dropout_rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Summed target negative log-likelihood divided by the number of sentences in the batch."""
    total: Optional[Tensor] = None
    for t, picked in enumerate(_teacher_forced_picks(tape, params, batch, dropout_rng)):
        step_sum = tape.sum(tape.mul_const(picked, batch.target_mask[:, t].astype(np.float64)))
        total = step_sum if total is None else tape.add(total, step_sum)
    assert total is not None
    return tape.scale(total, -1.0 / batch.size)


def forced_log_probs(params: ParameterSet, pairs: Sequence[EncodedPair]) -> List[List[float]]:
    """Per-token log-probabilities (EOS included) of each target under the model."""
    if not pairs:
        return []
    batch = make_batch(pairs)
    picks = _teacher_forced_picks(Tape(record=False), params, batch, None)
    result: List[List[float]] = []
    for row, (_, tgt) in enumerate(pairs):
        result.append([float(picks[t].data[row]) for t in range(len(tgt) + 1)])
    return result


def forced_decode(source_ids: Sequence[int], target_ids: Sequence[int], params: ParameterSet) -> List[float]:
    return forced_log_probs(params, [(source_ids, target_ids)])[0]
