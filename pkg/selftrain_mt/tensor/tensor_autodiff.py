"""
Dense float64 arrays with a recording tape and reverse-mode differentiation.

A `Tape` records every primitive applied through it, in creation order, which is a valid evaluation
order; `Tape.backward` walks that record in reverse. Tapes share no mutable state, so independent
tapes can run on different threads. There is no implicit broadcasting apart from `add_bias` and the
explicit `broadcast_add`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from selftrain_mt.common import ContractError, DimensionError, DomainError, TokenIndexError

Array = NDArray[np.float64]
IntArray = NDArray[np.int64]
Backward = Callable[[Array], Tuple[Optional[Array], ...]]


class OpKind(enum.Enum):
    MATMUL = "matmul"
    ADD = "add"
    ADD_BIAS = "add_bias"
    BROADCAST_ADD = "broadcast_add"
    MUL = "mul"
    MUL_CONST = "mul_const"
    SCALE = "scale"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    CONCAT = "concat"
    EMBEDDING = "embedding"
    SOFTMAX = "softmax"
    LOG_SOFTMAX = "log_softmax"
    CROSS_ENTROPY = "cross_entropy"
    PICK = "pick"
    SUM = "sum"
    MATVEC = "matvec"
    WEIGHTED_SUM = "weighted_sum"
    SELECT_TIME = "select_time"
    STACK = "stack"
    SLICE_LAST = "slice_last"
    MASKED_UPDATE = "masked_update"


@dataclass(eq=False)
class Tensor:
    data: Array
    name: str = ""

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def values(self) -> List[float]:
        """Flat row-major values."""
        return [float(v) for v in self.data.reshape(-1)]

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    @staticmethod
    def from_values(shape: Sequence[int], values: Sequence[float], name: str = "") -> Tensor:
        if any(d <= 0 for d in shape):
            raise DimensionError(f"Tensor dimensions must be positive, got {list(shape)}")
        if int(np.prod(shape)) != len(values):
            raise DimensionError(f"Shape {list(shape)} needs {int(np.prod(shape))} values, got {len(values)}")
        return Tensor(np.asarray(values, dtype=np.float64).reshape(tuple(shape)), name=name)


@dataclass(eq=False)
class TapeNode:
    kind: OpKind
    inputs: Tuple[Tensor, ...]
    value: Tensor
    backward: Backward


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    z = np.exp(x[~positive])
    out[~positive] = z / (1.0 + z)
    return out


def _check_ids(ids: IntArray, size: int, what: str) -> None:
    if ids.size and (int(ids.min()) < 0 or int(ids.max()) >= size):
        raise TokenIndexError(f"{what} out of range [0, {size}): min {int(ids.min())}, max {int(ids.max())}")


class Tape:
    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: List[TapeNode] = []

    def _emit(self, kind: OpKind, inputs: Sequence[Tensor], out: Array, backward: Backward) -> Tensor:
        value = Tensor(out)
        if self.record:
            self.nodes.append(TapeNode(kind, tuple(inputs), value, backward))
        return value

    # --- linear algebra ---

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        """a[..., k] x b[k, n]; leading axes of a are batch axes."""
        if a.data.ndim < 2 or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
            raise DimensionError(f"matmul shape mismatch: {list(a.shape)} x {list(b.shape)}")
        a_data, b_data = a.data, b.data
        k, n = b_data.shape

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            grad_a = g @ b_data.T
            grad_b = a_data.reshape(-1, k).T @ g.reshape(-1, n)
            return grad_a, grad_b

        return self._emit(OpKind.MATMUL, (a, b), a_data @ b_data, backward)

    def matvec(self, x: Tensor, v: Tensor) -> Tensor:
        """x[..., k] . v[k] -> x[...]"""
        if v.data.ndim != 1 or x.shape[-1] != v.shape[0]:
            raise DimensionError(f"matvec shape mismatch: {list(x.shape)} . {list(v.shape)}")
        x_data, v_data = x.data, v.data
        k = v_data.shape[0]

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            return np.multiply.outer(g, v_data), x_data.reshape(-1, k).T @ g.reshape(-1)

        return self._emit(OpKind.MATVEC, (x, v), x_data @ v_data, backward)

    def weighted_sum(self, weights: Tensor, annotations: Tensor) -> Tensor:
        """weights[B, T], annotations[B, T, D] -> sum_j weights[b, j] * annotations[b, j] as [B, D]."""
        if weights.data.ndim != 2 or annotations.data.ndim != 3 or weights.shape != annotations.shape[:2]:
            raise DimensionError(
                f"weighted_sum shape mismatch: {list(weights.shape)} over {list(annotations.shape)}"
            )
        w, h = weights.data, annotations.data

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            return np.einsum("bd,btd->bt", g, h), w[:, :, None] * g[:, None, :]

        return self._emit(OpKind.WEIGHTED_SUM, (weights, annotations), np.einsum("bt,btd->bd", w, h), backward)

    # --- elementwise ---

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise DimensionError(f"add shape mismatch: {list(a.shape)} + {list(b.shape)}")
        return self._emit(OpKind.ADD, (a, b), a.data + b.data, lambda g: (g, g))

    def add_bias(self, x: Tensor, bias: Tensor) -> Tensor:
        if bias.data.ndim != 1 or x.shape[-1] != bias.shape[0]:
            raise DimensionError(f"add_bias shape mismatch: {list(x.shape)} + {list(bias.shape)}")
        n = bias.shape[0]
        return self._emit(OpKind.ADD_BIAS, (x, bias), x.data + bias.data, lambda g: (g, g.reshape(-1, n).sum(axis=0)))

    def broadcast_add(self, x: Tensor, rows: Tensor) -> Tensor:
        """x[B, T, A] + rows[B, A] repeated over T."""
        if x.data.ndim != 3 or rows.shape != (x.shape[0], x.shape[2]):
            raise DimensionError(f"broadcast_add shape mismatch: {list(x.shape)} + {list(rows.shape)}")
        return self._emit(
            OpKind.BROADCAST_ADD, (x, rows), x.data + rows.data[:, None, :], lambda g: (g, g.sum(axis=1))
        )

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise DimensionError(f"mul shape mismatch: {list(a.shape)} * {list(b.shape)}")
        a_data, b_data = a.data, b.data
        return self._emit(OpKind.MUL, (a, b), a_data * b_data, lambda g: (g * b_data, g * a_data))

    def mul_const(self, x: Tensor, const: Array) -> Tensor:
        """Multiply by a non-differentiable array (padding or dropout mask)."""
        const = np.asarray(const, dtype=np.float64)
        try:
            broadcast = np.broadcast_shapes(x.shape, const.shape)
        except ValueError:
            broadcast = None
        if broadcast != x.shape:
            raise DimensionError(f"mul_const shape mismatch: {list(x.shape)} * {list(const.shape)}")
        return self._emit(OpKind.MUL_CONST, (x,), x.data * const, lambda g: (g * const,))

    def scale(self, x: Tensor, factor: float) -> Tensor:
        return self._emit(OpKind.SCALE, (x,), x.data * factor, lambda g: (g * factor,))

    def tanh(self, x: Tensor) -> Tensor:
        y = np.tanh(x.data)
        return self._emit(OpKind.TANH, (x,), y, lambda g: (g * (1.0 - y * y),))

    def sigmoid(self, x: Tensor) -> Tensor:
        y = _sigmoid(x.data)
        return self._emit(OpKind.SIGMOID, (x,), y, lambda g: (g * y * (1.0 - y),))

    def masked_update(self, new: Tensor, old: Tensor, keep_new: Array) -> Tensor:
        """keep_new * new + (1 - keep_new) * old; carries recurrent state across padding."""
        if new.shape != old.shape:
            raise DimensionError(f"masked_update shape mismatch: {list(new.shape)} vs {list(old.shape)}")
        m = np.asarray(keep_new, dtype=np.float64)
        return self._emit(
            OpKind.MASKED_UPDATE,
            (new, old),
            m * new.data + (1.0 - m) * old.data,
            lambda g: (g * m, g * (1.0 - m)),
        )

    def dropout(self, x: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
        """Inverted dropout; identity when rng is None (inference) or rate is 0."""
        if rng is None or rate <= 0.0:
            return x
        mask = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
        return self.mul_const(x, mask)

    # --- shape plumbing ---

    def concat(self, tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
        if not tensors:
            raise DomainError("concat of no tensors")
        datas = [t.data for t in tensors]
        try:
            out = np.concatenate(datas, axis=axis)
        except ValueError as e:
            raise DimensionError(f"concat shape mismatch: {[list(t.shape) for t in tensors]}") from e
        splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            return tuple(np.split(g, splits, axis=axis))

        return self._emit(OpKind.CONCAT, tensors, out, backward)

    def stack(self, tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
        if not tensors:
            raise DomainError("stack of no tensors")
        shapes = {t.shape for t in tensors}
        if len(shapes) != 1:
            raise DimensionError(f"stack shape mismatch: {[list(t.shape) for t in tensors]}")
        count = len(tensors)

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            return tuple(np.take(g, i, axis=axis) for i in range(count))

        return self._emit(OpKind.STACK, tensors, np.stack([t.data for t in tensors], axis=axis), backward)

    def select_time(self, x: Tensor, t: int) -> Tensor:
        """x[:, t] for a batch-major sequence tensor."""
        if x.data.ndim < 2 or not 0 <= t < x.shape[1]:
            raise DimensionError(f"select_time index {t} invalid for shape {list(x.shape)}")
        shape = x.shape

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            grad = np.zeros(shape)
            grad[:, t] = g
            return (grad,)

        return self._emit(OpKind.SELECT_TIME, (x,), x.data[:, t], backward)

    def slice_last(self, x: Tensor, start: int, stop: int) -> Tensor:
        if not 0 <= start < stop <= x.shape[-1]:
            raise DimensionError(f"slice [{start}:{stop}] invalid for shape {list(x.shape)}")
        shape = x.shape

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            grad = np.zeros(shape)
            grad[..., start:stop] = g
            return (grad,)

        return self._emit(OpKind.SLICE_LAST, (x,), x.data[..., start:stop], backward)

    def embedding(self, table: Tensor, ids: IntArray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if table.data.ndim != 2:
            raise DimensionError(f"embedding table must be 2-D, got {list(table.shape)}")
        _check_ids(ids, table.shape[0], "token id")
        table_shape = table.shape

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            grad = np.zeros(table_shape)
            np.add.at(grad, ids, g)
            return (grad,)

        return self._emit(OpKind.EMBEDDING, (table,), table.data[ids], backward)

    # --- distributions and reductions ---

    def softmax(self, x: Tensor, mask: Optional[NDArray[np.bool_]] = None) -> Tensor:
        """Softmax over the last axis with max-subtraction; masked (False) positions get probability 0."""
        if x.data.ndim == 0 or x.shape[-1] == 0:
            raise DomainError("softmax of empty input")
        z = x.data
        if mask is not None:
            if not np.all(np.any(mask, axis=-1)):
                raise DomainError("softmax row with every position masked")
            z = np.where(mask, z, -np.inf)
        z = z - np.max(z, axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / np.sum(e, axis=-1, keepdims=True)

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

        return self._emit(OpKind.SOFTMAX, (x,), y, backward)

    def log_softmax(self, x: Tensor) -> Tensor:
        if x.data.ndim == 0 or x.shape[-1] == 0:
            raise DomainError("log_softmax of empty input")
        z = x.data - np.max(x.data, axis=-1, keepdims=True)
        y = z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            return (g - np.exp(y) * np.sum(g, axis=-1, keepdims=True),)

        return self._emit(OpKind.LOG_SOFTMAX, (x,), y, backward)

    def pick(self, x: Tensor, index: IntArray) -> Tensor:
        """x[..., index[...]] along the last axis."""
        index = np.asarray(index, dtype=np.int64)
        if index.shape != x.shape[:-1]:
            raise DimensionError(f"pick index shape {list(index.shape)} does not match {list(x.shape)}")
        _check_ids(index, x.shape[-1], "pick index")
        shape = x.shape
        out = np.take_along_axis(x.data, index[..., None], axis=-1)[..., 0]

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            grad = np.zeros(shape)
            np.put_along_axis(grad, index[..., None], g[..., None], axis=-1)
            return (grad,)

        return self._emit(OpKind.PICK, (x,), out, backward)

    def cross_entropy(self, dist: Tensor, target: IntArray | int) -> Tensor:
        """-log(dist[target]) over the last axis of a probability tensor."""
        index = np.asarray(target, dtype=np.int64)
        if index.shape != dist.shape[:-1]:
            raise DimensionError(f"cross_entropy target shape {list(index.shape)} for {list(dist.shape)}")
        _check_ids(index, dist.shape[-1], "target")
        shape = dist.shape
        chosen = np.take_along_axis(dist.data, index[..., None], axis=-1)[..., 0]

        def backward(g: Array) -> Tuple[Optional[Array], ...]:
            grad = np.zeros(shape)
            np.put_along_axis(grad, index[..., None], (-g / chosen)[..., None], axis=-1)
            return (grad,)

        return self._emit(OpKind.CROSS_ENTROPY, (dist,), -np.log(chosen), backward)

    def sum(self, x: Tensor) -> Tensor:
        shape = x.shape
        return self._emit(OpKind.SUM, (x,), np.asarray(np.sum(x.data)), lambda g: (np.full(shape, g.reshape(-1)[0]),))

    # --- differentiation ---

    def backward(self, loss: Tensor, params: Mapping[str, Tensor]) -> Dict[str, Array]:
        """
        Gradients of a scalar loss with respect to each named leaf tensor.
        Parameters that did not take part in the loss get a zero gradient.
        """
        if not self.record:
            raise ContractError("backward() on a tape that was not recording")
        if loss.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {list(loss.shape)}")

        grads: Dict[int, Array] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.get(id(node.value))
            if g is None:
                continue
            for inp, grad in zip(node.inputs, node.backward(g)):
                if grad is None:
                    continue
                key = id(inp)
                grads[key] = grads[key] + grad if key in grads else grad

        return {
            name: np.asarray(grads.get(id(t), np.zeros_like(t.data)), dtype=np.float64)
            for name, t in params.items()
        }
