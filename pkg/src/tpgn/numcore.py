"""Dense-tensor substrate with reverse-mode automatic differentiation.

Everything is built on numpy arrays wrapped in :class:`Tensor` nodes that
record their parents and a vector-Jacobian closure. Calling
:func:`backward` on a scalar node walks the tape in reverse topological
order and accumulates gradients into every reachable :class:`Parameter`.

Kernels are naive dense numpy; there is no BLAS tuning and no GPU path.
Default precision is 64-bit (required for gradient checks); 32-bit can be
selected for faster training via :func:`set_default_dtype`.
"""

from __future__ import annotations

import struct
import threading

import numpy as np

from .errors import (
    EmptySequenceError,
    NonScalarLossError,
    ShapeMismatchError,
)

_DEFAULT_DTYPE = np.float64


class _TapeState(threading.local):
    """Per-thread tape switch so threaded inference cannot disturb training."""

    def __init__(self):
        self.enabled = True


_TAPE = _TapeState()

CHECKPOINT_MAGIC = b"TPGNCKPT"
CHECKPOINT_VERSION = 1


def set_default_dtype(dtype) -> None:
    """Set the dtype used for newly created tensors (float64 or float32)."""
    global _DEFAULT_DTYPE
    if dtype not in (np.float64, np.float32):
        raise ValueError("dtype must be numpy float64 or float32")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


class no_grad:
    """Context manager that disables tape recording in the current thread."""

    def __enter__(self):
        self._prev = _TAPE.enabled
        _TAPE.enabled = False
        return self

    def __exit__(self, *exc):
        _TAPE.enabled = self._prev
        return False


class Tensor:
    """A dense array plus the tape bookkeeping needed for backprop.

    ``_parents`` holds the input tensors of the op that produced this node
    and ``_vjp`` maps the output gradient to one gradient per parent
    (``None`` for non-differentiable parents).
    """

    __slots__ = ("data", "grad", "_parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.grad = None
        if _TAPE.enabled:
            self._parents = parents
            self._vjp = vjp
        else:
            self._parents = ()
            self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)


class Parameter(Tensor):
    """A learnable tensor with a persistent gradient and Adagrad accumulator."""

    __slots__ = ("accumulator", "name")

    def __init__(self, data, name: str = "", accumulator_init: float = 0.0):
        super().__init__(data)
        self.grad = np.zeros_like(self.data)
        self.accumulator = np.full_like(self.data, accumulator_init)
        self.name = name


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data) -> Tensor:
    """Wrap raw data as a constant (no-gradient) tensor."""
    return Tensor(data)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    # sum away prepended axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _node(data, parents, vjp) -> Tensor:
    if _TAPE.enabled:
        return Tensor(data, parents=parents, vjp=vjp)
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                         _unbroadcast(g, b.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                         _unbroadcast(-g, b.data.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.data.shape),
                                         _unbroadcast(g * a.data, b.data.shape)))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a python constant."""
    return _node(a.data * s, (a,), lambda g: (g * s,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # overflow-free: exp argument is always <= 0
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_raw(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def clip_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor); gradient is zero on the clipped region."""
    out = np.maximum(a.data, floor)
    mask = a.data > floor
    return _node(out, (a,), lambda g: (g * mask,))


def sum_(a: Tensor) -> Tensor:
    return _node(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.data.shape).copy(),))


def mean_(a: Tensor) -> Tensor:
    n = a.data.size
    return _node(a.data.mean(), (a,),
                 lambda g: (np.broadcast_to(g / n, a.data.shape).copy(),))


def softmax(x: Tensor) -> Tensor:
    """Max-subtracted exponential normalization of a vector."""
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    out = e / e.sum()

    def vjp(g):
        return (out * (g - np.dot(g, out)),)

    return _node(out, (x,), vjp)


# ---------------------------------------------------------------------------
# linear algebra and structural ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeMismatchError(f"matmul {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def vjp(g):
            return (np.outer(g, bd), ad.T @ g)
    elif ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeMismatchError(f"matmul {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def vjp(g):
            return (bd @ g, np.outer(ad, g))
    elif ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeMismatchError(f"matmul {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def vjp(g):
            return (g @ bd.T, ad.T @ g)
    else:
        raise ShapeMismatchError(f"unsupported matmul ranks {ad.ndim}/{bd.ndim}")
    return _node(out, (a, b), vjp)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ShapeMismatchError(f"dot {a.data.shape} . {b.data.shape}")
    return _node(np.dot(a.data, b.data), (a, b),
                 lambda g: (g * b.data, g * a.data))


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    out = np.concatenate([p.data for p in parts])
    offsets = [0]
    for p in parts:
        offsets.append(offsets[-1] + p.data.shape[0])

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _node(out, tuple(parts), vjp)


def stack(rows_: list[Tensor]) -> Tensor:
    """Stack equal-length 1-D tensors into a matrix, one per row."""
    out = np.stack([r.data for r in rows_])

    def vjp(g):
        return tuple(g[i] for i in range(len(rows_)))

    return _node(out, tuple(rows_), vjp)


def slice_(a: Tensor, start: int, stop: int) -> Tensor:
    out = a.data[start:stop]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _node(out, (a,), vjp)


def pick(a: Tensor, index: int) -> Tensor:
    """Select one element of a vector as a scalar."""
    out = a.data[index]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(out, (a,), vjp)


def row(a: Tensor, index: int) -> Tensor:
    """Select one row of a matrix (embedding lookup)."""
    out = a.data[index]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(out, (a,), vjp)


def rows(a: Tensor, indices) -> Tensor:
    """Gather several rows of a matrix at once."""
    idx = np.asarray(indices, dtype=np.intp)
    out = a.data[idx]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _node(out, (a,), vjp)


def scatter_add(base: Tensor, indices, src: Tensor) -> Tensor:
    """out = base with src[j] added at position indices[j] (duplicates sum)."""
    idx = np.asarray(indices, dtype=np.intp)
    out = base.data.copy()
    np.add.at(out, idx, src.data)

    def vjp(g):
        return (g, g[idx])

    return _node(out, (base, src), vjp)


# ---------------------------------------------------------------------------
# LSTM / BiLSTM / MLP


class LstmCell:
    """Parameters of a single LSTM cell (gate order: input, forget, cell, output)."""

    def __init__(self, w_x: Parameter, w_h: Parameter, bias: Parameter):
        four_h, input_dim = w_x.data.shape
        if four_h % 4 != 0 or w_h.data.shape != (four_h, four_h // 4) \
                or bias.data.shape != (four_h,):
            raise ShapeMismatchError("inconsistent LSTM cell parameter shapes")
        self.w_x = w_x
        self.w_h = w_h
        self.bias = bias
        self.input_dim = input_dim
        self.hidden_dim = four_h // 4

    @classmethod
    def create(cls, rng, input_dim: int, hidden_dim: int, prefix: str,
               init_scale: float = 0.1) -> "LstmCell":
        w_x = Parameter(rng.uniform(-init_scale, init_scale, (4 * hidden_dim, input_dim)),
                        name=f"{prefix}.w_x")
        w_h = Parameter(rng.uniform(-init_scale, init_scale, (4 * hidden_dim, hidden_dim)),
                        name=f"{prefix}.w_h")
        bias = Parameter(np.zeros(4 * hidden_dim), name=f"{prefix}.bias")
        return cls(w_x, w_h, bias)

    def parameters(self):
        return [self.w_x, self.w_h, self.bias]


def lstm_step(cell: LstmCell, x: Tensor, h_prev: Tensor, c_prev: Tensor):
    """One LSTM step; returns (hidden, cell_state).

    Implemented as a single fused tape node with a handwritten backward,
    which keeps the per-step graph small.
    """
    hd = cell.hidden_dim
    if x.data.shape != (cell.input_dim,) or h_prev.data.shape != (hd,) \
            or c_prev.data.shape != (hd,):
        raise ShapeMismatchError(
            f"lstm_step got x{x.data.shape} h{h_prev.data.shape} c{c_prev.data.shape}")
    wx, wh, b = cell.w_x.data, cell.w_h.data, cell.bias.data
    z = wx @ x.data + wh @ h_prev.data + b
    i = _sigmoid_raw(z[:hd])
    f = _sigmoid_raw(z[hd:2 * hd])
    g_ = np.tanh(z[2 * hd:3 * hd])
    o = _sigmoid_raw(z[3 * hd:])
    c = f * c_prev.data + i * g_
    tc = np.tanh(c)
    h = o * tc
    out = np.concatenate([h, c])
    x_d, h_d, c_d = x.data, h_prev.data, c_prev.data

    def vjp(grad):
        dh, dc_out = grad[:hd], grad[hd:]
        do = dh * tc
        dc = dc_out + dh * o * (1.0 - tc * tc)
        di = dc * g_
        dg = dc * i
        df = dc * c_d
        dc_prev = dc * f
        dz = np.concatenate([di * i * (1.0 - i),
                             df * f * (1.0 - f),
                             dg * (1.0 - g_ * g_),
                             do * o * (1.0 - o)])
        return (np.outer(dz, x_d), np.outer(dz, h_d), dz,
                wx.T @ dz, wh.T @ dz, dc_prev)

    hc = _node(out, (cell.w_x, cell.w_h, cell.bias, x, h_prev, c_prev), vjp)
    return slice_(hc, 0, hd), slice_(hc, hd, 2 * hd)


def bilstm_encode(fwd: LstmCell, bwd: LstmCell, xs: list[Tensor]):
    """Run a BiLSTM over a sequence of input vectors.

    Returns (states, final): per-position concatenations of the forward and
    backward hidden states, and the concatenation of the last forward state
    with the deepest backward state (the one aligned with position 0).
    """
    if not xs:
        raise EmptySequenceError("bilstm_encode on empty sequence")
    hd = fwd.hidden_dim
    h = zeros(hd)
    c = zeros(hd)
    fwd_states = []
    for x in xs:
        h, c = lstm_step(fwd, x, h, c)
        fwd_states.append(h)
    h = zeros(hd)
    c = zeros(hd)
    bwd_states = [None] * len(xs)
    for pos in range(len(xs) - 1, -1, -1):
        h, c = lstm_step(bwd, xs[pos], h, c)
        bwd_states[pos] = h
    states = [concat([fwd_states[i], bwd_states[i]]) for i in range(len(xs))]
    final = concat([fwd_states[-1], bwd_states[0]])
    return states, final


_ACTIVATIONS = {
    "linear": lambda t: t,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def mlp_forward(layers, x: Tensor) -> Tensor:
    """Apply a stack of (weight, bias, activation-name) layers to a vector."""
    out = x
    for w, b, act in layers:
        if w.data.shape[1] != out.data.shape[0]:
            raise ShapeMismatchError(
                f"mlp layer expects {w.data.shape[1]}, got {out.data.shape[0]}")
        out = _ACTIVATIONS[act](add(matmul(w, out), b))
    return out


# ---------------------------------------------------------------------------
# backward pass and optimizer


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into every node reachable from `loss`.

    Parameter gradients are accumulated in place, so repeated calls without
    zeroing add up.
    """
    if loss.data.shape != ():
        raise NonScalarLossError(f"loss has shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack_ = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack_.append((p, False))

    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, copy=True)
            else:
                parent.grad += g


def zero_grads(params) -> None:
    for p in params:
        p.grad[...] = 0.0


def init_accumulators(params, value: float) -> None:
    for p in params:
        p.accumulator[...] = value


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm > 0.0:
        factor = max_norm / norm
        for p in params:
            p.grad *= factor
    return norm


def adagrad_step(params, lr: float) -> None:
    """Adagrad update: acc += g^2; value -= lr * g / sqrt(acc); zero grads."""
    for p in params:
        g = p.grad
        p.accumulator += g * g
        # where g == 0 the update is 0 regardless of acc; dodge 0/sqrt(0)
        denom = np.sqrt(np.where(g != 0.0, p.accumulator, 1.0))
        p.data -= lr * g / denom
        p.grad[...] = 0.0


# ---------------------------------------------------------------------------
# checkpoint serialization


def save_checkpoint(path, named_params: dict[str, Parameter]) -> None:
    """Write parameters as a little-endian binary table of float32 payloads."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(named_params)))
        for name, param in named_params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            shape = param.data.shape
            fh.write(struct.pack("<I", len(shape)))
            for dim in shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(param.data, dtype="<f4").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as a name -> float array mapping."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ShapeMismatchError(f"not a checkpoint file: bad magic {magic!r}")
        version, = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ShapeMismatchError(f"unsupported checkpoint version {version}")
        count, = struct.unpack("<I", fh.read(4))
        out = {}
        for _ in range(count):
            nlen, = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            ndim, = struct.unpack("<I", fh.read(4))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n_items = int(np.prod(shape)) if shape else 1
            payload = fh.read(4 * n_items)
            arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
            out[name] = arr.astype(_DEFAULT_DTYPE)
    return out


def restore_parameters(named_params: dict[str, Parameter],
                       state: dict[str, np.ndarray]) -> None:
    """Copy checkpointed arrays into parameters, validating names and shapes."""
    missing = set(named_params) - set(state)
    extra = set(state) - set(named_params)
    if missing or extra:
        raise ShapeMismatchError(
            f"checkpoint/model parameter mismatch: missing={sorted(missing)}, "
            f"unexpected={sorted(extra)}")
    for name, param in named_params.items():
        if state[name].shape != param.data.shape:
            raise ShapeMismatchError(
                f"parameter {name}: checkpoint shape {state[name].shape} "
                f"!= model shape {param.data.shape}")
        param.data[...] = state[name]
