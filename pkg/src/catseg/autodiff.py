"""Minimal reverse-mode autodiff over numpy arrays.

Exactly the operations the segmentation model needs: dense tensors, a tape
Graph recording executed ops, and backward accumulation into leaf gradients.
Training runs in float32; the `precision("float64")` context switches new
tensors to float64 for gradient checking.
"""

import contextlib
import threading

import numpy as np

_state = threading.local()


def _cfg():
    if not hasattr(_state, "dtype"):
        _state.dtype = np.float32
        _state.debug = False
    return _state


def default_dtype():
    return _cfg().dtype


@contextlib.contextmanager
def precision(name):
    """Temporarily switch the default dtype ("float32" or "float64")."""
    cfg = _cfg()
    prev = cfg.dtype
    cfg.dtype = np.dtype(name).type
    try:
        yield
    finally:
        cfg.dtype = prev


@contextlib.contextmanager
def debug_checks(enabled=True):
    """Enable per-op finiteness checks (slow; for debugging runs)."""
    cfg = _cfg()
    prev = cfg.debug
    cfg.debug = enabled
    try:
        yield
    finally:
        cfg.debug = prev


class ShapeError(ValueError):
    """Operand shapes incompatible for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced or consumed a non-finite value (debug mode only)."""


class Tensor:
    """Dense array with an optional same-shape gradient buffer.

    `grad` is allocated lazily on first accumulation. `trainable` marks
    optimizer-managed leaves; `track` marks tensors on some path from a
    trainable leaf, which is what backward propagation follows.
    """

    __slots__ = ("data", "grad", "trainable", "track", "name")

    def __init__(self, data, trainable=False, name=None, dtype=None):
        self.data = np.ascontiguousarray(data, dtype=dtype or default_dtype())
        self.grad = None
        self.trainable = trainable
        self.track = trainable
        self.name = name

    @property
    def dims(self):
        return self.data.shape

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self):
        tag = self.name or ("param" if self.trainable else "tensor")
        return f"Tensor({tag}, shape={self.data.shape}, dtype={self.data.dtype})"


def constant(data, name=None):
    """Wrap data as a non-trainable Tensor (no gradient flows into it)."""
    return Tensor(data, trainable=False, name=name)


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in op '{op}'")


class _Node:
    __slots__ = ("out", "backward")

    def __init__(self, out, backward):
        self.out = out
        self.backward = backward


class Graph:
    """Tape of executed ops, replayed in reverse for backpropagation.

    A Graph (and the tensors built on it) is confined to one thread between
    construction and backward(). With record=False no tape is kept, which is
    the cheap mode for inference-only forward passes.
    """

    def __init__(self, record=True):
        self.record = record
        self._tape = []

    def __len__(self):
        return len(self._tape)

    def _emit(self, data, inputs, backward, op):
        if _cfg().debug:
            _check_finite(data, op)
        out = Tensor(data, dtype=data.dtype)
        out.track = any(t.track for t in inputs)
        if self.record and out.track:
            self._tape.append(_Node(out, backward))
        return out

    # ---- elementwise ----

    def add(self, a, b):
        """a + b; same shape, or b broadcast over leading axes of a."""
        da, db = a.data, b.data
        if da.shape != db.shape and da.shape[da.ndim - db.ndim:] != db.shape:
            raise ShapeError(f"add shape mismatch: {da.shape} vs {db.shape}")
        lead = tuple(range(da.ndim - db.ndim))

        def backward(g):
            if a.track:
                a.ensure_grad()
                a.grad += g
            if b.track:
                b.ensure_grad()
                b.grad += g.sum(axis=lead) if lead else g

        return self._emit(da + db, (a, b), backward, "add")

    def mul(self, a, b):
        """Elementwise a * b; same shape, or b broadcast over leading axes."""
        da, db = a.data, b.data
        if da.shape != db.shape and da.shape[da.ndim - db.ndim:] != db.shape:
            raise ShapeError(f"mul shape mismatch: {da.shape} vs {db.shape}")
        lead = tuple(range(da.ndim - db.ndim))

        def backward(g):
            if a.track:
                a.ensure_grad()
                a.grad += g * db
            if b.track:
                b.ensure_grad()
                gb = g * da
                b.grad += gb.sum(axis=lead) if lead else gb

        return self._emit(da * db, (a, b), backward, "mul")

    def scale(self, x, c):
        """x * c for a python scalar c."""
        c = float(c)

        def backward(g):
            if x.track:
                x.ensure_grad()
                x.grad += c * g

        return self._emit(x.data * c, (x,), backward, "scale")

    def tanh(self, x):
        out = np.tanh(x.data)

        def backward(g):
            if x.track:
                x.ensure_grad()
                x.grad += g * (1.0 - out * out)

        return self._emit(out, (x,), backward, "tanh")

    def sigmoid(self, x):
        # exp formulated from tanh for stability on large |x|
        out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

        def backward(g):
            if x.track:
                x.ensure_grad()
                x.grad += g * out * (1.0 - out)

        return self._emit(out, (x,), backward, "sigmoid")

    # ---- linear algebra ----

    def matmul(self, a, b):
        """Matrix product: 2dx2d, 1dx2d, 2dx1d, 1dx1d, or stacked 3dx2d."""
        da, db = a.data, b.data
        ok = (
            (da.ndim in (1, 2, 3) and db.ndim in (1, 2))
            and not (da.ndim == 3 and db.ndim == 1)
            and da.shape[-1] == db.shape[0]
        )
        if not ok:
            raise ShapeError(f"matmul shape mismatch: {da.shape} vs {db.shape}")

        def backward(g):
            if a.track:
                a.ensure_grad()
                if da.ndim == 1 and db.ndim == 1:
                    a.grad += g * db
                elif da.ndim == 1:  # (k,)@(k,n) -> (n,)
                    a.grad += db @ g
                elif db.ndim == 1:  # (m,k)@(k,) -> (m,)
                    a.grad += np.outer(g, db)
                else:
                    a.grad += g @ db.T
            if b.track:
                b.ensure_grad()
                if da.ndim == 1 and db.ndim == 1:
                    b.grad += g * da
                elif da.ndim == 1:
                    b.grad += np.outer(da, g)
                elif db.ndim == 1:
                    b.grad += da.T @ g
                elif da.ndim == 3:
                    b.grad += np.tensordot(da, g, axes=([0, 1], [0, 1]))
                else:
                    b.grad += da.T @ g

        return self._emit(da @ db, (a, b), backward, "matmul")

    def concat(self, parts, axis=0):
        """Concatenate same-rank tensors along axis."""
        parts = list(parts)
        if not parts:
            raise ShapeError("concat of zero tensors")
        rank = parts[0].data.ndim
        for p in parts[1:]:
            if p.data.ndim != rank:
                raise ShapeError(
                    f"concat rank mismatch: {parts[0].shape} vs {p.shape}"
                )
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.track:
                    p.ensure_grad()
                    idx = [slice(None)] * rank
                    idx[axis] = slice(lo, hi)
                    p.grad += g[tuple(idx)]

        return self._emit(
            np.concatenate([p.data for p in parts], axis=axis), parts, backward, "concat"
        )

    def slice_cols(self, x, start, stop):
        """Columns [start:stop) of a 2-D tensor."""
        if x.data.ndim != 2:
            raise ShapeError(f"slice_cols needs a 2-D tensor, got {x.shape}")

        def backward(g):
            if x.track:
                x.ensure_grad()
                x.grad[:, start:stop] += g

        return self._emit(np.ascontiguousarray(x.data[:, start:stop]), (x,), backward, "slice_cols")

    def reshape(self, x, shape):
        shape = tuple(shape)
        if int(np.prod(shape)) != x.size:
            raise ShapeError(f"reshape {x.shape} -> {shape} changes size")

        def backward(g):
            if x.track:
                x.ensure_grad()
                x.grad += g.reshape(x.data.shape)

        return self._emit(x.data.reshape(shape), (x,), backward, "reshape")

    def transpose2d(self, x):
        if x.data.ndim != 2:
            raise ShapeError(f"transpose2d needs a 2-D tensor, got {x.shape}")

        def backward(g):
            if x.track:
                x.ensure_grad()
                x.grad += g.T

        return self._emit(np.ascontiguousarray(x.data.T), (x,), backward, "transpose2d")

    # ---- reductions / nonlinear heads ----

    def softmax(self, x, mask=None):
        """Softmax over the last axis; masked-out entries get probability 0.

        `mask` is a boolean array of x's shape (True = keep). Rows must keep
        at least one entry.
        """
        z = x.data
        if mask is not None:
            if mask.shape != z.shape:
                raise ShapeError(f"softmax mask shape {mask.shape} != {z.shape}")
            z = np.where(mask, z, -1e30)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            if x.track:
                x.ensure_grad()
                x.grad += out * (g - (g * out).sum(axis=-1, keepdims=True))

        return self._emit(out, (x,), backward, "softmax")

    def embedding_lookup(self, table, ids):
        """Rows of a 2-D tensor selected by an integer index array."""
        if table.data.ndim != 2:
            raise ShapeError(f"embedding_lookup table must be 2-D, got {table.shape}")
        ids = np.asarray(ids, dtype=np.int64)

        def backward(g):
            if table.track:
                table.ensure_grad()
                np.add.at(table.grad, ids, g)

        return self._emit(table.data[ids], (table,), backward, "embedding_lookup")

    def cross_entropy(self, logits, target):
        """-log softmax(logits)[target].

        1-D logits with an int target give a scalar; 2-D (B,V) logits with an
        int vector give per-row losses (B,). Callers mask and average.
        """
        z = logits.data
        if z.ndim == 1:
            target = int(target)
            if not 0 <= target < z.shape[0]:
                raise ShapeError(f"target {target} out of range for logits {z.shape}")
            m = z.max()
            shifted = z - m
            lse = np.log(np.exp(shifted).sum())
            loss = np.asarray(lse - shifted[target], dtype=z.dtype)

            def backward(g):
                if logits.track:
                    logits.ensure_grad()
                    p = np.exp(shifted - lse)
                    p[target] -= 1.0
                    logits.grad += g * p

        elif z.ndim == 2:
            target = np.asarray(target, dtype=np.int64)
            if target.shape != (z.shape[0],):
                raise ShapeError(
                    f"targets shape {target.shape} incompatible with logits {z.shape}"
                )
            if target.size and (target.min() < 0 or target.max() >= z.shape[1]):
                raise ShapeError(f"target id out of range for logits {z.shape}")
            m = z.max(axis=1, keepdims=True)
            shifted = z - m
            lse = np.log(np.exp(shifted).sum(axis=1))
            rows = np.arange(z.shape[0])
            loss = lse - shifted[rows, target]

            def backward(g):
                if logits.track:
                    logits.ensure_grad()
                    p = np.exp(shifted - lse[:, None])
                    p[rows, target] -= 1.0
                    logits.grad += g[:, None] * p

        else:
            raise ShapeError(f"cross_entropy logits must be 1-D or 2-D, got {z.shape}")
        return self._emit(loss, (logits,), backward, "cross_entropy")

    def sum_all(self, x):
        """Sum of all entries, as a scalar tensor."""

        def backward(g):
            if x.track:
                x.ensure_grad()
                x.grad += g

        return self._emit(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), backward, "sum_all")

    def attention_mix(self, weights, states):
        """Weighted sum of per-position states.

        weights (B,n) x states (n,B,d) -> (B,d): out[b] = sum_j w[b,j]*S[j,b].
        """
        w, s = weights.data, states.data
        if w.ndim != 2 or s.ndim != 3 or s.shape[0] != w.shape[1] or s.shape[1] != w.shape[0]:
            raise ShapeError(f"attention_mix shape mismatch: {w.shape} vs {s.shape}")
        out = np.einsum("bn,nbd->bd", w, s)

        def backward(g):
            if weights.track:
                weights.ensure_grad()
                weights.grad += np.einsum("bd,nbd->bn", g, s)
            if states.track:
                states.ensure_grad()
                states.grad += np.einsum("bn,bd->nbd", w, g)

        return self._emit(out, (weights, states), backward, "attention_mix")


def backward(graph, loss):
    """Accumulate d(loss)/d(leaf) into every tracked leaf's grad buffer.

    Visits the tape in reverse execution order (a reverse topological order)
    exactly once. Gradients accumulate; callers zero them between steps.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not graph.record:
        raise ValueError("backward on a non-recording graph")
    loss.ensure_grad()
    loss.grad += np.ones_like(loss.data)
    for node in reversed(graph._tape):
        if node.out.grad is not None:
            node.backward(node.out.grad)


def zero_grads(params):
    for p in params:
        p.zero_grad()


# ---- LSTM cell ----


class LSTMParams:
    """Gate parameters of one LSTM cell, packed along columns as (i,f,o,g)."""

    def __init__(self, W, U, b):
        self.W = W
        self.U = U
        self.b = b
        if W.shape[1] != U.shape[1] or W.shape[1] != b.shape[0] or W.shape[1] % 4:
            raise ShapeError(
                f"inconsistent LSTM params: W{W.shape} U{U.shape} b{b.shape}"
            )
        self.hidden = W.shape[1] // 4
        if U.shape[0] != self.hidden:
            raise ShapeError(f"U rows {U.shape[0]} != hidden {self.hidden}")

    @classmethod
    def init(cls, rng, in_dim, hidden, prefix=""):
        """Uniform(+-sqrt(1/fan_in)) matrices, zero biases, forget bias +1."""
        W = Tensor(uniform_init(rng, (in_dim, 4 * hidden)), trainable=True, name=prefix + ".W")
        U = Tensor(uniform_init(rng, (hidden, 4 * hidden)), trainable=True, name=prefix + ".U")
        b = np.zeros(4 * hidden, dtype=default_dtype())
        b[hidden : 2 * hidden] = 1.0
        return cls(W, U, Tensor(b, trainable=True, name=prefix + ".b"))

    @classmethod
    def zeros(cls, in_dim, hidden):
        dt = default_dtype()
        return cls(
            Tensor(np.zeros((in_dim, 4 * hidden), dtype=dt), trainable=True),
            Tensor(np.zeros((hidden, 4 * hidden), dtype=dt), trainable=True),
            Tensor(np.zeros(4 * hidden, dtype=dt), trainable=True),
        )

    def parameters(self):
        return [self.W, self.U, self.b]


def uniform_init(rng, shape):
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)); fan_in is the first extent."""
    bound = float(np.sqrt(1.0 / shape[0]))
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


def lstm_cell(graph, x, h, c, params):
    """One LSTM step on a (B,in) input and (B,hidden) state pair.

    i = sig(xW_i+hU_i+b_i), f/o analogous, g = tanh(xW_g+hU_g+b_g),
    c' = f*c + i*g, h' = o*tanh(c').
    """
    H = params.hidden
    if x.shape[1] != params.W.shape[0]:
        raise ShapeError(f"lstm input width {x.shape[1]} != W rows {params.W.shape[0]}")
    if h.shape[1] != H or c.shape[1] != H:
        raise ShapeError(f"lstm state width {h.shape[1]}/{c.shape[1]} != hidden {H}")
    z = graph.add(graph.add(graph.matmul(x, params.W), graph.matmul(h, params.U)), params.b)
    i = graph.sigmoid(graph.slice_cols(z, 0, H))
    f = graph.sigmoid(graph.slice_cols(z, H, 2 * H))
    o = graph.sigmoid(graph.slice_cols(z, 2 * H, 3 * H))
    g = graph.tanh(graph.slice_cols(z, 3 * H, 4 * H))
    c2 = graph.add(graph.mul(f, c), graph.mul(i, g))
    h2 = graph.mul(o, graph.tanh(c2))
    return h2, c2
