"""Dense float32 tensors with reverse-mode gradients.

Every operation runs eagerly on numpy and, when gradients are enabled,
records itself on an implicit tape: each result keeps references to its
parent tensors plus a closure that pushes the output gradient back to
them. ``Tensor.backward`` walks that tape in reverse topological order.
The tape is acyclic by construction (a tensor can only consume tensors
that already exist), which is the graph invariant the rest of the
package relies on.

All data is float32 and row-major. Reductions use numpy's deterministic
summation, so identical inputs give bit-identical outputs run to run.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised when an op receives incompatibly shaped operands."""

    def __init__(self, op: str, detail: str):
        self.op = op
        self.detail = detail
        super().__init__(f"{op}: {detail}")


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_f32(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    return arr


class Tensor:
    """Dense float32 array, optionally participating in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = _as_f32(data)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Tensor rejects non-finite values (NaN/Inf) at construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    # -- internal constructor for op results: skips the finite check ------
    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(np.float32, copy=True)
        else:
            self.grad += g

    def backward(self, seed_grad: "Tensor | np.ndarray | None" = None):
        """Backpropagate from this tensor through the recorded tape.

        A non-scalar output needs an explicit ``seed_grad`` of its own
        shape; a scalar defaults to a seed of 1.
        """
        if seed_grad is None:
            if self.data.size != 1:
                raise ValueError("backward on a non-scalar output requires seed_grad")
            seed = np.ones_like(self.data)
        else:
            seed = seed_grad.data if isinstance(seed_grad, Tensor) else _as_f32(seed_grad)
            if seed.shape != self.data.shape:
                raise ShapeError("backward", f"seed_grad shape {seed.shape} != output shape {self.data.shape}")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self._accumulate(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -_as_f32(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes):
        return transpose(self, axes)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float32))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce ``grad`` back to ``shape`` under trailing-dim broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcastable(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    for x, y in zip(reversed(a), reversed(b)):
        if x != y and x != 1 and y != 1:
            return False
    return True


# -- elementwise arithmetic ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError("add", f"shapes {a.shape} and {b.shape} do not broadcast")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._result(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError("mul", f"shapes {a.shape} and {b.shape} do not broadcast")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._result(out_data, (a, b), backward)


def square(x) -> Tensor:
    x = _wrap(x)
    out_data = x.data * x.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(2.0 * x.data * g)

    return Tensor._result(out_data, (x,), backward)


def sqrt(x) -> Tensor:
    x = _wrap(x)
    out_data = np.sqrt(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g / (2.0 * out_data + 1e-12))

    return Tensor._result(out_data, (x,), backward)


def abs_(x) -> Tensor:
    x = _wrap(x)
    out_data = np.abs(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * np.sign(x.data))

    return Tensor._result(out_data, (x,), backward)


def tanh(x) -> Tensor:
    x = _wrap(x)
    out_data = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - out_data * out_data))

    return Tensor._result(out_data, (x,), backward)


def round_ste(x, scale: float) -> Tensor:
    """Round ``x * scale`` to integers (half away from zero) and divide back.

    The backward pass is the straight-through identity: the rounding step
    contributes no Jacobian of its own.
    """
    x = _wrap(x)
    y = x.data * np.float32(scale)
    rounded = np.copysign(np.floor(np.abs(y) + np.float32(0.5)), y)
    out_data = (rounded / np.float32(scale)).astype(np.float32)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)

    return Tensor._result(out_data, (x,), backward)


# -- reductions --------------------------------------------------------------

def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float32)

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.shape).astype(np.float32))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg, x.shape).astype(np.float32))

    return Tensor._result(np.asarray(out_data, dtype=np.float32), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = 1
        for ax in axes:
            n *= x.shape[ax]
    out_data = x.data.mean(axis=axis, keepdims=keepdims, dtype=np.float32)

    def backward(g):
        if not x.requires_grad:
            return
        scale = np.float32(1.0 / n)
        if axis is None:
            x._accumulate(np.broadcast_to(g * scale, x.shape).astype(np.float32))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg * scale, x.shape).astype(np.float32))

    return Tensor._result(np.asarray(out_data, dtype=np.float32), (x,), backward)


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeError("matmul", "operands must have at least 1 dim")
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError("matmul", f"inner dims differ: {a.shape} @ {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if b.ndim > 1 else np.multiply.outer(g, b.data)
            a._accumulate(_unbroadcast(ga, a.shape) if ga.shape != a.shape else ga)
        if b.requires_grad:
            if a.ndim > 1:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            else:
                gb = np.multiply.outer(a.data, g)
            b._accumulate(_unbroadcast(gb, b.shape) if gb.shape != b.shape else gb)

    return Tensor._result(out_data, (a, b), backward)


# -- nonlinear blocks --------------------------------------------------------

def softmax(x, axis: int = -1) -> Tensor:
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            x._accumulate(out_data * (g - dot))

    return Tensor._result(out_data.astype(np.float32), (x,), backward)


def rms_norm(x, gain, eps: float = 1e-6) -> Tensor:
    """x / sqrt(mean(x^2, last axis) + eps) * gain."""
    x, gain = _wrap(x), _wrap(gain)
    if gain.shape != x.shape[-1:]:
        raise ShapeError("rms_norm", f"gain shape {gain.shape} must match last dim of {x.shape}")
    n = x.shape[-1]
    ms = (x.data * x.data).mean(axis=-1, keepdims=True, dtype=np.float32)
    r = 1.0 / np.sqrt(ms + np.float32(eps))
    normed = x.data * r
    out_data = (normed * gain.data).astype(np.float32)

    def backward(g):
        if x.requires_grad:
            gg = g * gain.data
            # d/dx [x_i * r]: r * g_i - x_i * r^3 / n * sum_j g_j x_j
            dot = (gg * x.data).sum(axis=-1, keepdims=True)
            x._accumulate((gg * r - x.data * (r ** 3) * dot / np.float32(n)).astype(np.float32))
        if gain.requires_grad:
            gg = (g * normed).reshape(-1, n).sum(axis=0)
            gain._accumulate(gg.astype(np.float32))

    return Tensor._result(out_data, (x, gain), backward)


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradient scatter-adds into the table."""
    table = _wrap(table)
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError("embedding", f"ids out of range [0, {table.shape[0]})")
    out_data = table.data[idx]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            table._accumulate(gt)

    return Tensor._result(out_data, (table,), backward)


# -- shape ops ---------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return Tensor._result(out_data, (x,), backward)


def transpose(x, axes) -> Tensor:
    x = _wrap(x)
    out_data = np.ascontiguousarray(x.data.transpose(axes))
    inv = np.argsort(axes)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.ascontiguousarray(g.transpose(inv)))

    return Tensor._result(out_data, (x,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", "needs at least one tensor")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor._result(out_data, tuple(tensors), backward)


def slice_(x, key) -> Tensor:
    x = _wrap(x)
    out_data = x.data[key]
    if np.isscalar(out_data) or out_data.ndim == 0:
        out_data = np.asarray(out_data, dtype=np.float32)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[key] = g
            x._accumulate(gx)

    return Tensor._result(out_data, (x,), backward)


# -- positional rotation (used by attention) ---------------------------------

def rope(x, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate interleaved pairs of the last dim by per-position angles.

    ``x`` is (..., len, head_dim) with even head_dim; ``cos``/``sin`` are
    (len, head_dim//2). The backward pass rotates the gradient by the
    negated angles (rotations are orthogonal).
    """
    x = _wrap(x)
    hd = x.shape[-1]
    if hd % 2 != 0:
        raise ShapeError("rope", f"head_dim {hd} must be even")
    xr = x.data.reshape(x.shape[:-1] + (hd // 2, 2))
    x0, x1 = xr[..., 0], xr[..., 1]
    out = np.empty_like(xr)
    out[..., 0] = x0 * cos - x1 * sin
    out[..., 1] = x0 * sin + x1 * cos
    out_data = out.reshape(x.shape)

    def backward(g):
        if not x.requires_grad:
            return
        gr = g.reshape(x.shape[:-1] + (hd // 2, 2))
        g0, g1 = gr[..., 0], gr[..., 1]
        gx = np.empty_like(gr)
        gx[..., 0] = g0 * cos + g1 * sin
        gx[..., 1] = -g0 * sin + g1 * cos
        x._accumulate(gx.reshape(x.shape))

    return Tensor._result(out_data, (x,), backward)


# -- convolution family (kernels module does the heavy lifting) ---------------

def conv1d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Batched 1-D convolution: x (B, Cin, L), w (Cout, Cin, K) -> (B, Cout, Lout)."""
    x, w = _wrap(x), _wrap(w)
    bias = _wrap(b) if b is not None else None
    B, cin, L = x.shape
    cout, cin_w, K = w.shape
    if cin != cin_w:
        raise ShapeError("conv1d", f"in-channels differ: x has {cin}, w has {cin_w}")
    cols = kernels.im2col(x.data, K, stride, padding)  # (B, Lout, Cin*K)
    out = np.matmul(cols, w.data.reshape(cout, cin * K).T)  # (B, Lout, Cout)
    if bias is not None:
        out += bias.data
    out_data = np.ascontiguousarray(out.transpose(0, 2, 1))

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 1))  # (B, Lout, Cout)
        if w.requires_grad:
            gw = np.matmul(gt.reshape(-1, cout).T, cols.reshape(-1, cin * K))
            w._accumulate(gw.reshape(w.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gt.sum(axis=(0, 1)))
        if x.requires_grad:
            gcols = np.matmul(gt, w.data.reshape(cout, cin * K))  # (B, Lout, Cin*K)
            x._accumulate(kernels.col2im(gcols, cin, L, K, stride, padding))

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor._result(out_data, parents, backward)


def conv1d_transpose(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of conv1d: x (B, Cin, L), w (Cin, Cout, K) -> (B, Cout, L*stride).

    Output length is ``(L-1)*stride + K - 2*padding``; with the package's
    K/stride/padding conventions that equals ``L*stride`` exactly.
    """
    x, w = _wrap(x), _wrap(w)
    bias = _wrap(b) if b is not None else None
    B, cin, L = x.shape
    cin_w, cout, K = w.shape
    if cin != cin_w:
        raise ShapeError("conv1d_transpose", f"in-channels differ: x has {cin}, w has {cin_w}")
    xt = np.ascontiguousarray(x.data.transpose(0, 2, 1))  # (B, L, Cin)
    cols = np.matmul(xt, w.data.reshape(cin, cout * K))  # (B, L, Cout*K)
    out_data = kernels.col2im(cols, cout, (L - 1) * stride + K - 2 * padding, K, stride, padding)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None]

    def backward(g):
        gcols = kernels.im2col(g, K, stride, padding)  # (B, L, Cout*K)
        if x.requires_grad:
            gx = np.matmul(gcols, w.data.reshape(cin, cout * K).T)
            x._accumulate(np.ascontiguousarray(gx.transpose(0, 2, 1)))
        if w.requires_grad:
            gw = np.matmul(xt.reshape(-1, cin).T, gcols.reshape(-1, cout * K))
            w._accumulate(gw.reshape(w.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2)))

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor._result(out_data, parents, backward)


def frame(x, size: int, hop: int) -> Tensor:
    """Slice x (B, L) into overlapping windows (B, n_frames, size)."""
    x = _wrap(x)
    out_data = kernels.extract_frames(x.data, size, hop)

    def backward(g):
        if x.requires_grad:
            x._accumulate(kernels.overlap_add(g, hop, x.shape[-1]))

    return Tensor._result(out_data, (x,), backward)


# -- gradient verification ----------------------------------------------------

_FD_SPECS = {
    "add": dict(n_inputs=2, build=lambda shapes: shapes, fn=lambda a, b: a + b),
    "mul": dict(n_inputs=2, build=lambda shapes: shapes, fn=lambda a, b: a * b),
    "matmul": dict(n_inputs=2, build=lambda shapes: shapes, fn=lambda a, b: a @ b),
    "tanh": dict(n_inputs=1, build=lambda shapes: shapes, fn=np.tanh),
    "square": dict(n_inputs=1, build=lambda shapes: shapes, fn=lambda a: a * a),
    "sqrt": dict(n_inputs=1, build=lambda shapes: shapes, fn=np.sqrt, positive=True),
    "sum": dict(n_inputs=1, build=lambda shapes: shapes, fn=lambda a: np.asarray(a.sum())),
    "mean": dict(n_inputs=1, build=lambda shapes: shapes, fn=lambda a: np.asarray(a.mean())),
    "softmax": dict(n_inputs=1, build=lambda shapes: shapes,
                    fn=lambda a: np.exp(a - a.max(-1, keepdims=True)) / np.exp(a - a.max(-1, keepdims=True)).sum(-1, keepdims=True)),
    "rmsnorm": dict(n_inputs=2, build=lambda shapes: [shapes[0], shapes[0][-1:]],
                    fn=lambda a, g: a / np.sqrt((a * a).mean(-1, keepdims=True) + 1e-6) * g),
}


def _tape_forward(op_kind: str, tensors: list[Tensor]) -> Tensor:
    if op_kind == "add":
        return add(*tensors)
    if op_kind == "mul":
        return mul(*tensors)
    if op_kind == "matmul":
        return matmul(*tensors)
    if op_kind == "tanh":
        return tanh(tensors[0])
    if op_kind == "square":
        return square(tensors[0])
    if op_kind == "sqrt":
        return sqrt(tensors[0])
    if op_kind == "sum":
        return sum_(tensors[0])
    if op_kind == "mean":
        return mean(tensors[0])
    if op_kind == "softmax":
        return softmax(tensors[0])
    if op_kind == "rmsnorm":
        return rms_norm(tensors[0], tensors[1])
    raise ValueError(f"finite_diff_check: unsupported op kind {op_kind!r}")


def finite_diff_check(op_kind: str, input_shapes, tolerance: float = 1e-3,
                      seed: int = 0, eps: float = 1e-3) -> float:
    """Compare tape gradients against central finite differences.

    The numeric side evaluates an independent float64 implementation of
    the op. Returns the max over elements of
    ``|analytic - numeric| / (|numeric| + 1e-8)``; the caller compares
    against ``tolerance``.
    """
    if op_kind not in _FD_SPECS:
        raise ValueError(f"finite_diff_check: unsupported op kind {op_kind!r}")
    spec = _FD_SPECS[op_kind]
    shapes = spec["build"]([tuple(s) for s in input_shapes])
    if len(shapes) != spec["n_inputs"]:
        raise ShapeError(op_kind, f"expected {spec['n_inputs']} input shapes, got {len(shapes)}")
    rng = np.random.default_rng(seed)
    raw = [rng.uniform(0.5, 1.5, s) if spec.get("positive") else rng.standard_normal(s) for s in shapes]
    raw = [r.astype(np.float64) for r in raw]

    tensors = [Tensor(r, requires_grad=True) for r in raw]
    out = _tape_forward(op_kind, tensors)
    weights = rng.standard_normal(out.shape).astype(np.float32)
    loss = sum_(mul(out, Tensor(weights)))
    loss.backward()
    analytic = [t.grad.astype(np.float64) for t in tensors]

    ref = spec["fn"]
    w64 = weights.astype(np.float64)

    def ref_loss(args):
        return float((ref(*args) * w64).sum())

    max_rel = 0.0
    for i, base in enumerate(raw):
        flat = base.reshape(-1)
        g_num = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = ref_loss(raw)
            flat[j] = orig - eps
            lo = ref_loss(raw)
            flat[j] = orig
            g_num[j] = (hi - lo) / (2 * eps)
        rel = np.abs(analytic[i].reshape(-1) - g_num) / (np.abs(g_num) + 1e-8)
        max_rel = max(max_rel, float(rel.max()))
    return max_rel
