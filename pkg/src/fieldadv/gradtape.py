"""Reverse-mode automatic differentiation over dense float64 arrays.

Forward values are computed eagerly; every op appends a node holding its
vector-Jacobian product to the :class:`Tape` that owns its inputs.
``Tape.backward`` walks the nodes in reverse creation order, which is a
valid topological order by construction.

Element-wise binary ops accept equal shapes or a 0-d scalar operand only;
anything else must go through :func:`broadcast_to` explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are invalid for an op."""

    def __init__(self, op: str, *shapes, detail: str = ""):
        msg = f"{op}: incompatible shapes " + ", ".join(str(tuple(s)) for s in shapes)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.op = op
        self.shapes = shapes


@dataclass
class _Node:
    kind: str
    inputs: tuple
    vjp: Callable | None
    requires_grad: bool
    is_leaf: bool
    shape: tuple


class Tensor:
    """A value registered on a tape.

    ``value`` is a float64 ndarray; ``node_id`` indexes ``tape.nodes``.
    """

    __slots__ = ("value", "tape", "node_id", "requires_grad")
    __array_priority__ = 1000

    def __init__(self, value, tape: "Tape", node_id: int, requires_grad: bool):
        self.value = value
        self.tape = tape
        self.node_id = node_id
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, node={self.node_id}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.value)

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Append-only record of operations.

    Gradients are keyed by ``node_id``. Running ``backward`` twice with the
    same seed gives identical results since vjps never mutate saved state.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def release(self) -> None:
        """Drop every node. vjp closures hold tensors that point back at the
        tape, so long loops should release tapes instead of waiting for the
        cycle collector."""
        self.nodes.clear()

    def leaf(self, value, requires_grad: bool = True) -> Tensor:
        v = np.array(value, dtype=DTYPE)
        return self._push("leaf", (), v, None, requires_grad, True)

    def const(self, value) -> Tensor:
        return self.leaf(value, requires_grad=False)

    def record(self, kind: str, inputs: Sequence[Tensor], value, vjp: Callable) -> Tensor:
        """Register a computed ``value`` produced from ``inputs``.

        ``vjp(g)`` must return one gradient (or None) per input.
        """
        for t in inputs:
            if t.tape is not self:
                raise ValueError(f"{kind}: input tensor belongs to another tape")
        rg = any(t.requires_grad for t in inputs)
        return self._push(kind, tuple(t.node_id for t in inputs), value,
                          vjp if rg else None, rg, False)

    def _push(self, kind, inputs, value, vjp, rg, is_leaf) -> Tensor:
        nid = len(self.nodes)
        self.nodes.append(_Node(kind, inputs, vjp, rg, is_leaf, np.shape(value)))
        return Tensor(value, self, nid, rg)

    def backward(self, root: Tensor, seed=None) -> dict[int, np.ndarray]:
        """Gradient of ``root`` w.r.t. every requires_grad leaf on this tape."""
        if root.tape is not self:
            raise ValueError("backward: root was not produced on this tape")
        if root.value.size != 1:
            raise ShapeError("backward", root.shape, detail="root must be scalar")
        grads: dict[int, np.ndarray] = {}
        g0 = np.ones_like(root.value) if seed is None else np.array(seed, dtype=DTYPE).reshape(root.shape)
        grads[root.node_id] = g0
        for nid in range(root.node_id, -1, -1):
            node = self.nodes[nid]
            if node.is_leaf or node.vjp is None:
                continue
            g = grads.pop(nid, None)
            if g is None:
                continue
            in_grads = node.vjp(g)
            for iid, ig in zip(node.inputs, in_grads):
                if ig is None or not self.nodes[iid].requires_grad:
                    continue
                if iid in grads:
                    grads[iid] = grads[iid] + ig
                else:
                    grads[iid] = ig
        out = {}
        for nid, node in enumerate(self.nodes):
            if node.is_leaf and node.requires_grad:
                g = grads.get(nid)
                out[nid] = np.zeros(node.shape, dtype=DTYPE) if g is None else g
        return out


# ---------------------------------------------------------------------------
# helpers

def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
        if isinstance(x, (list, tuple)):
            for y in x:
                if isinstance(y, Tensor):
                    return y.tape
    raise TypeError("op needs at least one Tensor operand")


def _lift(tape: Tape, x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return tape.const(x)


def _is_scalar(t: Tensor) -> bool:
    return t.value.ndim == 0


def _check_elementwise(op, a: Tensor, b: Tensor):
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(op, a.shape, b.shape, detail="element-wise ops need equal shapes or a scalar")


def _unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    return np.asarray(g.sum()).reshape(shape)


# ---------------------------------------------------------------------------
# element-wise arithmetic

def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_elementwise("add", a, b)
    sa, sb = a.shape, b.shape
    return tape.record("add", (a, b), a.value + b.value,
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_elementwise("sub", a, b)
    sa, sb = a.shape, b.shape
    return tape.record("sub", (a, b), a.value - b.value,
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_elementwise("mul", a, b)
    av, bv = a.value, b.value
    return tape.record("mul", (a, b), av * bv,
                       lambda g: (_unbroadcast(g * bv, av.shape) if a.requires_grad else None,
                                  _unbroadcast(g * av, bv.shape) if b.requires_grad else None))


def div(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_elementwise("div", a, b)
    av, bv = a.value, b.value
    out = av / bv

    def vjp(g):
        ga = _unbroadcast(g / bv, av.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bv, bv.shape) if b.requires_grad else None
        return ga, gb
    return tape.record("div", (a, b), out, vjp)


def neg(a: Tensor) -> Tensor:
    return a.tape.record("neg", (a,), -a.value, lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    av = a.value
    return a.tape.record("power", (a,), av ** p, lambda g: (g * p * av ** (p - 1.0),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return a.tape.record("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    av = a.value
    return a.tape.record("log", (a,), np.log(av), lambda g: (g / av,))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return a.tape.record("relu", (a,), np.where(mask, a.value, 0.0), lambda g: (g * mask,))


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid_np(np.atleast_1d(a.value)).reshape(a.shape)
    return a.tape.record("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


def softplus(a: Tensor) -> Tensor:
    x = a.value
    out = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    s = _sigmoid_np(np.atleast_1d(x)).reshape(x.shape)
    return a.tape.record("softplus", (a,), out, lambda g: (g * s,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.value
    inside = (x >= lo) & (x <= hi)
    return a.tape.record("clip", (a,), np.clip(x, lo, hi), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# linear algebra and reductions

def matmul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    if av.ndim == 0 or bv.ndim == 0:
        raise ShapeError("matmul", av.shape, bv.shape, detail="scalars not allowed")
    k_a = av.shape[-1]
    k_b = bv.shape[0] if bv.ndim == 1 else bv.shape[-2]
    if k_a != k_b:
        raise ShapeError("matmul", av.shape, bv.shape, detail="inner dimensions differ")
    if bv.ndim > 2 and av.shape[:-2] != bv.shape[:-2]:
        raise ShapeError("matmul", av.shape, bv.shape, detail="batch dimensions differ")
    out = av @ bv

    def vjp(g):
        ga = gb = None
        if av.ndim == 1 and bv.ndim == 1:
            ga, gb = g * bv, g * av
        elif bv.ndim == 1:
            ga = g[..., None] * bv
            gb = av.reshape(-1, k_a).T @ g.reshape(-1)
        elif av.ndim == 1:
            ga = bv @ g
            gb = np.outer(av, g)
        else:
            ga = g @ np.swapaxes(bv, -1, -2)
            if bv.ndim == 2:
                gb = av.reshape(-1, k_a).T @ g.reshape(-1, bv.shape[-1])
            else:
                gb = np.swapaxes(av, -1, -2) @ g
        return ga, gb
    return tape.record("matmul", (a, b), out, vjp)


def sum(a: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    shape = a.shape
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return a.tape.record("sum", (a,), np.asarray(out, dtype=DTYPE), vjp)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    shape = a.shape
    out = np.mean(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, shape).copy(),)
    return a.tape.record("mean", (a,), np.asarray(out, dtype=DTYPE), vjp)


def cumsum(a: Tensor, axis: int = -1, exclusive: bool = False) -> Tensor:
    x = a.value
    out = np.cumsum(x, axis=axis)
    if exclusive:
        # shift rather than subtract so the last element drops out exactly
        out = np.roll(out, 1, axis=axis)
        np.moveaxis(out, axis, 0)[0] = 0.0

    def vjp(g):
        rev = np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis)
        if exclusive:
            rev = np.roll(rev, -1, axis=axis)
            np.moveaxis(rev, axis, 0)[-1] = 0.0
        return (rev,)
    return a.tape.record("cumsum", (a,), out, vjp)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, shape) from None
    return a.tape.record("reshape", (a,), out, lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes=None) -> Tensor:
    out = np.transpose(a.value, axes)
    inv = None if axes is None else np.argsort(axes)
    return a.tape.record("transpose", (a,), out, lambda g: (np.transpose(g, inv),))


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    try:
        out = np.broadcast_to(a.value, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", old, shape) from None
    lead = len(shape) - len(old)

    def vjp(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, s in enumerate(old) if s == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)
    return a.tape.record("broadcast_to", (a,), out, vjp)


def getitem(a: Tensor, key) -> Tensor:
    """Slicing (basic or integer-array indexing)."""
    shape = a.shape
    out = np.array(a.value[key], dtype=DTYPE)

    def vjp(g):
        gz = np.zeros(shape, dtype=DTYPE)
        np.add.at(gz, key, g)
        return (gz,)
    return a.tape.record("slice", (a,), out, vjp)


def concat(ts: Sequence, axis: int = 0) -> Tensor:
    tape = _tape_of(ts)
    ts = [_lift(tape, t) for t in ts]
    ref = list(ts[0].shape)
    ax = axis % len(ref)
    for t in ts[1:]:
        s = list(t.shape)
        if len(s) != len(ref) or any(s[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", *[t.shape for t in ts])
    sizes = [t.shape[ax] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.value for t in ts], axis=ax)
    return tape.record("concat", ts, out, lambda g: tuple(np.split(g, splits, axis=ax)))


def stack(ts: Sequence, axis: int = 0) -> Tensor:
    tape = _tape_of(ts)
    ts = [_lift(tape, t) for t in ts]
    return concat([expand_dims(t, axis) for t in ts], axis=axis)


def expand_dims(a: Tensor, axis: int) -> Tensor:
    return reshape(a, np.expand_dims(a.value, axis).shape)


def gather(a: Tensor, idx, axis: int = 0) -> Tensor:
    idx = np.asarray(idx)
    if idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis]):
        raise ShapeError("gather", a.shape, idx.shape, detail="index out of range")
    shape = a.shape
    out = np.take(a.value, idx, axis=axis)

    def vjp(g):
        gz = np.zeros(shape, dtype=DTYPE)
        if axis == 0:
            np.add.at(gz, idx, g)
        else:
            gm = np.moveaxis(gz, axis, 0)
            np.add.at(gm, idx, np.moveaxis(g, list(range(axis, axis + idx.ndim)), list(range(idx.ndim))))
        return (gz,)
    return a.tape.record("gather", (a,), out, vjp)


def scatter_add(a: Tensor, idx, size: int) -> Tensor:
    """out[idx[i]] += a[i] along axis 0 into a zero array of length ``size``."""
    idx = np.asarray(idx)
    if idx.shape != a.shape[: idx.ndim]:
        raise ShapeError("scatter_add", a.shape, idx.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise ShapeError("scatter_add", a.shape, idx.shape, detail="index out of range")
    out = np.zeros((size,) + a.shape[idx.ndim:], dtype=DTYPE)
    np.add.at(out, idx, a.value)
    return a.tape.record("scatter_add", (a,), out, lambda g: (g[idx],))


# ---------------------------------------------------------------------------
# softmax family

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.value
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    s = z / z.sum(axis=axis, keepdims=True)
    return a.tape.record("softmax", (a,), s,
                         lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.value
    m = x.max(axis=axis, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))
    out = x - lse
    s = np.exp(out)
    return a.tape.record("log_softmax", (a,), out,
                         lambda g: (g - s * g.sum(axis=axis, keepdims=True),))


# ---------------------------------------------------------------------------
# convolution and pooling (NCHW)

def _conv_forward(x, w, stride, padding):
    k_h, k_w = w.shape[2], w.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    win = sliding_window_view(xp, (k_h, k_w), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # N,Ho,Wo,O
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), win, xp.shape


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, zero padding, square stride."""
    tape = _tape_of(x, w, b)
    x, w = _lift(tape, x), _lift(tape, w)
    xv, wv = x.value, w.value
    if xv.ndim != 4 or wv.ndim != 4 or xv.shape[1] != wv.shape[1]:
        raise ShapeError("conv2d", xv.shape, wv.shape, detail="need x[N,C,H,W], w[O,C,kh,kw]")
    k_h, k_w = wv.shape[2], wv.shape[3]
    if xv.shape[2] + 2 * padding < k_h or xv.shape[3] + 2 * padding < k_w:
        raise ShapeError("conv2d", xv.shape, wv.shape, detail="kernel larger than padded input")
    out, win, pshape = _conv_forward(xv, wv, stride, padding)
    inputs = [x, w]
    if b is not None:
        b = _lift(tape, b)
        if b.shape != (wv.shape[0],):
            raise ShapeError("conv2d", wv.shape, b.shape, detail="bias length must equal out channels")
        out = out + b.value[None, :, None, None]
        inputs.append(b)
    H, W = xv.shape[2], xv.shape[3]
    Ho, Wo = out.shape[2], out.shape[3]

    def vjp(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            hd, wd = (Ho - 1) * stride + 1, (Wo - 1) * stride + 1
            if stride > 1:
                gd = np.zeros(g.shape[:2] + (hd, wd), dtype=DTYPE)
                gd[:, :, ::stride, ::stride] = g
            else:
                gd = g
            wf = np.ascontiguousarray(wv[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
            gd = np.pad(gd, ((0, 0), (0, 0), (k_h - 1, k_h - 1), (k_w - 1, k_w - 1)))
            full, _, _ = _conv_forward(gd, wf, 1, 0)
            gxp = np.zeros((xv.shape[0], xv.shape[1]) + pshape[2:], dtype=DTYPE)
            gxp[:, :, : full.shape[2], : full.shape[3]] = full
            gx = gxp[:, :, padding: padding + H, padding: padding + W]
        res = [gx, gw]
        if b is not None:
            res.append(g.sum(axis=(0, 2, 3)))
        return tuple(res)
    return tape.record("conv2d", inputs, out, vjp)


def max_pool2d(x: Tensor, k: int = 2) -> Tensor:
    xv = x.value
    N, C, H, W = xv.shape
    if H % k or W % k:
        raise ShapeError("max_pool2d", xv.shape, detail=f"spatial size not divisible by {k}")
    blocks = xv.reshape(N, C, H // k, k, W // k, k).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H // k, W // k, k * k)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(N, C, H // k, W // k, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H, W)
        return (gb,)
    return x.tape.record("max_pool2d", (x,), out, vjp)


# ---------------------------------------------------------------------------
# dispatch by name

OPS: dict[str, Callable] = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg,
    "matmul": matmul, "sum": sum, "mean": mean, "relu": relu,
    "sigmoid": sigmoid, "softplus": softplus, "exp": exp, "log": log,
    "power": power, "gather": gather, "scatter_add": scatter_add,
    "conv2d": conv2d, "max_pool2d": max_pool2d, "softmax": softmax,
    "log_softmax": log_softmax, "concat": concat, "slice": getitem,
    "reshape": reshape, "transpose": transpose, "broadcast_to": broadcast_to,
    "cumsum": cumsum, "clip": clip,
}


def record(op_kind: str, *inputs, **attrs) -> Tensor:
    """Apply the named op; the result is registered on the inputs' tape."""
    try:
        fn = OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown op kind {op_kind!r}") from None
    return fn(*inputs, **attrs)


# ---------------------------------------------------------------------------
# gradient verification

def finite_diff_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5, indices=None) -> float:
    """Max element-wise relative error between taped and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor on the same tape. ``indices``
    optionally restricts the comparison to a subset of flat positions.
    Returns ``inf`` if either gradient has a NaN.
    """
    if not (0 < eps <= 1e-2):
        raise ValueError("eps must lie in (0, 1e-2]")
    x = np.array(x, dtype=DTYPE)
    tape = Tape()
    xt = tape.leaf(x)
    y = f(xt)
    g_ad = tape.backward(y)[xt.node_id].ravel()

    def fval(v):
        t = Tape()
        return float(f(t.leaf(v, requires_grad=False)).value)

    flat = x.ravel()
    idx = range(flat.size) if indices is None else np.asarray(indices).ravel()
    worst = 0.0
    for i in idx:
        xp, xm = flat.copy(), flat.copy()
        xp[i] += eps
        xm[i] -= eps
        g_fd = (fval(xp.reshape(x.shape)) - fval(xm.reshape(x.shape))) / (2 * eps)
        ga = g_ad[i]
        if not (np.isfinite(ga) and np.isfinite(g_fd)):
            return float("inf")
        err = abs(ga - g_fd) / max(1e-8, abs(ga) + abs(g_fd))
        worst = max(worst, err)
    return worst
