"""Minimal reverse-mode differentiation over dense float64 arrays.

A :class:`Node` wraps a value array. Operations on nodes build a dynamic
tape; :meth:`Node.backward` walks it in reverse topological order and
accumulates gradients into every node that requires them.

Only scalar/array broadcasting is supported: binary ops require equal
shapes unless one operand is a Python scalar or a 0-d array.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Node",
    "as_node",
    "constant",
    "parameter",
    "stop_gradient",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "relu",
    "exp",
    "abs_",
    "square",
    "sum_",
    "mean",
    "reshape",
    "transpose",
    "stack_last",
    "l2_normalize_rows",
    "softmax_over_cells",
    "conv2d",
    "bilinear_warp",
    "linear_resize",
]


class Node:
    """A value in the computation graph.

    Parameters
    ----------
    value : array_like
        Forward value, stored as float64.
    requires_grad : bool
        Whether gradients should be accumulated into this node.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.value) if self.requires_grad else None
        # list of (parent, fn) where fn maps the upstream grad to the parent's grad
        self._parents = ()
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def backward(self):
        """Backpropagate from this scalar node."""
        backward(self)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def as_node(x):
    return x if isinstance(x, Node) else Node(x)


def constant(x):
    return Node(x, requires_grad=False)


def parameter(x, name=None):
    return Node(np.array(x, dtype=np.float64, copy=True), requires_grad=True, name=name)


def _make(value, parents):
    """Create a result node; ``parents`` is a sequence of (node, grad_fn)."""
    live = tuple((p, fn) for p, fn in parents if p.requires_grad)
    out = Node(value)
    if live:
        # interior nodes receive .grad only during backward
        out.requires_grad = True
        out._parents = live
    return out


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root):
    if root.value.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _toposort(root)
    # pending upstream gradients, keyed by node identity
    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        for parent, fn in node._parents:
            pg = fn(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def _check_same(a, b, op):
    if a.shape != b.shape and a.value.ndim != 0 and b.value.ndim != 0:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _unbroadcast(g, shape):
    return np.asarray(g.sum()).reshape(shape) if shape == () and g.shape != () else g


def stop_gradient(x):
    """Pass the value through while severing the backward edge."""
    return Node(as_node(x).value, requires_grad=False)


def add(a, b):
    a, b = as_node(a), as_node(b)
    _check_same(a, b, "add")
    return _make(
        a.value + b.value,
        [(a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape))],
    )


def sub(a, b):
    a, b = as_node(a), as_node(b)
    _check_same(a, b, "sub")
    return _make(
        a.value - b.value,
        [(a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(-g, b.shape))],
    )


def mul(a, b):
    a, b = as_node(a), as_node(b)
    _check_same(a, b, "mul")
    return _make(
        a.value * b.value,
        [
            (a, lambda g: _unbroadcast(g * b.value, a.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.shape)),
        ],
    )


def div(a, b):
    a, b = as_node(a), as_node(b)
    _check_same(a, b, "div")
    out = a.value / b.value
    return _make(
        out,
        [
            (a, lambda g: _unbroadcast(g / b.value, a.shape)),
            (b, lambda g: _unbroadcast(-g * out / b.value, b.shape)),
        ],
    )


def neg(a):
    a = as_node(a)
    return _make(-a.value, [(a, lambda g: -g)])


def matmul(a, b):
    a, b = as_node(a), as_node(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return _make(
        a.value @ b.value,
        [(a, lambda g: g @ b.value.T), (b, lambda g: a.value.T @ g)],
    )


def relu(a):
    a = as_node(a)
    on = a.value > 0
    return _make(np.where(on, a.value, 0.0), [(a, lambda g: g * on)])


def exp(a):
    a = as_node(a)
    out = np.exp(a.value)
    return _make(out, [(a, lambda g: g * out)])


def abs_(a):
    # subgradient sign(0) = 0
    a = as_node(a)
    s = np.sign(a.value)
    return _make(np.abs(a.value), [(a, lambda g: g * s)])


def square(a):
    a = as_node(a)
    return _make(a.value * a.value, [(a, lambda g: 2.0 * g * a.value)])


def sum_(a):
    a = as_node(a)
    return _make(a.value.sum(), [(a, lambda g: np.full(a.shape, float(g)))])


def mean(a):
    a = as_node(a)
    n = a.value.size
    return _make(a.value.mean(), [(a, lambda g: np.full(a.shape, float(g) / n))])


def reshape(a, shape):
    a = as_node(a)
    return _make(a.value.reshape(shape), [(a, lambda g: g.reshape(a.shape))])


def transpose(a, axes=None):
    a = as_node(a)
    inv = None if axes is None else np.argsort(axes)
    return _make(np.transpose(a.value, axes), [(a, lambda g: np.transpose(g, inv))])


def getitem(a, index):
    a = as_node(a)

    def fn(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return out

    return _make(a.value[index], [(a, fn)])


def stack_last(parts):
    """Stack equal-shape nodes along a new trailing axis."""
    parts = [as_node(p) for p in parts]
    shape = parts[0].shape
    for p in parts:
        if p.shape != shape:
            raise ValueError(f"stack_last: shape mismatch {p.shape} vs {shape}")
    value = np.stack([p.value for p in parts], axis=-1)
    return _make(value, [(p, lambda g, i=i: g[..., i]) for i, p in enumerate(parts)])


def l2_normalize_rows(a, eps=0.0):
    """Divide each vector along the last axis by its L2 norm.

    All-zero vectors map to zero with zero gradient.
    """
    a = as_node(a)
    norm = np.sqrt((a.value * a.value).sum(axis=-1, keepdims=True)) + eps
    live = norm > 0
    safe = np.where(live, norm, 1.0)
    out = np.where(live, a.value / safe, 0.0)

    def fn(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return np.where(live, (g - out * dot) / safe, 0.0)

    return _make(out, [(a, fn)])


def softmax_over_cells(a):
    """Softmax along the last axis."""
    a = as_node(a)
    z = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return out * (g - (g * out).sum(axis=-1, keepdims=True))

    return _make(out, [(a, fn)])


def conv2d(x, weight, bias=None):
    """Stride-1 'same' convolution on channel-last maps.

    x : (h, w, c_in); weight : (k, k, c_in, c_out) with odd k; bias : (c_out,)
    """
    x, weight = as_node(x), as_node(weight)
    if x.ndim != 3 or weight.ndim != 4:
        raise ValueError(f"conv2d: expected (h,w,c) and (k,k,cin,cout), got {x.shape}, {weight.shape}")
    k, k2, cin, cout = weight.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d: kernel must be square and odd, got {k}x{k2}")
    if x.shape[2] != cin:
        raise ValueError(f"conv2d: channel mismatch {x.shape[2]} vs {cin}")
    h, w, _ = x.shape
    r = k // 2
    padded = np.pad(x.value, ((r, r), (r, r), (0, 0)))
    # (h, w, cin, k, k) -> (h, w, k, k, cin)
    win = sliding_window_view(padded, (k, k), axis=(0, 1)).transpose(0, 1, 3, 4, 2)
    cols = win.reshape(h * w, k * k * cin)
    wmat = weight.value.reshape(k * k * cin, cout)
    out = (cols @ wmat).reshape(h, w, cout)
    parents = [
        (weight, lambda g: (cols.T @ g.reshape(h * w, cout)).reshape(weight.shape)),
    ]

    def dx(g):
        dcols = (g.reshape(h * w, cout) @ wmat.T).reshape(h, w, k, k, cin)
        dpad = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                dpad[i : i + h, j : j + w] += dcols[:, :, i, j]
        return dpad[r : r + h, r : r + w]

    parents.append((x, dx))
    if bias is not None:
        bias = as_node(bias)
        if bias.shape != (cout,):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({cout},)")
        out = out + bias.value
        parents.append((bias, lambda g: g.sum(axis=(0, 1))))
    return _make(out, parents)


def _bilinear_taps(px, py, h, w):
    """Four neighbor taps for every sample position.

    Returns (rows, cols, weights, dweight_dx, dweight_dy, valid) with a
    leading axis of length 4. Derivatives use the right-continuous
    subgradient at integer coordinates.
    """
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    rows, cols, wts, dwx, dwy = [], [], [], [], []
    for oy, wy, dy in ((0, 1.0 - fy, -1.0), (1, fy, 1.0)):
        for ox, wx, dx in ((0, 1.0 - fx, -1.0), (1, fx, 1.0)):
            rows.append(y0 + oy)
            cols.append(x0 + ox)
            wts.append(wx * wy)
            dwx.append(dx * wy)
            dwy.append(wx * dy)
    rows = np.stack(rows)
    cols = np.stack(cols)
    valid = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    return (
        np.where(valid, rows, 0),
        np.where(valid, cols, 0),
        np.where(valid, np.stack(wts), 0.0),
        np.where(valid, np.stack(dwx), 0.0),
        np.where(valid, np.stack(dwy), 0.0),
    )


def bilinear_warp(grid, flow):
    """Differentiable zero-padded bilinear warp.

    grid : (h, w) or (h, w, c) values to sample.
    flow : (h, w, 2) displacements (dx, dy) in cell units; output(p) samples
    ``grid`` at ``p + flow(p)``.
    """
    grid, flow = as_node(grid), as_node(flow)
    h, w = grid.shape[:2]
    if flow.shape != (h, w, 2):
        raise ValueError(f"bilinear_warp: flow shape {flow.shape} incompatible with grid {grid.shape}")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    rows, cols, wts, dwx, dwy = _bilinear_taps(xs + flow.value[..., 0], ys + flow.value[..., 1], h, w)
    vals = grid.value[rows, cols]  # (4, h, w[, c])
    extra = (slice(None),) * 3 + (None,) * (grid.ndim - 2)
    out = (wts[extra] * vals).sum(axis=0)

    def dgrid(g):
        acc = np.zeros_like(grid.value)
        for t in range(4):
            np.add.at(acc, (rows[t], cols[t]), wts[t][extra[1:]] * g)
        return acc

    def dflow(g):
        gx = (dwx[extra] * vals * g).sum(axis=0)
        gy = (dwy[extra] * vals * g).sum(axis=0)
        if grid.ndim == 3:
            gx, gy = gx.sum(axis=-1), gy.sum(axis=-1)
        return np.stack([gx, gy], axis=-1)

    return _make(out, [(grid, dgrid), (flow, dflow)])


def linear_resize(a, rows_matrix, cols_matrix):
    """Separable linear resampling of a (h, w, c) node.

    out[i, j] = sum_ab rows_matrix[i, a] * cols_matrix[j, b] * a[a, b]
    """
    a = as_node(a)
    R = np.asarray(rows_matrix, dtype=np.float64)
    C = np.asarray(cols_matrix, dtype=np.float64)
    out = np.einsum("ia,jb,abc->ijc", R, C, a.value)
    return _make(out, [(a, lambda g: np.einsum("ia,jb,ijc->abc", R, C, g))])
