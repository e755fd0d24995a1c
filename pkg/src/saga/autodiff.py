"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array and remembers how it was produced. Building an
expression appends closure-based backward rules to the implicit tape (the
parent links), and backward() replays them once in reverse topological
order, accumulating into .grad. Everything is float64; any op producing a
NaN or Inf raises NumericsError immediately so faults surface at the op
that caused them, not three modules later.
"""

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block; ops run on values only.
    Inference paths use this so forward passes leave no tape behind."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class NumericsError(ArithmeticError):
    """A tensor op produced a non-finite value."""


def _check_finite(data):
    if not np.all(np.isfinite(data)):
        raise NumericsError("non-finite value in tensor op")


class Tensor:
    """Node in the autodiff graph. data is always a float64 ndarray."""

    __slots__ = ("data", "grad", "_parents", "_vjp", "requires_grad")

    def __init__(self, data, requires_grad=False, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data)
        self.grad = None
        self.requires_grad = _grad_enabled and (
            requires_grad or any(p.requires_grad for p in _parents))
        self._parents = _parents if self.requires_grad else ()
        self._vjp = _vjp if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # operator sugar; the heavy lifting lives in the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        return pow_const(self, k)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Parameter(Tensor):
    """Named leaf tensor whose gradient persists across backward calls."""

    __slots__ = ("name",)

    def __init__(self, name, data):
        super().__init__(data, requires_grad=True)
        self.requires_grad = True  # immune to no_grad at construction time
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss):
    """Accumulate d(loss)/d(leaf) into .grad for every reachable tensor.

    loss must be scalar. Repeated calls without zeroing accumulate, which is
    what minibatch loops want. The walk is iterative so graph depth is not
    limited by the interpreter recursion limit, and each node's rule runs
    exactly once.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    # iterative post-order: execution order of an expression graph is already
    # topological, so a DFS collecting nodes after their parents works
    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in visited:
            continue
        if expanded:
            visited.add(id(node))
            order.append(node)
        else:
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))

    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        node._vjp(node.grad)
    # drop intermediate grads so a repeated backward contributes exactly once
    for node in order:
        if node._vjp is not None and not isinstance(node, Parameter):
            node.grad = None


def _unbroadcast(g, shape):
    """Sum gradient g down to the given broadcast-source shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, out_data, grad_a, grad_b):
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(grad_a(g), a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(grad_b(g), b.data.shape))

    return Tensor(out_data, _parents=(a, b), _vjp=vjp)


def _unary(a, out_data, grad_a):
    a = as_tensor(a)

    def vjp(g):
        if a.requires_grad:
            _accumulate(a, grad_a(g))

    return Tensor(out_data, _parents=(a,), _vjp=vjp)


# ---- arithmetic ----

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _binary(a, b, a.data + b.data, lambda g: g, lambda g: g)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _binary(a, b, a.data - b.data, lambda g: g, lambda g: -g)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _binary(a, b, a.data * b.data, lambda g: g * b.data, lambda g: g * a.data)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _binary(a, b, a.data / b.data,
                   lambda g: g / b.data,
                   lambda g: -g * a.data / (b.data * b.data))


def neg(a):
    a = as_tensor(a)
    return _unary(a, -a.data, lambda g: -g)


def pow_const(a, k):
    a = as_tensor(a)
    k = float(k)
    return _unary(a, a.data ** k, lambda g: g * k * a.data ** (k - 1.0))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _unary(a, out, lambda g: g * 0.5 / out)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _unary(a, out, lambda g: g * out)


def log(a):
    a = as_tensor(a)
    return _unary(a, np.log(a.data), lambda g: g / a.data)


def sin(a):
    a = as_tensor(a)
    return _unary(a, np.sin(a.data), lambda g: g * np.cos(a.data))


def cos(a):
    a = as_tensor(a)
    return _unary(a, np.cos(a.data), lambda g: -g * np.sin(a.data))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def softplus(a):
    """ln(1 + e^x), evaluated as x + ln(1 + e^-x) for large x to avoid overflow."""
    a = as_tensor(a)
    x = a.data
    out = np.where(x > 20.0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 20.0))))
    sig = 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))
    return _unary(a, out, lambda g: g * sig)


def leaky_relu(a, slope=0.01):
    a = as_tensor(a)
    factor = np.where(a.data > 0.0, 1.0, slope)
    return _unary(a, a.data * factor, lambda g: g * factor)


def relu(a):
    return leaky_relu(a, slope=0.0)


def clamp(a, lo=None, hi=None):
    """Elementwise clamp; gradient passes through strictly inside the bounds."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = np.ones_like(a.data)
    if lo is not None:
        inside = inside * (a.data > lo)
    if hi is not None:
        inside = inside * (a.data < hi)
    return _unary(a, out, lambda g: g * inside)


def smooth_l1(pred, target):
    """Huber-style loss: 0.5 d^2 inside |d|<1, |d|-0.5 outside, d = pred - target."""
    pred, target = as_tensor(pred), as_tensor(target)
    d = pred.data - target.data
    quad = np.abs(d) < 1.0
    out = np.where(quad, 0.5 * d * d, np.abs(d) - 0.5)
    local = np.where(quad, d, np.sign(d))
    return _binary(pred, target, out, lambda g: g * local, lambda g: -g * local)


def detach(a):
    """Cut the graph: same values, no gradient flows back."""
    return Tensor(as_tensor(a).data.copy())


# ---- shape ops ----

def reshape(a, shape):
    a = as_tensor(a)
    in_shape = a.data.shape
    return _unary(a, a.data.reshape(shape), lambda g: g.reshape(in_shape))


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _unary(a, a.data.transpose(axes), lambda g: g.transpose(inv))


def getitem(a, idx):
    a = as_tensor(a)
    in_shape = a.data.shape

    def grad(g):
        buf = np.zeros(in_shape)
        np.add.at(buf, idx, g)
        return buf

    return _unary(a, a.data[idx], grad)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])

    return Tensor(data, _parents=tuple(tensors), _vjp=vjp)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        slices = np.moveaxis(g, axis, 0)
        for t, gs in zip(tensors, slices):
            if t.requires_grad:
                _accumulate(t, gs)

    return Tensor(data, _parents=tuple(tensors), _vjp=vjp)


# ---- reductions ----

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    in_shape = a.data.shape

    def grad(g):
        if axis is None:
            return np.broadcast_to(g, in_shape).copy()
        gx = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gx, in_shape).copy()

    return _unary(a, a.data.sum(axis=axis, keepdims=keepdims), grad)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def _extreme(a, axis, keepdims, fn, argfn):
    a = as_tensor(a)
    out = fn(a.data, axis=axis, keepdims=keepdims)
    if axis is None:
        flat_idx = argfn(a.data)

        def grad(g):
            buf = np.zeros_like(a.data)
            buf.flat[flat_idx] = g
            return buf
    else:
        idx = argfn(a.data, axis=axis)

        def grad(g):
            gx = g if keepdims else np.expand_dims(g, axis)
            buf = np.zeros_like(a.data)
            np.put_along_axis(buf, np.expand_dims(idx, axis), gx, axis=axis)
            return buf

    return _unary(a, out, grad)


def tmin(a, axis=None, keepdims=False):
    """Min reduction; gradient flows to the first minimizer (ties broken by index)."""
    return _extreme(a, axis, keepdims, np.min, np.argmin)


def tmax(a, axis=None, keepdims=False):
    return _extreme(a, axis, keepdims, np.max, np.argmax)


def matmul(a, b):
    """np.matmul semantics, including stacked batch dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    out = np.matmul(a.data, b.data)

    def grad_a(g):
        if b.data.ndim == 1:
            ga = np.multiply.outer(g, b.data) if g.ndim else g * b.data
        else:
            gg = g[..., None, :] if a.data.ndim == 1 else g
            ga = np.matmul(gg, np.swapaxes(b.data, -1, -2))
            if a.data.ndim == 1:
                ga = ga[..., 0, :]
        return _unbroadcast(ga, a.data.shape)

    def grad_b(g):
        if a.data.ndim == 1:
            gb = np.multiply.outer(a.data, g) if b.data.ndim > 1 else a.data * g
        else:
            gg = g[..., :, None] if b.data.ndim == 1 else g
            gb = np.matmul(np.swapaxes(a.data, -1, -2), gg)
            if b.data.ndim == 1:
                gb = gb[..., 0]
        return _unbroadcast(gb, b.data.shape)

    return _binary(a, b, out, grad_a, grad_b)


def grad_check(builder, params, h=1e-5):
    """Compare analytic gradients against central finite differences.

    builder() must deterministically rebuild a scalar loss from the given
    parameters. Returns the max relative error over every coordinate, with
    denominator max(|analytic|, |numeric|, 1e-8). Meaningless if builder is
    not deterministic.
    """
    for p in params:
        p.zero_grad()
    backward(builder())
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = builder().item()
            flat[i] = orig - h
            f_minus = builder().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = ga.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
