"""Reverse-mode automatic differentiation over dense float64/complex128 arrays.

Scope is exactly what the models in this repo need: elementwise arithmetic,
a handful of transcendentals, tensor contraction, FFTs, complex packing and
splitting, and differentiable B-spline evaluation. Single-threaded tape per
training step; tensors are immutable after creation.

Complex gradients follow the split real/imaginary convention: for a real
loss L and complex leaf z = x + iy, ``z.grad == dL/dx + i*dL/dy``. For
holomorphic primitives this reduces to multiplying the incoming gradient by
the conjugated local derivative. FFT backward passes are the opposite
transform with the matching normalization factor, not differentiated
butterflies, so the adjoint is exact to rounding.
"""
from __future__ import annotations

import numpy as np

from .bsplines import design_matrix

_COUNTER = 0


def _next_id() -> int:
    global _COUNTER
    _COUNTER += 1
    return _COUNTER


def _coerce(data) -> np.ndarray:
    arr = np.asarray(data)
    if np.iscomplexobj(arr):
        return np.ascontiguousarray(arr, dtype=np.complex128)
    return np.ascontiguousarray(arr, dtype=np.float64)


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_tid")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents=(), backward=None):
        self.data = _coerce(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None
        self._tid = _next_id()

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, grad={self.requires_grad})"

    def item(self) -> float:
        return self.data.reshape(()).item()

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _project(grad: np.ndarray, parent: Tensor) -> np.ndarray:
    """Match the parent's dtype: real leaves only receive the real part."""
    g = _unbroadcast(np.asarray(grad), parent.data.shape)
    if not parent.is_complex and np.iscomplexobj(g):
        g = g.real
    return np.ascontiguousarray(g)


def _make(data, op, parents, backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, op=op, parents=parents,
                  backward=backward if req else None)


def _shape_check(op: str, a: np.ndarray, b: np.ndarray):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} vs {b.shape}") from None


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _shape_check("add", a.data, b.data)
    return _make(a.data + b.data, "add", (a, b),
                 lambda g: (_project(g, a), _project(g, b)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _shape_check("sub", a.data, b.data)
    return _make(a.data - b.data, "sub", (a, b),
                 lambda g: (_project(g, a), _project(-g, b)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _shape_check("mul", a.data, b.data)
    ad, bd = a.data, b.data
    return _make(ad * bd, "mul", (a, b),
                 lambda g: (_project(g * np.conj(bd), a), _project(g * np.conj(ad), b)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _shape_check("div", a.data, b.data)
    ad, bd = a.data, b.data
    return _make(ad / bd, "div", (a, b),
                 lambda g: (_project(g * np.conj(1.0 / bd), a),
                            _project(g * np.conj(-ad / (bd * bd)), b)))


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, "neg", (a,), lambda g: (_project(-g, a),))


def power(a, p):
    """Elementwise a**p for a real scalar exponent p (real base only)."""
    a = as_tensor(a)
    if a.is_complex:
        raise ValueError("pow: complex base unsupported; use abs/angle decompositions")
    p = float(p)
    out = a.data ** p
    return _make(out, "pow", (a,),
                 lambda g: (_project(g * p * a.data ** (p - 1.0), a),))


# -- transcendentals ----------------------------------------------------------

def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (_project(g * np.conj(out), a),))


def sin(a):
    a = as_tensor(a)
    return _make(np.sin(a.data), "sin", (a,),
                 lambda g: (_project(g * np.conj(np.cos(a.data)), a),))


def cos(a):
    a = as_tensor(a)
    return _make(np.cos(a.data), "cos", (a,),
                 lambda g: (_project(g * np.conj(-np.sin(a.data)), a),))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, "tanh", (a,),
                 lambda g: (_project(g * np.conj(1.0 - out * out), a),))


def log(a):
    a = as_tensor(a)
    return _make(np.log(a.data), "log", (a,),
                 lambda g: (_project(g * np.conj(1.0 / a.data), a),))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, "sqrt", (a,),
                 lambda g: (_project(g * np.conj(0.5 / out), a),))


def absval(a):
    """Modulus |a|; for complex input the gradient points along z/|z|."""
    a = as_tensor(a)
    out = np.abs(a.data)
    if a.is_complex:
        def back(g):
            safe = np.where(out > 0, out, 1.0)
            return (_project(g * a.data / safe, a),)
    else:
        def back(g):
            return (_project(g * np.sign(a.data), a),)
    return _make(out, "abs", (a,), back)


def angle(a):
    """Argument of a complex tensor. Gradient is i*z/|z|^2 (floored near 0)."""
    a = as_tensor(a)
    out = np.angle(a.data)

    def back(g):
        r2 = np.maximum(np.abs(a.data) ** 2, 1e-300)
        return (_project(g * 1j * a.data / r2, a),)

    return _make(out, "angle", (a,), back)


# -- complex pack / split -----------------------------------------------------

def complex_pack(re, im):
    re, im = as_tensor(re), as_tensor(im)
    if re.is_complex or im.is_complex:
        raise ValueError("complex-pack: parts must be real")
    _shape_check("complex-pack", re.data, im.data)
    return _make(re.data + 1j * im.data, "complex-pack", (re, im),
                 lambda g: (_project(np.real(g), re), _project(np.imag(g), im)))


def real(a):
    a = as_tensor(a)
    return _make(np.real(a.data), "complex-split", (a,),
                 lambda g: (_project(np.asarray(g) + 0j if a.is_complex else np.asarray(g), a),))


def imag(a):
    a = as_tensor(a)
    return _make(np.imag(a.data), "complex-split", (a,),
                 lambda g: (_project(1j * np.asarray(g), a),))


def conj(a):
    a = as_tensor(a)
    return _make(np.conj(a.data), "conj", (a,), lambda g: (_project(np.conj(g), a),))


# -- contraction / structure --------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0:
        raise ValueError("matmul: operands must have rank >= 1")
    out = ad @ bd

    def back(g):
        g = np.asarray(g)
        if ad.ndim == 1 and bd.ndim == 1:
            ga, gb = g * np.conj(bd), g * np.conj(ad)
        elif bd.ndim == 1:
            ga = np.multiply.outer(g, np.conj(bd)) if g.ndim else g[..., None] * np.conj(bd)
            gb = np.conj(ad).swapaxes(-1, -2) @ g if ad.ndim > 1 else g * np.conj(ad)
        elif ad.ndim == 1:
            ga = g @ np.conj(bd).swapaxes(-1, -2)
            gb = np.multiply.outer(np.conj(ad), g)
        else:
            ga = g @ np.conj(bd).swapaxes(-1, -2)
            gb = np.conj(ad).swapaxes(-1, -2) @ g
        return (_project(ga, a), _project(gb, b))

    return _make(out, "matmul", (a, b), back)


def mode_mix(R, a):
    """Per-mode channel mixing: out[b, o, m] = sum_i R[m, i, o] * a[b, i, m].

    A matmul specialization batched over the mode axis (BLAS-backed), the hot
    path of spectral-multiplier layers.
    """
    R, a = as_tensor(R), as_tensor(a)
    n, w_in, w_out = R.data.shape
    if a.data.ndim != 3 or a.data.shape[1] != w_in or a.data.shape[2] != n:
        raise ValueError(f"mode_mix: field {a.data.shape} does not match "
                         f"multiplier {R.data.shape}")
    at = np.ascontiguousarray(a.data.transpose(2, 0, 1))       # (m, b, i)
    out = np.matmul(at, R.data).transpose(1, 2, 0)             # (b, o, m)

    def back(g):
        g = np.ascontiguousarray(np.asarray(g).transpose(2, 0, 1))       # (m, b, o)
        at_h = np.ascontiguousarray(np.conj(at).transpose(0, 2, 1))      # (m, i, b)
        r_h = np.ascontiguousarray(np.conj(R.data).transpose(0, 2, 1))   # (m, o, i)
        gR = np.matmul(at_h, g)                                          # (m, i, o)
        gA = np.matmul(g, r_h)                                           # (m, b, i)
        return (_project(gR, R), _project(gA.transpose(1, 2, 0), a))

    return _make(out, "matmul", (R, a), back)


def channel_map(W, a):
    """Pointwise channel mixing: out[b, o, n] = sum_i W[i, o] * a[b, i, n].

    One flattened matmul instead of a generic einsum.
    """
    W, a = as_tensor(W), as_tensor(a)
    w_in, w_out = W.data.shape
    if a.data.ndim != 3 or a.data.shape[1] != w_in:
        raise ValueError(f"channel_map: field {a.data.shape} does not match "
                         f"map {W.data.shape}")
    at = a.data.transpose(0, 2, 1)                       # (b, n, i)
    out = np.matmul(at, W.data).transpose(0, 2, 1)       # (b, o, n)

    def back(g):
        g = np.asarray(g).transpose(0, 2, 1)                              # (b, n, o)
        flat_a = np.conj(at.reshape(-1, w_in))
        gW = flat_a.T @ g.reshape(-1, w_out)
        gA = np.matmul(g, np.conj(W.data.T)).transpose(0, 2, 1)
        return (_project(gW, W), _project(gA, a))

    return _make(out, "matmul", (W, a), back)


def einsum2(spec: str, a, b):
    """Two-operand einsum. Every input index must appear in the output or in
    the other operand (true for all contractions used in this repo)."""
    a, b = as_tensor(a), as_tensor(b)
    lhs, out_idx = spec.split("->")
    a_idx, b_idx = lhs.split(",")
    out = np.einsum(spec, a.data, b.data)

    def back(g):
        g = np.asarray(g)
        ga = np.einsum(f"{out_idx},{b_idx}->{a_idx}", g, np.conj(b.data))
        gb = np.einsum(f"{a_idx},{out_idx}->{b_idx}", np.conj(a.data), g)
        return (_project(ga, a), _project(gb, b))

    return _make(out, "einsum", (a, b), back)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        g = np.asarray(g)
        if axis is None:
            return (_project(np.broadcast_to(g, a.data.shape), a),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (_project(np.broadcast_to(g, a.data.shape), a),)

    return _make(out, "sum", (a,), back)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def gather(a, indices, axis=0):
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(a.data, idx, axis=axis)

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (slice(None),) * axis + (idx,), np.asarray(g))
        return (_project(ga, a),)

    return _make(out, "gather", (a,), back)


def concat(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        chunks = np.split(np.asarray(g), splits, axis=axis)
        return tuple(_project(c, p) for c, p in zip(chunks, parts))

    return _make(out, "concat", tuple(parts), back)


def reshape(a, shape):
    a = as_tensor(a)
    orig = a.data.shape
    return _make(a.data.reshape(shape), "reshape", (a,),
                 lambda g: (_project(np.asarray(g).reshape(orig), a),))


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), "transpose", (a,),
                 lambda g: (_project(np.asarray(g).transpose(inv), a),))


# -- FFTs ----------------------------------------------------------------------

def fft(a):
    """Unnormalized DFT along the last axis; backward is n * ifft."""
    a = as_tensor(a)
    n = a.data.shape[-1]
    return _make(np.fft.fft(a.data, axis=-1), "fft", (a,),
                 lambda g: (_project(np.fft.ifft(np.asarray(g), axis=-1) * n, a),))


def ifft(a):
    """Normalized inverse DFT along the last axis; backward is fft / n."""
    a = as_tensor(a)
    n = a.data.shape[-1]
    return _make(np.fft.ifft(a.data, axis=-1), "ifft", (a,),
                 lambda g: (_project(np.fft.fft(np.asarray(g), axis=-1) / n, a),))


# -- pointwise nonlinearities ---------------------------------------------------

def _silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def _dsilu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


_GELU_C = np.sqrt(2.0 / np.pi)


def _gelu(x):
    # tanh-form gelu; standard FNO activation choice
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def _dgelu(x):
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _dsigmoid(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


POINTWISE = {
    "silu": (_silu, _dsilu),
    "gelu": (_gelu, _dgelu),
    "sigmoid": (_sigmoid, _dsigmoid),
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
}


_PAIRED = {}


def _gelu_pair(x):
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    val = 0.5 * x * (1.0 + t)
    deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return val, deriv


def _silu_pair(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, s * (1.0 + x * (1.0 - s))


_PAIRED["gelu"] = _gelu_pair
_PAIRED["silu"] = _silu_pair


def apply_pointwise(name: str, a):
    """Named real-valued activation recorded as a single tape primitive.

    The derivative shares the forward's transcendental work where a paired
    kernel exists; otherwise it is recomputed lazily in the backward pass.
    """
    a = as_tensor(a)
    if a.is_complex:
        raise ValueError(f"pointwise-apply({name}): real input required")
    if name in _PAIRED and a.requires_grad:
        val, deriv = _PAIRED[name](a.data)
        return _make(val, "pointwise-apply", (a,),
                     lambda g: (_project(np.asarray(g) * deriv, a),))
    f, df = POINTWISE[name]
    return _make(f(a.data), "pointwise-apply", (a,),
                 lambda g: (_project(np.asarray(g) * df(a.data), a),))


def clamp_min(a, lo: float):
    """Elementwise max(a, lo) for real tensors; gradient passes where a > lo."""
    a = as_tensor(a)
    if a.is_complex:
        raise ValueError("clamp_min: real input required")
    keep = a.data > lo
    return _make(np.maximum(a.data, lo), "pointwise-apply", (a,),
                 lambda g: (_project(np.asarray(g) * keep, a),))


# -- differentiable B-spline evaluation -----------------------------------------

def bspline_eval(coeffs, t, knots: np.ndarray, degree: int):
    """Evaluate a B-spline curve with linear extrapolation outside the knots.

    Differentiable in both the coefficients and the evaluation points.
    `coeffs` has shape (n_basis,); `t` may have any shape.
    """
    coeffs, t = as_tensor(coeffs), as_tensor(t)
    if t.is_complex:
        raise ValueError("bspline-eval: evaluation points must be real")
    if np.any(np.isnan(t.data)):
        raise ValueError("bspline-eval: NaN evaluation point")
    n_basis = len(knots) - degree - 1
    if coeffs.data.shape != (n_basis,):
        raise ValueError(
            f"bspline-eval: coeffs shape {coeffs.data.shape} != ({n_basis},)")
    tshape = t.data.shape
    D, dB = design_matrix(knots, degree, t.data.ravel())
    out = (D @ coeffs.data).reshape(tshape)
    dval = (dB @ coeffs.data).reshape(tshape)

    def back(g):
        g = np.asarray(g)
        gc = D.T @ np.conj(np.asarray(g)).ravel()
        gc = np.conj(gc)  # D real: grad_c = D^T g under the split convention
        gt = np.real(np.conj(g) * dval)
        return (_project(gc, coeffs), _project(gt, t))

    return _make(out, "bspline-eval", (coeffs, t), back)


# -- tape & backward -------------------------------------------------------------

class Tape:
    """Creation-ordered record of the primitives reachable from a root tensor.

    Creation order is a topological order by construction (an op's inputs
    always exist before its output), so the reverse sweep visits every node
    exactly once.
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        seen = set()
        stack = [root]
        nodes = []
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(node._parents)
        nodes.sort(key=lambda n: n._tid)
        return cls(nodes)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into .grad for every reachable tensor.

    The loss must be a real scalar. Complex tensors receive gradients under
    the split real/imaginary convention.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if loss.is_complex:
        raise ValueError("backward: loss must be real-valued")
    tape = Tape.trace(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grads(params) -> None:
    for p in params:
        p.grad = None
