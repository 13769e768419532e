"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tape` records primitive operations as a graph is built. The graph
can be re-evaluated with new placeholder values (``Tape.evaluate``) and
differentiated with respect to its :class:`Parameter` leaves
(``Tape.backprop``). Everything is float64 and single-threaded; evaluating
the same tape twice with the same inputs is bit-identical.
"""

from __future__ import annotations

import numpy as np

# exp() arguments are capped here so the forward pass can never overflow;
# the derivative is zero beyond the cap.
EXP_ARG_MAX = 700.0


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Node:
    """One value in the recorded graph. Supports numpy-style operators."""

    __slots__ = ("tape", "index", "parents", "value", "grad", "name",
                 "requires_grad", "_fwd", "_bwd")

    def __init__(self, tape, parents, value, fwd, bwd, name="", requires_grad=None):
        self.tape = tape
        self.parents = parents
        self.value = value
        self.grad = None
        self.name = name
        self._fwd = fwd
        self._bwd = bwd
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return np.shape(self.value)

    # -- operator sugar -------------------------------------------------
    def _lift(self, other) -> "Node":
        if isinstance(other, Node):
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return add(self, self._lift(other))

    def __radd__(self, other):
        return add(self._lift(other), self)

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return mul(self._lift(other), self)

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    def __neg__(self):
        return mul(self, self.tape.constant(-1.0))

    def sum(self, axis=None):
        return reduce_sum(self, axis=axis)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return reduce_sum(self, axis=axis) * (1.0 / n)

    def reshape(self, shape):
        return reshape(self, shape)

    def __repr__(self):
        label = self.name or "node"
        return f"<{label}#{self.index} shape={self.shape}>"


class Parameter(Node):
    """Trainable leaf: persistent value plus a gradient accumulator."""

    def __init__(self, tape, value, name=""):
        value = np.array(value, dtype=np.float64)
        super().__init__(tape, (), value, None, None, name=name, requires_grad=True)
        self.grad = np.zeros_like(value)

    def set_value(self, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.value.shape:
            raise ValueError(
                f"parameter {self.name!r} has shape {self.value.shape}, "
                f"got {value.shape}"
            )
        self.value = value.copy()

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


class Tape:
    """Ordered record of graph nodes; creation order is a topological order."""

    def __init__(self):
        self.nodes: list[Node] = []

    # -- leaves ----------------------------------------------------------
    def constant(self, value, name="const") -> Node:
        value = np.array(value, dtype=np.float64)
        return Node(self, (), value, None, None, name=name, requires_grad=False)

    def placeholder(self, value, name="input") -> Node:
        """Leaf whose value is swapped per evaluation via ``feeds``."""
        value = np.array(value, dtype=np.float64)
        return Node(self, (), value, None, None, name=name, requires_grad=False)

    def parameter(self, value, name="param") -> Parameter:
        return Parameter(self, value, name=name)

    def parameters(self) -> list[Parameter]:
        return [n for n in self.nodes if isinstance(n, Parameter)]

    # -- execution ---------------------------------------------------------
    def evaluate(self, feeds=None, outputs=None):
        """Recompute the graph, optionally feeding new placeholder values.

        Returns the value of ``outputs`` (a Node or sequence of Nodes); with
        ``outputs=None`` returns the value of the last node. Only nodes up to
        the last requested output are recomputed, so placeholders after that
        point may hold stale shapes without harm.
        """
        if feeds:
            for node, value in feeds.items():
                if node._fwd is not None or isinstance(node, Parameter):
                    raise ValueError("only placeholders can be fed")
                node.value = np.asarray(value, dtype=np.float64)
        if outputs is None:
            last = len(self.nodes) - 1
        elif isinstance(outputs, Node):
            last = outputs.index
        else:
            last = max(out.index for out in outputs)
        for node in self.nodes[: last + 1]:
            if node._fwd is not None:
                node.value = node._fwd(*(p.value for p in node.parents))
        if outputs is None:
            return self.nodes[-1].value
        if isinstance(outputs, Node):
            return outputs.value
        return [out.value for out in outputs]

    def backprop(self, output: Node):
        """Accumulate d(output)/d(parameter) into every Parameter's ``.grad``.

        ``output`` must be scalar. Intermediate-node gradients are transient;
        Parameter gradients accumulate across calls until ``zero_grad``.
        """
        if output.tape is not self:
            raise ValueError("output node belongs to a different tape")
        if np.size(output.value) != 1:
            raise ValueError(f"backprop needs a scalar output, got shape {output.shape}")
        for node in self.nodes:
            if not isinstance(node, Parameter):
                node.grad = None
        seed = np.ones_like(np.asarray(output.value, dtype=np.float64))
        if isinstance(output, Parameter):
            output.grad = output.grad + seed
            return
        output.grad = seed
        for node in reversed(self.nodes[: output.index + 1]):
            if node.grad is None or node._bwd is None:
                continue
            parent_grads = node._bwd(node.grad, node.value,
                                     *(p.value for p in node.parents))
            for parent, g in zip(node.parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                if isinstance(parent, Parameter):
                    parent.grad = parent.grad + g
                elif parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def _op(a: Node, parents, fwd, bwd, name) -> Node:
    value = fwd(*(p.value for p in parents))
    return Node(a.tape, tuple(parents), value, fwd, bwd, name=name)


# -- primitives -----------------------------------------------------------

def add(a: Node, b: Node) -> Node:
    def bwd(g, v, av, bv):
        return _unbroadcast(g, np.shape(av)), _unbroadcast(g, np.shape(bv))
    return _op(a, (a, b), np.add, bwd, "add")


def sub(a: Node, b: Node) -> Node:
    def bwd(g, v, av, bv):
        return _unbroadcast(g, np.shape(av)), _unbroadcast(-g, np.shape(bv))
    return _op(a, (a, b), np.subtract, bwd, "sub")


def mul(a: Node, b: Node) -> Node:
    def bwd(g, v, av, bv):
        return (_unbroadcast(g * bv, np.shape(av)),
                _unbroadcast(g * av, np.shape(bv)))
    return _op(a, (a, b), np.multiply, bwd, "mul")


def matmul(a: Node, b: Node) -> Node:
    def fwd(av, bv):
        return av @ bv

    def bwd(g, v, av, bv):
        return g @ bv.T, av.T @ g
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ValueError("matmul expects 2-D operands")
    return _op(a, (a, b), fwd, bwd, "matmul")


def reciprocal(a: Node) -> Node:
    def bwd(g, v, av):
        return (-g * v * v,)
    return _op(a, (a,), np.reciprocal, bwd, "reciprocal")


def square(a: Node) -> Node:
    def bwd(g, v, av):
        return (g * 2.0 * av,)
    return _op(a, (a,), np.square, bwd, "square")


def absolute(a: Node) -> Node:
    def bwd(g, v, av):
        return (g * np.sign(av),)
    return _op(a, (a,), np.abs, bwd, "abs")


def exp(a: Node) -> Node:
    def fwd(av):
        return np.exp(np.minimum(av, EXP_ARG_MAX))

    def bwd(g, v, av):
        return (g * v * (av < EXP_ARG_MAX),)
    return _op(a, (a,), fwd, bwd, "exp")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: stable for all x and one ufunc pass
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a: Node) -> Node:
    def fwd(av):
        return _sigmoid(np.asarray(av, dtype=np.float64))

    def bwd(g, v, av):
        return (g * v * (1.0 - v),)
    return _op(a, (a,), fwd, bwd, "sigmoid")


def relu(a: Node) -> Node:
    def bwd(g, v, av):
        return (g * (av > 0),)
    return _op(a, (a,), lambda av: np.maximum(av, 0.0), bwd, "relu")


def softplus(a: Node) -> Node:
    def fwd(av):
        return np.logaddexp(0.0, av)

    def bwd(g, v, av):
        return (g * _sigmoid(np.asarray(av, dtype=np.float64)),)
    return _op(a, (a,), fwd, bwd, "softplus")


def reduce_sum(a: Node, axis=None) -> Node:
    def fwd(av):
        return np.sum(av, axis=axis)

    def bwd(g, v, av):
        if axis is None:
            return (np.broadcast_to(g, np.shape(av)).copy(),)
        g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, np.shape(av)).copy(),)
    return _op(a, (a,), fwd, bwd, "sum")


def reshape(a: Node, shape) -> Node:
    def fwd(av):
        return np.reshape(av, shape)

    def bwd(g, v, av):
        return (np.reshape(g, np.shape(av)),)
    return _op(a, (a,), fwd, bwd, "reshape")


def slice_cols(a: Node, start: int, stop: int) -> Node:
    """Columns ``start:stop`` of a 2-D node."""
    def fwd(av):
        return av[:, start:stop]

    def bwd(g, v, av):
        out = np.zeros_like(av)
        out[:, start:stop] = g
        return (out,)
    if len(a.shape) != 2:
        raise ValueError("slice_cols expects a 2-D node")
    return _op(a, (a,), fwd, bwd, "slice_cols")


def conv1d(x: Node, w: Node, b: Node, stride: int = 1) -> Node:
    """1-D valid convolution: x (N, C, L), w (F, C, K), b (F,) -> (N, F, L_out)."""
    if len(x.shape) != 3 or len(w.shape) != 3:
        raise ValueError("conv1d expects x (N,C,L) and w (F,C,K)")
    n_filters, _, kernel = w.shape
    # the flattened im2col patches are reused by the backward pass as long
    # as the forward ran on the same input array
    cache = {"xv": None, "flat": None}

    def patches_flat(xv):
        if cache["xv"] is xv:
            return cache["flat"]
        win = np.lib.stride_tricks.sliding_window_view(xv, kernel, axis=2)
        p = win[:, :, ::stride, :]  # (N, C, L_out, K)
        n, c, l_out, k = p.shape
        flat = p.transpose(0, 2, 1, 3).reshape(n * l_out, c * k)
        cache["xv"], cache["flat"] = xv, flat
        return flat

    def fwd(xv, wv, bv):
        n, c, length = xv.shape
        l_out = (length - kernel) // stride + 1
        flat = patches_flat(xv)
        out = flat @ wv.reshape(n_filters, c * kernel).T + bv
        return out.reshape(n, l_out, n_filters).transpose(0, 2, 1)

    def bwd(g, v, xv, wv, bv):
        n, c, length = xv.shape
        l_out = g.shape[2]
        flat = patches_flat(xv)
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(n * l_out, n_filters)
        gw = (g2.T @ flat).reshape(n_filters, c, kernel)
        gb = g2.sum(axis=0)
        gp = (g2 @ wv.reshape(n_filters, c * kernel)).reshape(n, l_out, c, kernel)
        gp = gp.transpose(0, 2, 1, 3)  # (N, C, L_out, K)
        gx = np.zeros_like(xv)
        span = stride * (l_out - 1) + 1
        for j in range(kernel):
            gx[:, :, j:j + span:stride] += gp[:, :, :, j]
        return gx, gw, gb
    return _op(x, (x, w, b), fwd, bwd, "conv1d")


# -- optimizers -----------------------------------------------------------

class Adam:
    """Adam with the usual defaults; state is per-parameter and deterministic."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        # bias correction folded into a scalar step and a scaled epsilon
        corr2 = np.sqrt(1 - b2 ** self.t)
        step_size = self.lr * corr2 / (1 - b1 ** self.t)
        eps = self.eps * corr2
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            denom = np.sqrt(v)
            denom += eps
            p.value = p.value - step_size * (m / denom)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


class Sgd:
    """Plain gradient descent, kept as the configurable alternative."""

    def __init__(self, params, lr=1e-3):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            p.value = p.value - self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


# -- gradient checking ------------------------------------------------------

def finite_diff_check(value_fn, params, step=1e-4, coords_per_param=None, seed=0):
    """Max relative error between analytic and central-difference gradients.

    ``value_fn()`` must evaluate the scalar objective at the parameters'
    current values. Analytic gradients are read from each parameter's
    ``.grad``, so run a forward/backprop pass before calling. By default
    every coordinate of every parameter is perturbed; ``coords_per_param``
    caps the number of coordinates per parameter (chosen by a seeded RNG)
    for large weight tensors.

    The error for one coordinate is ``|analytic - numeric| / (|analytic| +
    1e-12)``; the maximum over all checked coordinates is returned.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        if p.grad is None:
            raise ValueError(f"parameter {p.name!r} has no gradient")
        flat_grad = np.asarray(p.grad, dtype=np.float64).reshape(-1)
        n = p.value.size
        if coords_per_param is not None and n > coords_per_param:
            coords = rng.choice(n, size=coords_per_param, replace=False)
        else:
            coords = range(n)
        base = p.value
        for i in coords:
            # perturb on fresh copies: primitives may cache per input object
            plus = base.copy()
            plus.flat[i] += step
            p.value = plus
            f_plus = float(value_fn())
            minus = base.copy()
            minus.flat[i] -= step
            p.value = minus
            f_minus = float(value_fn())
            p.value = base
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError("objective is non-finite during finite differencing")
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(flat_grad[i] - numeric) / (abs(flat_grad[i]) + 1e-12)
            worst = max(worst, err)
    return worst
