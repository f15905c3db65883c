#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# autodiff.py

"""
Dense tensor arithmetic with reverse-mode automatic differentiation.

Computation is define-by-run: every operation whose inputs require gradients
is appended to the innermost active |Tape| as it executes, and
:meth:`Tape.backward` replays the records in exact reverse order.

    >>> import numpy as np
    >>> from fedpet import autodiff as ad
    >>> x = ad.Tensor([1.0, 2.0], requires_grad=True, name='x')
    >>> with ad.Tape() as tape:
    ...     loss = ad.sum(ad.mul(x, x))
    >>> tape.backward(loss)['x'].value
    array([2., 4.])

Tensors are immutable once constructed, so they can be shared freely between
threads. A tape belongs to the thread that opened it.
"""

import itertools
import logging
import threading
from collections import namedtuple
from collections.abc import Mapping

import numpy as np

from . import config, constants, exceptions, utils

log = logging.getLogger(__name__)

_ids = itertools.count()
_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape():
    """Return the innermost active tape of this thread, or ``None``."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """An immutable dense tensor.

    Args:
        value (array_like): The tensor's values; copied and cast to the
            run's float dtype (``config.FLOAT_DTYPE``).

    Keyword Args:
        requires_grad (bool): Whether operations on this tensor are recorded
            for differentiation.
        name (str): Optional parameter name, used as the key of the tensor's
            entry in a |GradientMap|.
    """

    # Make NumPy defer binary operators to ``Tensor``.
    __array_ufunc__ = None

    def __init__(self, value, requires_grad=False, name=None):
        self._init(np.array(value, dtype=utils.float_dtype()), requires_grad, name)

    def _init(self, value, requires_grad, name):
        self.value = utils.np_immutable(value)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.id = next(_ids)

    @classmethod
    def wrap(cls, value, requires_grad=False, name=None):
        """Wrap an array without copying it.

        The array is made read-only. Use this for arrays that are already
        immutable, such as the entries of a |ParameterStore|.
        """
        obj = cls.__new__(cls)
        obj._init(np.asarray(value, dtype=utils.float_dtype()), requires_grad, name)
        return obj

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self):
        """Return a writable copy of the values."""
        return self.value.copy()

    def item(self):
        return self.value.item()

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return "Tensor(shape={}, requires_grad={}{})".format(
            self.shape,
            self.requires_grad,
            ", name={!r}".format(self.name) if self.name else "",
        )

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
        if isinstance(other, Tensor):
            raise TypeError("Division is only supported by constant scalars.")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    """Return ``x`` if it is a |Tensor|, otherwise a constant wrapping it."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


_Record = namedtuple("_Record", ["op", "inputs", "output", "backward"])


class GradientMap(Mapping):
    """Mapping from parameter name to the gradient of a loss with respect to
    that parameter.

    Iteration is in lexicographic name order. Values are |Tensor| objects with
    the same shape as their parameters.
    """

    def __init__(self, grads):
        self._grads = dict(grads)

    def __getitem__(self, name):
        return self._grads[name]

    def __iter__(self):
        return iter(sorted(self._grads))

    def __len__(self):
        return len(self._grads)

    def arrays(self):
        """Return a dictionary of name to gradient array."""
        return {name: self._grads[name].value for name in self}

    def global_norm(self):
        """Return the Euclidean norm of all gradients taken together."""
        return float(
            np.sqrt(np.sum([np.sum(g.value ** 2) for g in self._grads.values()]))
        )

    def __repr__(self):
        return "GradientMap({})".format(
            ", ".join("{}{}".format(name, self._grads[name].shape) for name in self)
        )


class Tape:
    """An ordered record of differentiable operations.

    Use as a context manager; operations performed inside the block are
    recorded when any of their inputs requires gradients::

        with Tape() as tape:
            tape.watch(params)
            loss = ...
        grads = tape.backward(loss)
    """

    def __init__(self):
        self.records = []
        self._outputs = set()
        self._watched = {}

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise exceptions.ContractError("Tapes must be closed in LIFO order.")
        stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def watch(self, tensors):
        """Register named tensors whose gradients ``backward`` must return.

        Args:
            tensors (Mapping[str, Tensor] or Iterable[Tensor]): Named tensors.
                Tensors that end up disconnected from the loss get zero
                gradients.
        """
        if isinstance(tensors, Mapping):
            items = tensors.items()
        else:
            items = ((t.name, t) for t in tensors)
        for name, tensor in items:
            if name is None:
                raise exceptions.ContractError("Watched tensors must be named.")
            self._watched[name] = tensor

    def record(self, op, inputs, output, backward):
        """Append an operation to the tape."""
        self.records.append(_Record(op, tuple(inputs), output.id, backward))
        self._outputs.add(output.id)

    def _leaves(self):
        leaves = {}
        for record in self.records:
            for t in record.inputs:
                if t.requires_grad and t.name is not None and t.id not in self._outputs:
                    leaves.setdefault(t.name, t)
        return leaves

    def backward(self, loss):
        """Compute the gradient of a scalar ``loss`` with respect to every
        watched tensor, or, if none are watched, every named leaf tensor that
        requires gradients.

        Returns:
            GradientMap: The gradients.

        Raises:
            ContractError: If ``loss`` is not a scalar or was not recorded on
                this tape.
        """
        if loss.size != 1:
            raise exceptions.ContractError(
                "backward requires a scalar loss; got shape {}.".format(loss.shape)
            )
        if loss.id not in self._outputs:
            raise exceptions.ContractError("The loss was not recorded on this tape.")

        grads = {loss.id: np.ones(loss.shape, dtype=loss.dtype)}
        for record in reversed(self.records):
            g = grads.get(record.output)
            if g is None:
                continue
            for tensor, gi in zip(record.inputs, record.backward(g)):
                if gi is None or not tensor.requires_grad:
                    continue
                if tensor.id in grads:
                    grads[tensor.id] = grads[tensor.id] + gi
                else:
                    grads[tensor.id] = gi

        targets = self._watched or self._leaves()
        return GradientMap(
            {
                name: Tensor.wrap(
                    np.array(grads[t.id], dtype=t.dtype)
                    if t.id in grads
                    else np.zeros(t.shape, dtype=t.dtype)
                )
                for name, t in targets.items()
            }
        )


def backward(loss, tape=None):
    """Differentiate ``loss`` on ``tape`` (default: the active tape)."""
    tape = tape if tape is not None else current_tape()
    if tape is None:
        raise exceptions.ContractError("No tape is active.")
    return tape.backward(loss)


# Operation plumbing
# =============================================================================


def _emit(op, value, inputs, backward_fn):
    """Wrap an op result and record it on the active tape if needed."""
    value = np.asarray(value, dtype=utils.float_dtype())
    if config.CHECK_FINITE and not np.all(np.isfinite(value)):
        raise exceptions.NonFiniteError(op)
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor.wrap(value, requires_grad=requires_grad)
    if requires_grad:
        tape = current_tape()
        if tape is not None:
            tape.record(op, inputs, out, backward_fn)
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` over the axes along which an input of ``shape`` was
    broadcast.
    """
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise exceptions.DimensionError(
            "{}: incompatible shapes {} and {}.".format(op, a.shape, b.shape)
        )


def _need(t, fn):
    return fn() if t.requires_grad else None


# Elementwise operations
# =============================================================================


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward_fn(g):
        return (
            _need(a, lambda: _unbroadcast(g, a.shape)),
            _need(b, lambda: _unbroadcast(g, b.shape)),
        )

    return _emit("add", a.value + b.value, (a, b), backward_fn)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward_fn(g):
        return (
            _need(a, lambda: _unbroadcast(g, a.shape)),
            _need(b, lambda: _unbroadcast(-g, b.shape)),
        )

    return _emit("sub", a.value - b.value, (a, b), backward_fn)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward_fn(g):
        return (
            _need(a, lambda: _unbroadcast(g * b.value, a.shape)),
            _need(b, lambda: _unbroadcast(g * a.value, b.shape)),
        )

    return _emit("mul", a.value * b.value, (a, b), backward_fn)


def neg(a):
    a = as_tensor(a)
    return _emit("neg", -a.value, (a,), lambda g: (-g,))


def relu(a):
    a = as_tensor(a)
    x = a.value
    return _emit("relu", np.maximum(x, 0), (a,), lambda g: (g * (x > 0),))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.value)
    return _emit("tanh", y, (a,), lambda g: (g * (1 - y ** 2),))


_GELU_C = np.sqrt(2 / np.pi)
_GELU_K = 0.044715


def gelu(a):
    """Gaussian error linear unit, tanh approximation."""
    a = as_tensor(a)
    x = a.value
    t = np.tanh(_GELU_C * (x + _GELU_K * x ** 3))

    def backward_fn(g):
        dt = (1 - t ** 2) * _GELU_C * (1 + 3 * _GELU_K * x ** 2)
        return (g * (0.5 * (1 + t) + 0.5 * x * dt),)

    return _emit("gelu", 0.5 * x * (1 + t), (a,), backward_fn)


_UNARY = {"relu": relu, "tanh": tanh, "gelu": gelu}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op, a, b=None):
    """Apply a named pointwise operation.

    Args:
        op (str): One of ``'add'``, ``'sub'``, ``'mul'``, ``'relu'``,
            ``'tanh'`` or ``'gelu'``.
        a (Tensor): First operand.
        b (Tensor): Second operand, for binary operations. Must have the
            same shape as ``a`` or broadcast against it.

    Example:
        >>> elementwise('relu', Tensor([-1.0, 0.0, 2.0])).value
        array([0., 0., 2.])
    """
    if op in _UNARY:
        if b is not None:
            raise ValueError("`{}` takes a single operand.".format(op))
        return _UNARY[op](a)
    if op in _BINARY:
        if b is None:
            raise ValueError("`{}` takes two operands.".format(op))
        return _BINARY[op](a, b)
    raise ValueError(
        "Unknown elementwise op {!r}; must be one of {}.".format(
            op, sorted(_UNARY) + sorted(_BINARY)
        )
    )


def dropout(a, rate, rng):
    """Zero entries of ``a`` with probability ``rate`` and rescale the rest.

    Returns ``a`` unchanged when ``rate`` is zero or ``rng`` is ``None``.
    """
    if rate == 0 or rng is None:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, Tensor.wrap(mask))


# Linear algebra and reductions
# =============================================================================


def matmul(a, b):
    """Matrix product, batched over any leading axes.

    Raises:
        DimensionError: If either operand has fewer than two axes or the
            inner extents differ.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise exceptions.DimensionError(
            "matmul operands need at least two axes; got {} and {}.".format(
                a.shape, b.shape
            )
        )
    if a.shape[-1] != b.shape[-2]:
        raise exceptions.DimensionError(
            "matmul: inner extents differ in {} and {}.".format(a.shape, b.shape)
        )
    try:
        value = np.matmul(a.value, b.value)
    except ValueError as e:
        raise exceptions.DimensionError("matmul: {}".format(e)) from e

    def grad_b(g):
        if b.ndim == 2 and a.ndim > 2:
            # A shared weight: fold the leading axes into one product.
            return a.value.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return _unbroadcast(np.matmul(np.swapaxes(a.value, -1, -2), g), b.shape)

    def backward_fn(g):
        return (
            _need(
                a,
                lambda: _unbroadcast(np.matmul(g, np.swapaxes(b.value, -1, -2)), a.shape),
            ),
            _need(b, lambda: grad_b(g)),
        )

    return _emit("matmul", value, (a, b), backward_fn)


def sum(a, axis=None, keepdims=False):  # pylint: disable=redefined-builtin
    a = as_tensor(a)
    value = np.sum(a.value, axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.array(np.broadcast_to(g, a.shape)),)

    return _emit("sum", value, (a,), backward_fn)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        value = np.reshape(a.value, shape)
    except ValueError as e:
        raise exceptions.DimensionError("reshape: {}".format(e)) from e
    return _emit("reshape", value, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _emit(
        "transpose",
        np.transpose(a.value, axes),
        (a,),
        lambda g: (np.transpose(g, inverse),),
    )


def broadcast_to(a, shape):
    a = as_tensor(a)
    try:
        value = np.broadcast_to(a.value, shape)
    except ValueError as e:
        raise exceptions.DimensionError("broadcast_to: {}".format(e)) from e
    return _emit("broadcast_to", value, (a,), lambda g: (_unbroadcast(g, a.shape),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as e:
        raise exceptions.DimensionError("concat: {}".format(e)) from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", value, tensors, backward_fn)


def embedding(table, ids):
    """Gather rows of ``table`` at integer ``ids``.

    Raises:
        InputError: If an id is outside ``[0, table.shape[0])``.
    """
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise exceptions.DimensionError("Embedding ids must be integers.")
    n_rows = table.shape[0]
    bad = ids[(ids < 0) | (ids >= n_rows)]
    if bad.size:
        raise exceptions.InputError("token id", int(bad.flat[0]), n_rows)

    def backward_fn(g):
        # Scatter-add as a one-hot product.
        flat = ids.reshape(-1)
        onehot = (np.arange(n_rows)[:, None] == flat[None, :]).astype(g.dtype)
        return (onehot @ g.reshape((flat.size,) + table.shape[1:]),)

    return _emit("embedding", table.value[ids], (table,), backward_fn)


# Normalization and losses
# =============================================================================


def softmax_rows(a, axis=-1):
    """Softmax along ``axis`` (default: the last), computed with max
    subtraction.

    Example:
        >>> softmax_rows(Tensor([[1000.0, 0.0]])).value
        array([[1., 0.]])
    """
    a = as_tensor(a)
    shifted = a.value - np.max(a.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def backward_fn(g):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return _emit("softmax", s, (a,), backward_fn)


def layer_norm(a, gamma, beta, eps=constants.LAYER_NORM_EPS):
    """Normalize the last axis of ``a`` to zero mean and unit variance, then
    scale by ``gamma`` and shift by ``beta``.
    """
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    n = a.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise exceptions.DimensionError(
            "layer_norm: gamma {} and beta {} must have shape ({},).".format(
                gamma.shape, beta.shape, n
            )
        )
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive.")

    x = a.value
    xc = x - x.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((xc ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward_fn(g):
        dxhat = g * gamma.value
        dx = (inv / n) * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return (
            _need(a, lambda: dx),
            _need(gamma, lambda: (g * xhat).reshape(-1, n).sum(axis=0)),
            _need(beta, lambda: g.reshape(-1, n).sum(axis=0)),
        )

    return _emit("layer_norm", xhat * gamma.value + beta.value, (a, gamma, beta), backward_fn)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``.

    Args:
        logits (Tensor): Scores of shape ``[m, L]``.
        labels (array_like or Tensor): Either ``m`` integer class ids in
            ``[0, L)``, or an ``[m, L]`` float matrix of target probabilities.

    Returns:
        Tensor: A scalar loss.

    Raises:
        InputError: If a class id is out of range.

    Example:
        >>> round(cross_entropy(Tensor([[0.0, 0.0, 0.0, 0.0]]), [2]).item(), 6)
        1.386294
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise exceptions.DimensionError("cross_entropy expects [m, L] logits.")
    m, n_labels = logits.shape

    soft = isinstance(labels, Tensor) or np.asarray(labels).ndim == 2
    if soft:
        target_t = as_tensor(labels)
        if target_t.shape != logits.shape:
            raise exceptions.DimensionError(
                "Soft targets {} must match logits {}.".format(
                    target_t.shape, logits.shape
                )
            )
        target = target_t.value
        inputs = (logits, target_t)
    else:
        labels = np.asarray(labels)
        if labels.shape != (m,) or labels.dtype.kind not in "iu":
            raise exceptions.DimensionError(
                "Expected {} integer labels; got {}.".format(m, labels.shape)
            )
        bad = labels[(labels < 0) | (labels >= n_labels)]
        if bad.size:
            raise exceptions.InputError("label", int(bad[0]), n_labels)
        target = np.zeros(logits.shape, dtype=logits.dtype)
        target[np.arange(m), labels] = 1
        inputs = (logits,)

    shifted = logits.value - np.max(logits.value, axis=1, keepdims=True)
    logp = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    loss = -np.sum(target * logp) / m

    def backward_fn(g):
        p = np.exp(logp)
        grads = (g * (p * target.sum(axis=1, keepdims=True) - target) / m,)
        if soft:
            grads += (_need(target_t, lambda: -g * logp / m),)
        return grads

    return _emit("cross_entropy", np.array(loss), inputs, backward_fn)


# Finite differences
# =============================================================================


def numerical_gradient(fn, x, step=1e-5):
    """Central finite-difference gradient of a scalar function.

    Args:
        fn (Callable[[np.ndarray], float]): The function; it receives a copy
            of the perturbed array.
        x (np.ndarray): The point at which to differentiate.

    Keyword Args:
        step (float): The finite-difference step.

    Returns:
        np.ndarray: An array of the same shape as ``x``.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = float(fn(x.copy()))
        flat[i] = orig - step
        f_minus = float(fn(x.copy()))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2 * step)
    return grad


def relative_error(a, b):
    """Largest absolute difference relative to the largest magnitude."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-12)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)
