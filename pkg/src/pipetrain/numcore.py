"""Dense float64 arithmetic with explicit shape checks, plus seeded RNG.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here exist so that every caller gets the same shape errors and the same
accumulation precision.
"""

import numpy as np

from .errors import InputError, ShapeError

__all__ = ["as_tensor", "matmul", "elementwise", "rmse", "make_rng"]

_BINARY = ("add", "sub", "hadamard")
_UNARY = ("relu", "relu_grad", "tanh", "tanh_grad")


def as_tensor(x):
    """Return ``x`` as a C-contiguous float64 array (copying only if needed)."""
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def elementwise(op, a, b=None, scalar=None):
    """Apply one of the named elementwise operations.

    ``add``, ``sub`` and ``hadamard`` take two tensors of identical shape;
    ``scale`` multiplies ``a`` by ``scalar``; the activation ops take ``a``
    only. ``relu_grad`` and ``tanh_grad`` are derivatives with respect to the
    pre-activation value ``a``.
    """
    a = as_tensor(a)
    if op in _BINARY:
        if b is None:
            raise InputError(f"{op} needs two operands")
        b = as_tensor(b)
        if a.shape != b.shape:
            raise ShapeError(f"{op}: shapes differ, {a.shape} vs {b.shape}")
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        return a * b
    if op == "scale":
        if scalar is None:
            raise InputError("scale needs a scalar")
        return a * float(scalar)
    if op == "relu":
        return np.maximum(a, 0.0)
    if op == "relu_grad":
        return (a > 0.0).astype(np.float64)
    if op == "tanh":
        return np.tanh(a)
    if op == "tanh_grad":
        t = np.tanh(a)
        return 1.0 - t * t
    raise InputError(f"unknown elementwise op {op!r}")


def rmse(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"rmse: shapes differ, {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    d = np.abs(a - b)
    # scale by the largest difference so tiny differences do not square to zero
    top = d.max()
    if top == 0.0:
        return 0.0
    d /= top
    return float(top * np.sqrt(np.mean(d * d)))


def make_rng(seed):
    """Counter-based generator (Philox) keyed by a 64-bit seed.

    Philox output depends only on key and counter, so the draw sequence is
    identical on every platform numpy supports.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise InputError(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed))
