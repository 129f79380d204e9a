"""Reverse-mode automatic differentiation on an explicit tape.

Dense tensors in one floating dtype per tape (float64 by default; training
uses float32 tapes for speed). The op set is deliberately small and first
order: there is no way to differentiate through a backward pass, and nothing
here builds second-derivative graphs. Higher-level code that needs
derivatives of a gradient (e.g. a loss containing grad_x u) must emit that
gradient as ordinary forward ops instead (see network.emit_with_input_grad).

A tape is write-once: ops append nodes, values are computed eagerly, and
backward(root) walks the nodes in reverse creation order exactly once.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible for a tape op."""


def dtype_for(array) -> np.dtype:
    """Tape dtype matching an array: its own floating dtype, else float64."""
    dt = getattr(array, "dtype", None)
    if dt in (np.dtype(np.float32), np.dtype(np.float64)):
        return np.dtype(dt)
    return np.dtype(np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Gradients:
    """Result of one backward pass. Nodes the root does not depend on get zeros."""

    def __init__(self, tape: "Tape", adjoints: dict):
        self._tape = tape
        self._adjoints = adjoints

    def of(self, node: int) -> np.ndarray:
        g = self._adjoints.get(node)
        if g is None:
            return np.zeros_like(self._tape.value(node))
        return g


class Tape:
    """Append-only computation record.

    Node handles are plain ints. `checked=True` validates that every produced
    value is finite (NaN/Inf rejected at creation), at some cost per op.
    """

    def __init__(self, checked: bool = False, dtype=np.float64):
        self.checked = checked
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError(f"tape dtype must be float32 or float64, got {dtype!r}")
        self._op: list[str] = []
        self._args: list[tuple] = []
        self._val: list[np.ndarray] = []
        self._aux: list = []

    def __len__(self) -> int:
        return len(self._op)

    def value(self, node: int) -> np.ndarray:
        return self._val[node]

    def _push(self, op: str, args: tuple, value: np.ndarray, aux=None) -> int:
        if self.checked and not np.all(np.isfinite(value)):
            raise ValueError(f"{op}: non-finite value produced on checked tape")
        self._op.append(op)
        self._args.append(args)
        self._val.append(value)
        self._aux.append(aux)
        return len(self._op) - 1

    # ---- leaves ----

    def leaf(self, value) -> int:
        return self._push("leaf", (), np.asarray(value, dtype=self.dtype))

    # ---- elementwise / broadcast ----

    def add(self, a: int, b: int) -> int:
        va, vb = self._val[a], self._val[b]
        try:
            out = va + vb
        except ValueError:
            raise ShapeError(f"add: shapes {va.shape} and {vb.shape} do not broadcast")
        return self._push("add", (a, b), out)

    def sub(self, a: int, b: int) -> int:
        va, vb = self._val[a], self._val[b]
        try:
            out = va - vb
        except ValueError:
            raise ShapeError(f"sub: shapes {va.shape} and {vb.shape} do not broadcast")
        return self._push("sub", (a, b), out)

    def mul(self, a: int, b: int) -> int:
        va, vb = self._val[a], self._val[b]
        try:
            out = va * vb
        except ValueError:
            raise ShapeError(f"mul: shapes {va.shape} and {vb.shape} do not broadcast")
        return self._push("mul", (a, b), out)

    def scale(self, a: int, c: float) -> int:
        return self._push("scale", (a,), self._val[a] * float(c), float(c))

    def shift(self, a: int, c: float) -> int:
        return self._push("shift", (a,), self._val[a] + float(c), float(c))

    def tanh(self, a: int) -> int:
        return self._push("tanh", (a,), np.tanh(self._val[a]))

    def square(self, a: int) -> int:
        v = self._val[a]
        return self._push("square", (a,), v * v)

    def one_minus_square(self, a: int) -> int:
        """1 - a^2 as a single node; the tanh derivative when a = tanh(z)."""
        v = self._val[a]
        return self._push("omsq", (a,), 1.0 - v * v)

    # ---- linear algebra ----

    def matmul(self, a: int, b: int) -> int:
        va, vb = self._val[a], self._val[b]
        ka = va.shape[-1] if va.ndim else None
        kb = vb.shape[0] if vb.ndim else None
        if va.ndim == 0 or vb.ndim == 0 or ka != kb:
            raise ShapeError(f"matmul: shapes {va.shape} and {vb.shape} are incompatible")
        return self._push("matmul", (a, b), np.matmul(va, vb))

    def transpose(self, a: int) -> int:
        va = self._val[a]
        if va.ndim != 2:
            raise ShapeError(f"transpose: expected a matrix, got shape {va.shape}")
        return self._push("transpose", (a,), va.T)

    # ---- reductions / reshapes ----

    def sum(self, a: int) -> int:
        return self._push("sum", (a,), np.sum(self._val[a]))

    def row_sum(self, a: int) -> int:
        va = self._val[a]
        if va.ndim < 1:
            raise ShapeError(f"row_sum: expected at least 1 axis, got shape {va.shape}")
        return self._push("row_sum", (a,), va.sum(axis=-1))

    def reshape(self, a: int, shape: tuple) -> int:
        va = self._val[a]
        try:
            out = va.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: cannot view shape {va.shape} as {shape}")
        return self._push("reshape", (a,), out, va.shape)

    # ---- reverse pass ----

    def backward(self, root: int) -> Gradients:
        """Accumulate d(root)/d(node) for every node the root depends on.

        The root must hold a single scalar. Visits each node at most once, in
        reverse creation order, so cost is one pass over the recorded ops.
        """
        rv = self._val[root]
        if rv.size != 1:
            raise ShapeError(f"backward: root must be scalar, got shape {rv.shape}")
        adj: dict[int, np.ndarray] = {root: np.ones_like(rv)}

        def acc(node: int, g: np.ndarray):
            cur = adj.get(node)
            adj[node] = g if cur is None else cur + g

        for i in range(root, -1, -1):
            g = adj.get(i)
            if g is None:
                continue
            op = self._op[i]
            args = self._args[i]
            if op == "leaf":
                continue
            elif op == "add":
                a, b = args
                acc(a, _unbroadcast(g, self._val[a].shape))
                acc(b, _unbroadcast(g, self._val[b].shape))
            elif op == "sub":
                a, b = args
                acc(a, _unbroadcast(g, self._val[a].shape))
                acc(b, _unbroadcast(-g, self._val[b].shape))
            elif op == "mul":
                a, b = args
                acc(a, _unbroadcast(g * self._val[b], self._val[a].shape))
                acc(b, _unbroadcast(g * self._val[a], self._val[b].shape))
            elif op == "scale":
                acc(args[0], g * self._aux[i])
            elif op == "shift":
                acc(args[0], g)
            elif op == "tanh":
                y = self._val[i]
                acc(args[0], g * (1.0 - y * y))
            elif op == "square":
                acc(args[0], 2.0 * g * self._val[args[0]])
            elif op == "omsq":
                acc(args[0], -2.0 * g * self._val[args[0]])
            elif op == "matmul":
                a, b = args
                va, vb = self._val[a], self._val[b]
                if va.ndim == 2 and vb.ndim == 2:
                    acc(a, g @ vb.T)
                    acc(b, va.T @ g)
                elif va.ndim == 1 and vb.ndim == 2:
                    acc(a, vb @ g)
                    acc(b, np.outer(va, g))
                elif va.ndim == 2 and vb.ndim == 1:
                    acc(a, np.outer(g, vb))
                    acc(b, g @ va)
                else:  # 1D dot 1D
                    acc(a, g * vb)
                    acc(b, g * va)
            elif op == "transpose":
                acc(args[0], g.T)
            elif op == "sum":
                acc(args[0], np.broadcast_to(g, self._val[args[0]].shape).copy())
            elif op == "row_sum":
                acc(args[0], np.broadcast_to(g[..., None], self._val[args[0]].shape).copy())
            elif op == "reshape":
                acc(args[0], g.reshape(self._aux[i]))
            else:  # pragma: no cover
                raise RuntimeError(f"unknown op {op}")
        return Gradients(self, adj)


def one_minus_square(tape: Tape, a: int) -> int:
    """1 - a^2, the tanh derivative when a = tanh(z)."""
    return tape.one_minus_square(a)
