"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

A :class:`Graph` is an append-only tape. Every operation appends a
:class:`Node` whose value is never mutated afterwards, so a node stays
reachable (and differentiable) for as long as the graph lives, even when
nothing outside the tape points at it any more.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """A value on the tape became NaN or infinite."""


class ShapeError(ValueError):
    pass


class Node:
    __slots__ = ("graph", "index", "value", "grad", "parents", "requires_grad", "op", "_backward")

    def __init__(self, graph, index, value, parents, requires_grad, op, backward):
        self.graph = graph
        self.index = index
        self.value = value
        self.grad = None
        self.parents = parents
        self.requires_grad = requires_grad
        self.op = op
        self._backward = backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(#{self.index} {self.op} {self.value.shape[0]}x{self.value.shape[1]})"


def _as_2d(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.isfinite(value).all():
        raise NonFiniteError(f"non-finite value produced by {op}")


def _sum_to(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # undo a 1xC -> RxC row broadcast
    if grad.shape == shape:
        return grad
    return grad.sum(axis=0, keepdims=True)


def _broadcast_shape(a: Node, b: Node, op: str) -> None:
    (ra, ca), (rb, cb) = a.shape, b.shape
    if ca != cb or not (ra == rb or ra == 1 or rb == 1):
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


class Graph:
    """Append-only computation tape.

    Topological order is insertion order, so :meth:`backward` is a single
    reverse sweep over ``nodes``.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, value, parents, op, backward: Callable | None) -> Node:
        _check_finite(value, op)
        requires_grad = any(p.requires_grad for p in parents)
        node = Node(self, len(self.nodes), value, parents, requires_grad, op,
                    backward if requires_grad else None)
        self.nodes.append(node)
        return node

    def _own(self, *nodes: Node) -> None:
        for n in nodes:
            if n.graph is not self:
                raise ValueError(f"{n!r} belongs to a different graph")

    # -- leaves ---------------------------------------------------------

    def leaf(self, values, requires_grad: bool = False) -> Node:
        value = _as_2d(values)
        _check_finite(value, "leaf")
        node = Node(self, len(self.nodes), value, (), requires_grad, "leaf", None)
        if requires_grad:
            node.grad = np.zeros_like(value)
        self.nodes.append(node)
        return node

    # -- dense ops ------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        self._own(a, b)
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g @ b.value.T)
            if b.requires_grad:
                _accumulate(b, a.value.T @ g)

        return self._push(a.value @ b.value, (a, b), "matmul", backward)

    def add(self, a: Node, b: Node) -> Node:
        self._own(a, b)
        _broadcast_shape(a, b, "add")

        def backward(g):
            if a.requires_grad:
                _accumulate(a, _sum_to(g, a.shape))
            if b.requires_grad:
                _accumulate(b, _sum_to(g, b.shape))

        return self._push(a.value + b.value, (a, b), "add", backward)

    def mul(self, a: Node, b: Node) -> Node:
        self._own(a, b)
        _broadcast_shape(a, b, "mul")

        def backward(g):
            if a.requires_grad:
                _accumulate(a, _sum_to(g * b.value, a.shape))
            if b.requires_grad:
                _accumulate(b, _sum_to(g * a.value, b.shape))

        return self._push(a.value * b.value, (a, b), "mul", backward)

    def sigmoid(self, a: Node) -> Node:
        self._own(a)
        # tanh form avoids overflow in exp for large negative inputs
        out = 0.5 * (np.tanh(0.5 * a.value) + 1.0)

        def backward(g):
            _accumulate(a, g * out * (1.0 - out))

        return self._push(out, (a,), "sigmoid", backward)

    def tanh(self, a: Node) -> Node:
        self._own(a)
        out = np.tanh(a.value)

        def backward(g):
            _accumulate(a, g * (1.0 - out * out))

        return self._push(out, (a,), "tanh", backward)

    def relu(self, a: Node) -> Node:
        self._own(a)
        out = np.maximum(a.value, 0.0)

        def backward(g):
            _accumulate(a, g * (a.value > 0.0))

        return self._push(out, (a,), "relu", backward)

    def concat_cols(self, parts: Sequence[Node]) -> Node:
        self._own(*parts)
        if not parts:
            raise ShapeError("concat_cols: no parts")
        rows = parts[0].shape[0]
        if any(p.shape[0] != rows for p in parts):
            raise ShapeError(f"concat_cols: row counts {[p.shape[0] for p in parts]}")
        bounds = np.cumsum([0] + [p.shape[1] for p in parts])

        def backward(g):
            for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
                if p.requires_grad:
                    _accumulate(p, g[:, lo:hi])

        value = np.concatenate([p.value for p in parts], axis=1)
        return self._push(value, tuple(parts), "concat_cols", backward)

    def concat_rows(self, parts: Sequence[Node]) -> Node:
        self._own(*parts)
        if not parts:
            raise ShapeError("concat_rows: no parts")
        cols = parts[0].shape[1]
        if any(p.shape[1] != cols for p in parts):
            raise ShapeError(f"concat_rows: column counts {[p.shape[1] for p in parts]}")
        bounds = np.cumsum([0] + [p.shape[0] for p in parts])

        def backward(g):
            for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
                if p.requires_grad:
                    _accumulate(p, g[lo:hi])

        value = np.concatenate([p.value for p in parts], axis=0)
        return self._push(value, tuple(parts), "concat_rows", backward)

    def slice_cols(self, a: Node, start: int, stop: int) -> Node:
        self._own(a)
        if not 0 <= start < stop <= a.shape[1]:
            raise ShapeError(f"slice_cols: [{start}:{stop}] of {a.shape}")

        def backward(g):
            full = np.zeros_like(a.value)
            full[:, start:stop] = g
            _accumulate(a, full)

        return self._push(a.value[:, start:stop], (a,), "slice_cols", backward)

    def sum(self, a: Node) -> Node:
        self._own(a)

        def backward(g):
            _accumulate(a, np.full_like(a.value, g[0, 0]))

        return self._push(np.array([[a.value.sum()]]), (a,), "sum", backward)

    def scale(self, a: Node, factor: float) -> Node:
        self._own(a)

        def backward(g):
            _accumulate(a, g * factor)

        return self._push(a.value * factor, (a,), "scale", backward)

    # -- indexing -------------------------------------------------------

    def gather_rows(self, src: Node, idx) -> Node:
        """``out[i] = src[idx[i]]``; backward scatter-adds, so repeated
        indices accumulate."""
        self._own(src)
        idx = np.asarray(idx, dtype=np.intp).reshape(-1)
        rows = src.shape[0]
        if idx.size and (idx.min() < 0 or idx.max() >= rows):
            bad = idx[(idx < 0) | (idx >= rows)][0]
            raise IndexError(f"gather_rows: index {bad} out of range for {rows} rows")

        def backward(g):
            full = np.zeros_like(src.value)
            np.add.at(full, idx, g)
            _accumulate(src, full)

        return self._push(src.value[idx], (src,), "gather_rows", backward)

    def gather_multi(self, sources: Sequence[Node], which, rows) -> Node:
        """Row gather over the virtual row-stack of several nodes.

        Output row ``i`` is ``sources[which[i]].value[rows[i]]``. Gradient
        reaches exactly the (source, row) cells that were read.
        """
        self._own(*sources)
        which = np.asarray(which, dtype=np.intp).reshape(-1)
        rows = np.asarray(rows, dtype=np.intp).reshape(-1)
        if which.shape != rows.shape:
            raise ShapeError("gather_multi: which/rows length mismatch")
        used = np.unique(which)
        if used.size and (used[0] < 0 or used[-1] >= len(sources)):
            raise IndexError("gather_multi: source index out of range")
        cols = sources[used[0]].shape[1] if used.size else 0
        parents = []
        picks = []
        out = np.empty((which.size, cols))
        for s in used:
            src = sources[s]
            if src.shape[1] != cols:
                raise ShapeError("gather_multi: sources differ in width")
            lanes = np.flatnonzero(which == s)
            r = rows[lanes]
            if r.min() < 0 or r.max() >= src.shape[0]:
                raise IndexError(f"gather_multi: row out of range for source {s}")
            out[lanes] = src.value[r]
            parents.append(src)
            picks.append((src, lanes, r))

        def backward(g):
            for src, lanes, r in picks:
                if src.requires_grad:
                    full = np.zeros_like(src.value)
                    np.add.at(full, r, g[lanes])
                    _accumulate(src, full)

        return self._push(out, tuple(parents), "gather_multi", backward)

    # -- loss -----------------------------------------------------------

    def masked_softmax_cross_entropy(self, logits: Node, legal_mask, target, loss_mask) -> Node:
        """Mean negative log-likelihood of ``target`` under a softmax
        restricted to legal actions, averaged over lanes with ``loss_mask``.

        Lanes outside ``loss_mask`` contribute exactly zero loss and zero
        gradient.
        """
        self._own(logits)
        z = logits.value
        legal = np.asarray(legal_mask, dtype=bool)
        target = np.asarray(target, dtype=np.intp).reshape(-1)
        active = np.asarray(loss_mask, dtype=bool).reshape(-1)
        if legal.shape != z.shape or target.size != z.shape[0] or active.size != z.shape[0]:
            raise ShapeError("masked_softmax_cross_entropy: mask/target shapes do not match logits")
        lanes = np.flatnonzero(active)
        if lanes.size == 0:
            raise ValueError("masked_softmax_cross_entropy: every lane is masked out")
        za, la, ta = z[lanes], legal[lanes], target[lanes]
        if not la.any(axis=1).all():
            raise ValueError("masked_softmax_cross_entropy: active lane with no legal action")
        if not la[np.arange(lanes.size), ta].all():
            bad = lanes[~la[np.arange(lanes.size), ta]][0]
            raise ValueError(f"masked_softmax_cross_entropy: target illegal in lane {bad}")

        masked = np.where(la, za, -np.inf)
        top = masked.max(axis=1, keepdims=True)
        e = np.where(la, np.exp(masked - top), 0.0)
        total = e.sum(axis=1, keepdims=True)
        lane_loss = (np.log(total) + top)[:, 0] - za[np.arange(lanes.size), ta]
        count = lanes.size
        probs = e / total

        def backward(g):
            d = probs.copy()
            d[np.arange(lanes.size), ta] -= 1.0
            full = np.zeros_like(z)
            full[lanes] = d * (g[0, 0] / count)
            _accumulate(logits, full)

        return self._push(np.array([[lane_loss.sum() / count]]), (logits,),
                          "masked_softmax_cross_entropy", backward)

    # -- reverse sweep --------------------------------------------------

    def backward(self, root: Node) -> None:
        self._own(root)
        if root.shape != (1, 1):
            raise ShapeError(f"backward: root must be 1x1, got {root.shape}")
        if not root.requires_grad:
            return
        _accumulate(root, np.ones((1, 1)))
        for node in reversed(self.nodes[: root.index + 1]):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _accumulate(node: Node, g: np.ndarray) -> None:
    if not node.requires_grad:
        return
    node.grad = g if node.grad is None else node.grad + g
