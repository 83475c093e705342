"""Fixed-depth batched stack of recurrent states with a per-lane pointer."""

from __future__ import annotations

import numpy as np

from .autodiff import Graph, Node

POP, HOLD, PUSH = -1, 0, 1

DEFAULT_DEPTH = 150


class StackError(IndexError):
    def __init__(self, message: str, lanes):
        super().__init__(message)
        self.lanes = list(lanes)


class StackOverflow(StackError):
    pass


class StackUnderflow(StackError):
    pass


def as_ops(ops, lanes: int) -> np.ndarray:
    arr = np.asarray(ops, dtype=np.int64).reshape(-1)
    if arr.size != lanes:
        raise ValueError(f"expected {lanes} stack ops, got {arr.size}")
    if not np.isin(arr, (POP, HOLD, PUSH)).all():
        raise ValueError(f"stack ops must be in {{-1, 0, +1}}, got {arr.tolist()}")
    return arr


class BatchedStack:
    """``lanes`` independent stacks sharing one depth x lanes grid of cells.

    A cell does not copy its state; it points at a row of a node on the
    graph. Overwriting a cell just re-points it, so states that were read
    before being popped keep their place on the tape and still receive
    gradient. Depth 0 holds the empty-stack state; ``ptr == 0`` means the
    lane is empty.
    """

    def __init__(self, graph: Graph, lanes: int, depth: int, h0: Node, c0: Node):
        if depth < 2:
            raise ValueError(f"stack depth must be at least 2, got {depth}")
        if lanes < 1:
            raise ValueError(f"need at least one lane, got {lanes}")
        if h0.shape != c0.shape or h0.shape[0] not in (1, lanes):
            raise ValueError(f"initial state must be 1xH or {lanes}xH, got {h0.shape} / {c0.shape}")
        self.graph = graph
        self.lanes = lanes
        self.depth = depth
        self.width = h0.shape[1]
        self.ptr = np.zeros(lanes, dtype=np.int64)
        self._h_src: list[Node] = [h0]
        self._c_src: list[Node] = [c0]
        self._src = np.zeros((depth, lanes), dtype=np.intp)
        self._row = np.zeros((depth, lanes), dtype=np.intp)
        if h0.shape[0] == lanes:
            self._row[0] = np.arange(lanes)

    def read_top(self) -> tuple[Node, Node]:
        lanes = np.arange(self.lanes)
        src = self._src[self.ptr, lanes]
        row = self._row[self.ptr, lanes]
        return (self.graph.gather_multi(self._h_src, src, row),
                self.graph.gather_multi(self._c_src, src, row))

    def write_above_top(self, h_new: Node, c_new: Node) -> None:
        if h_new.shape != (self.lanes, self.width) or c_new.shape != h_new.shape:
            raise ValueError(f"expected {self.lanes}x{self.width} states, got {h_new.shape} / {c_new.shape}")
        target = self.ptr + 1
        full = np.flatnonzero(target > self.depth - 1)
        if full.size:
            raise StackOverflow(f"stack overflow in lane(s) {full.tolist()} (depth {self.depth})", full)
        lanes = np.arange(self.lanes)
        self._src[target, lanes] = len(self._h_src)
        self._row[target, lanes] = lanes
        self._h_src.append(h_new)
        self._c_src.append(c_new)

    def advance(self, ops) -> None:
        self.ptr = self.check_advance(ops)

    def check_advance(self, ops) -> np.ndarray:
        """Pointer vector ``advance(ops)`` would produce; raises without
        touching the stack if any lane would leave ``[0, depth-1]``."""
        ops = as_ops(ops, self.lanes)
        moved = self.ptr + ops
        under = np.flatnonzero(moved < 0)
        if under.size:
            raise StackUnderflow(f"pop on empty stack in lane(s) {under.tolist()}", under)
        over = np.flatnonzero(moved > self.depth - 1)
        if over.size:
            raise StackOverflow(f"stack overflow in lane(s) {over.tolist()} (depth {self.depth})", over)
        return moved


def new_stack(graph: Graph, lanes: int, depth: int, h0: Node, c0: Node) -> BatchedStack:
    return BatchedStack(graph, lanes, depth, h0, c0)
