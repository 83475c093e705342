"""Branch-free batched StackLSTM and its per-lane sequential reference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .autodiff import Graph, Node
from .stack import DEFAULT_DEPTH, HOLD, POP, PUSH, BatchedStack, StackUnderflow


@dataclass
class LSTMCellParams:
    """LSTM weights as graph nodes.

    ``w_in`` is ``d_in x 4H`` and ``w_rec`` is ``H x 4H`` (transposed
    relative to the usual gate-major layout so batches multiply from the
    left); ``bias`` is ``1 x 4H``. Gate blocks are ordered input, forget,
    cell candidate, output.
    """

    w_in: Node
    w_rec: Node
    bias: Node

    @property
    def hidden(self) -> int:
        return self.w_rec.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_in.shape[0]


def lstm_cell(g: Graph, p: LSTMCellParams, x: Node, h_prev: Node, c_prev: Node) -> tuple[Node, Node]:
    H = p.hidden
    if p.w_rec.shape != (H, 4 * H) or p.bias.shape != (1, 4 * H) or p.w_in.shape[1] != 4 * H:
        raise ValueError("inconsistent LSTM parameter shapes")
    if h_prev.shape[1] != H or c_prev.shape[1] != H:
        raise ValueError(f"state width must be {H}")
    gates = g.add(g.add(g.matmul(x, p.w_in), g.matmul(h_prev, p.w_rec)), p.bias)
    i = g.sigmoid(g.slice_cols(gates, 0, H))
    f = g.sigmoid(g.slice_cols(gates, H, 2 * H))
    cand = g.tanh(g.slice_cols(gates, 2 * H, 3 * H))
    o = g.sigmoid(g.slice_cols(gates, 3 * H, 4 * H))
    c = g.add(g.mul(f, c_prev), g.mul(i, cand))
    h = g.mul(o, g.tanh(c))
    return h, c


class StackLSTM:
    """An LSTM whose previous state is the top of a batched stack.

    Every call to :meth:`step` runs the same operations for every lane:
    read the top, run the cell, write the result just above the top, move
    the pointer by the lane's op, read the top again. Pop and hold lanes
    simply never look at the cell they wrote.
    """

    def __init__(self, graph: Graph, cell: LSTMCellParams, lanes: int, h0: Node, c0: Node,
                 depth: int = DEFAULT_DEPTH):
        self.graph = graph
        self.cell = cell
        self.stack = BatchedStack(graph, lanes, depth, h0, c0)
        if self.stack.width != cell.hidden:
            raise ValueError("stack payload width must equal the LSTM hidden size")
        self.top_h, self.top_c = self.stack.read_top()

    def step(self, x: Node, ops) -> Node:
        g = self.graph
        self.stack.check_advance(ops)
        h, c = lstm_cell(g, self.cell, x, self.top_h, self.top_c)
        self.stack.write_above_top(h, c)
        self.stack.advance(ops)
        self.top_h, self.top_c = self.stack.read_top()
        return self.top_h

    def run_sequence(self, xs: Sequence[Node], ops_seq: Sequence) -> list[Node]:
        if len(xs) != len(ops_seq):
            raise ValueError(f"{len(xs)} inputs but {len(ops_seq)} op vectors")
        return [self.step(x, ops) for x, ops in zip(xs, ops_seq)]


def sequential_reference_step(g: Graph, cell: LSTMCellParams, stack: list, x: Node, op: int) -> Node:
    """One literal push/pop/hold on a growable list of ``(h, c)`` pairs."""
    if op == PUSH:
        h_prev, c_prev = stack[-1]
        stack.append(lstm_cell(g, cell, x, h_prev, c_prev))
    elif op == POP:
        if len(stack) <= 1:
            raise StackUnderflow("pop on empty stack", [0])
        stack.pop()
    elif op != HOLD:
        raise ValueError(f"unknown stack op {op}")
    return stack[-1][0]


def sequential_reference_run(g: Graph, cell: LSTMCellParams, h0: Node, c0: Node,
                             xs: Sequence[Node], ops: Sequence[int]) -> list[Node]:
    if len(xs) != len(ops):
        raise ValueError(f"{len(xs)} inputs but {len(ops)} ops")
    stack = [(h0, c0)]
    return [sequential_reference_step(g, cell, stack, x, int(op)) for x, op in zip(xs, ops)]
