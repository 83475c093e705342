import itertools

import numpy as np
import pytest

from stackbatch.model import ModelConfig, ParserModel
from stackbatch.synthetic import generate
from stackbatch.treebank import Vocab


def numeric_grad(f, x, step=1e-6):
    """Central finite differences of scalar ``f`` w.r.t. array ``x`` (mutated
    and restored in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + step
        hi = f()
        x[i] = old - step
        lo = f()
        x[i] = old
        grad[i] = (hi - lo) / (2 * step)
    return grad


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else np.linalg.norm(a - b) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def toy_corpus():
    return generate(40, seed=3)


def small_config(**kw):
    base = dict(hidden=8, state_dim=10, action_dim=5, word_dim=4, pos_dim=3, token_dim=6, stack_depth=40)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def small_model(toy_corpus):
    return ParserModel.create(small_config(), Vocab.build(toy_corpus), seed=7)


def random_cell(g, rng, d_in, H, scale=0.5):
    from stackbatch.stacklstm import LSTMCellParams
    return LSTMCellParams(g.leaf(rng.uniform(-scale, scale, (d_in, 4 * H)), requires_grad=True),
                          g.leaf(rng.uniform(-scale, scale, (H, 4 * H)), requires_grad=True),
                          g.leaf(rng.uniform(-scale, scale, (1, 4 * H)), requires_grad=True))


def random_valid_ops(rng, length):
    ops, depth = [], 0
    for _ in range(length):
        choices = [0, 1] + ([-1] if depth > 0 else [])
        op = int(rng.choice(choices))
        depth += op
        ops.append(op)
    return ops


def stacklstm_equivalence_trial(rng, lanes, steps, d_in=4, H=5):
    """Run the batched StackLSTM and the per-lane sequential reference on the
    same random problem. Returns (max abs output diff, max rel grad diff)."""
    from stackbatch.autodiff import Graph
    from stackbatch.stacklstm import StackLSTM, sequential_reference_run

    ops = [random_valid_ops(rng, steps) for _ in range(lanes)]
    xs = [rng.normal(size=(lanes, d_in)) for _ in range(steps)]
    weights = [rng.normal(size=(lanes, H)) for _ in range(steps)]
    h0 = rng.normal(size=(1, H))
    c0 = rng.normal(size=(1, H))
    cell_seed = int(rng.integers(2**31))

    g = Graph()
    cell = random_cell(g, np.random.default_rng(cell_seed), d_in, H)
    h0n, c0n = g.leaf(h0, requires_grad=True), g.leaf(c0, requires_grad=True)
    xn = [g.leaf(x, requires_grad=True) for x in xs]
    sl = StackLSTM(g, cell, lanes, h0n, c0n, depth=steps + 2)
    tops = sl.run_sequence(xn, [[ops[b][t] for b in range(lanes)] for t in range(steps)])
    if steps:
        loss = g.sum(g.concat_rows([g.mul(t, g.leaf(w)) for t, w in zip(tops, weights)]))
        g.backward(loss)

    r = Graph()
    rcell = random_cell(r, np.random.default_rng(cell_seed), d_in, H)
    rh0, rc0 = r.leaf(h0, requires_grad=True), r.leaf(c0, requires_grad=True)
    rx = [[r.leaf(x[b], requires_grad=True) for x in xs] for b in range(lanes)]
    out_diff, terms = 0.0, []
    for b in range(lanes):
        ref = sequential_reference_run(r, rcell, rh0, rc0, rx[b], ops[b])
        for t in range(steps):
            out_diff = max(out_diff, float(np.abs(ref[t].value[0] - tops[t].value[b]).max()))
            terms.append(r.mul(ref[t], r.leaf(weights[t][b])))
    if not steps:
        return out_diff, 0.0
    r.backward(r.sum(r.concat_rows(terms)))
    pairs = [(cell.w_in, rcell.w_in), (cell.w_rec, rcell.w_rec), (cell.bias, rcell.bias),
             (h0n, rh0), (c0n, rc0)]
    grad_diff = 0.0
    for a, b in pairs:
        grad_diff = max(grad_diff, rel_err(a.grad, b.grad))
    for t in range(steps):
        ref_grad = np.concatenate([rx[b][t].grad for b in range(lanes)])
        grad_diff = max(grad_diff, rel_err(xn[t].grad, ref_grad))
    return out_diff, grad_diff


def projective_head_lists(n):
    """All single-root projective head vectors over n tokens.

    Subtrees of a projective tree are contiguous, so the span holding the
    leftmost remaining token is peeled off first; every tree has exactly one
    such decomposition."""
    def forest(lo, hi, head):
        if lo > hi:
            yield {}
            return
        for r in range(lo, hi + 1):
            for end in range(r, hi + 1):
                for left in forest(lo, r - 1, r):
                    for right in forest(r + 1, end, r):
                        for rest in forest(end + 1, hi, head):
                            yield {r: head, **left, **right, **rest}

    for root in range(1, n + 1):
        for left in forest(1, root - 1, root):
            for right in forest(root + 1, n, root):
                heads = {root: 0, **left, **right}
                yield [heads[d] for d in range(1, n + 1)]


def reference_sentence_nll(model, enc, seq):
    """Unbatched, branching forward pass for one sentence.

    Token reps one row at a time, the buffer LSTM rerun from the right for
    each front position, a Python list as the parser stack and a numpy
    log-softmax over the legal actions. Returns the summed NLL of ``seq``.
    """
    from stackbatch.autodiff import Graph
    from stackbatch.stacklstm import LSTMCellParams, lstm_cell, sequential_reference_step
    from stackbatch.transitions import Configuration, apply, stack_buffer_ops

    g = Graph()
    P = {k: g.leaf(v) for k, v in model.params.items()}

    def cell(prefix):
        return LSTMCellParams(P[f"{prefix}_w_in"], P[f"{prefix}_w_rec"], P[f"{prefix}_b"])

    n = enc.n
    reps = []
    for i in range(n + 1):
        parts = [g.gather_rows(P["word_emb"], [enc.word_ids[i]])]
        if enc.pretrained.shape[1]:
            parts.append(g.leaf(enc.pretrained[i:i + 1]))
        parts.append(g.gather_rows(P["pos_emb"], [enc.pos_ids[i]]))
        reps.append(g.relu(g.add(g.matmul(g.concat_cols(parts), P["tok_w"]), P["tok_b"])))

    def buffer_state(front):
        h, c = P["buf_h0"], P["buf_c0"]
        for j in range(n - 1, front - 1, -1):
            h, c = lstm_cell(g, cell("buf"), reps[j], h, c)
        return h

    stack = [(P["stack_h0"], P["stack_c0"])]
    act_h, act_c = P["act_h0"], P["act_c0"]
    c = Configuration.initial(n)
    total = 0.0
    for t in seq:
        front = c.buf - 1
        state = g.concat_cols([stack[-1][0], buffer_state(front), act_h])
        hidden = g.relu(g.add(g.matmul(state, P["cls_w1"]), P["cls_b1"]))
        z = g.add(g.matmul(hidden, P["cls_w2"]), P["cls_b2"]).value[0]
        legal = model.legal_row(c)
        zl = z[legal]
        top = zl.max()
        total += top + np.log(np.exp(zl - top).sum()) - z[model.action_index[t]]
        op = stack_buffer_ops(model.system, t)[0]
        sequential_reference_step(g, cell("stack"), stack, reps[min(front, n)], op)
        a = g.gather_rows(P["act_emb"], [model.action_index[t]])
        act_h, act_c = lstm_cell(g, cell("act"), a, act_h, act_c)
        c = apply(model.system, c, t)
    return total


def valid_op_strings(max_len):
    for length in range(1, max_len + 1):
        for ops in itertools.product((-1, 0, 1), repeat=length):
            depth = 0
            for op in ops:
                depth += op
                if depth < 0:
                    break
            else:
                yield ops


def reference_stack_tops(ops, payloads, initial):
    """Immutable cons-list stack with a real conditional push/pop/hold."""
    stack = (initial, None)
    out = []
    for op, p in zip(ops, payloads):
        if op == 1:
            stack = (p, stack)
        elif op == -1:
            stack = stack[1]
        out.append(stack[0])
    return out


def exhaustive_stack_check(max_len):
    """Run every valid op string up to ``max_len`` through one BatchedStack
    (one lane per string, grouped by length) and compare each step's top
    with the branching reference. Returns (strings checked, max abs diff)."""
    from stackbatch.autodiff import Graph
    from stackbatch.stack import new_stack

    by_length = {}
    for ops in valid_op_strings(max_len):
        by_length.setdefault(len(ops), []).append(ops)
    rng = np.random.default_rng(1)
    checked, worst = 0, 0.0
    for length, group in sorted(by_length.items()):
        lanes = len(group)
        g = Graph()
        h0 = g.leaf(rng.normal(size=(1, 3)))
        s = new_stack(g, lanes, length + 2, h0, h0)
        payloads = [rng.normal(size=(lanes, 3)) for _ in range(length)]
        tops = []
        for t in range(length):
            node = g.leaf(payloads[t])
            s.write_above_top(node, node)
            s.advance([ops[t] for ops in group])
            tops.append(s.read_top()[0].value)
        for lane, ops in enumerate(group):
            want = reference_stack_tops(ops, [p[lane] for p in payloads], h0.value[0])
            for t in range(length):
                worst = max(worst, float(np.abs(tops[t][lane] - want[t]).max()))
        checked += lanes
    return checked, worst
