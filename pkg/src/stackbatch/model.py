"""Greedy transition parser with a batched StackLSTM over the parser stack.

Per step the classifier sees three summaries: the StackLSTM top (parser
stack), a precomputed right-to-left LSTM state at the buffer front, and a
plain LSTM over the action history. Heterogeneous oracle sequences are
padded with hold steps so every lane runs the same operations.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Graph, Node
from .stack import HOLD
from .stacklstm import LSTMCellParams, StackLSTM, lstm_cell
from .transitions import (LEFT_ARC, REDUCE, RIGHT_ARC, SHIFT, BUFFER_POP, Configuration, DepTree,
                          System, Transition, apply, kinds, legal_kind, stack_buffer_ops)
from .treebank import PretrainedEmbeddings, Sentence, Vocab

MAGIC = b"HLCK1\n"


@dataclass
class ModelConfig:
    hidden: int = 200
    state_dim: int = 200
    action_dim: int = 48
    word_dim: int = 32
    pos_dim: int = 12
    token_dim: int = 100
    pretrained_dim: int = 0
    stack_depth: int = 150
    system: str = System.ARC_HYBRID.value
    # False keeps every LSTM's initial (h0, c0) at zero
    learn_initial_state: bool = True

    def __post_init__(self):
        self.system = System(self.system).value
        for name in ("hidden", "state_dim", "action_dim", "word_dim", "pos_dim", "token_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pretrained_dim < 0 or self.stack_depth < 2:
            raise ValueError("invalid pretrained_dim or stack_depth")


def action_inventory(system: System, labels: Sequence[str]) -> list[Transition]:
    out = [Transition(SHIFT)]
    if System(system) is System.ARC_EAGER:
        out.append(Transition(REDUCE))
    out += [Transition(LEFT_ARC, l) for l in labels]
    out += [Transition(RIGHT_ARC, l) for l in labels]
    return out


def _glorot(rng, rows, cols):
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def _lstm_arrays(rng, prefix, d_in, H):
    bias = np.zeros((1, 4 * H))
    bias[0, H:2 * H] = 1.0
    return {
        f"{prefix}_w_in": _glorot(rng, d_in, 4 * H),
        f"{prefix}_w_rec": _glorot(rng, H, 4 * H),
        f"{prefix}_b": bias,
        f"{prefix}_h0": np.zeros((1, H)),
        f"{prefix}_c0": np.zeros((1, H)),
    }


@dataclass
class EncodedSentence:
    """Vocabulary ids for one sentence; the last position is the ROOT
    sentinel."""

    word_ids: np.ndarray
    pos_ids: np.ndarray
    pretrained: np.ndarray

    @property
    def n(self) -> int:
        return len(self.word_ids) - 1


class ParserModel:
    def __init__(self, config: ModelConfig, vocab: Vocab, params: dict[str, np.ndarray],
                 pretrained: np.ndarray | None = None):
        self.config = config
        self.vocab = vocab
        self.system = System(config.system)
        self.params = params
        if pretrained is None:
            pretrained = np.zeros((len(vocab.forms), config.pretrained_dim))
        self.pretrained = pretrained
        self.actions = action_inventory(self.system, vocab.labels)
        self.action_index = {t: i for i, t in enumerate(self.actions)}
        kind_order = kinds(self.system)
        self._kind_of_action = np.array([kind_order.index(t.kind) for t in self.actions])
        self._stack_op_of_action = np.array([stack_buffer_ops(self.system, t)[0] for t in self.actions])
        self._buffer_pop_of_action = np.array(
            [stack_buffer_ops(self.system, t)[1] == BUFFER_POP for t in self.actions])

    @classmethod
    def create(cls, config: ModelConfig, vocab: Vocab, seed: int = 1,
               embeddings: PretrainedEmbeddings | None = None) -> "ParserModel":
        if embeddings is not None:
            config.pretrained_dim = embeddings.dim
        rng = np.random.default_rng(seed)
        H, A = config.hidden, len(action_inventory(config.system, vocab.labels))
        emb_in = config.word_dim + config.pretrained_dim + config.pos_dim
        params = {
            "word_emb": _glorot(rng, len(vocab.forms), config.word_dim),
            "pos_emb": _glorot(rng, len(vocab.pos), config.pos_dim),
            "act_emb": _glorot(rng, A, config.action_dim),
            "tok_w": _glorot(rng, emb_in, config.token_dim),
            "tok_b": np.zeros((1, config.token_dim)),
        }
        params.update(_lstm_arrays(rng, "stack", config.token_dim, H))
        params.update(_lstm_arrays(rng, "buf", config.token_dim, H))
        params.update(_lstm_arrays(rng, "act", config.action_dim, H))
        params.update({
            "cls_w1": _glorot(rng, 3 * H, config.state_dim),
            "cls_b1": np.zeros((1, config.state_dim)),
            "cls_w2": _glorot(rng, config.state_dim, A),
            "cls_b2": np.zeros((1, A)),
        })
        pretrained = None
        if embeddings is not None:
            pretrained = embeddings.rows(vocab.forms)
            pretrained[:2] = 0.0
        return cls(config, vocab, params, pretrained)

    def copy(self) -> "ParserModel":
        return ParserModel(ModelConfig(**asdict(self.config)), self.vocab,
                           {k: v.copy() for k, v in self.params.items()}, self.pretrained.copy())

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def encode(self, sentence: Sentence, unk_rng: np.random.Generator | None = None,
               singletons: frozenset[str] = frozenset()) -> EncodedSentence:
        """Map a sentence to ids. With ``unk_rng``, training singletons are
        replaced by UNK with probability 0.5."""
        if len(sentence) > self.config.stack_depth - 2:
            raise ValueError(f"sentence of {len(sentence)} tokens exceeds stack depth {self.config.stack_depth}")
        words = self.vocab.form_ids(sentence.forms)
        if unk_rng is not None:
            for i, w in enumerate(sentence.forms):
                if w in singletons and unk_rng.random() < 0.5:
                    words[i] = 0
        ids = np.array(words + [1], dtype=np.intp)
        pos = np.array(self.vocab.pos_ids(sentence.pos) + [1], dtype=np.intp)
        return EncodedSentence(ids, pos, self.pretrained[ids])

    def trainable(self) -> list[str]:
        names = sorted(self.params)
        if self.config.learn_initial_state:
            return names
        return [k for k in names if not k.endswith(("_h0", "_c0"))]

    def bind(self, graph: Graph, requires_grad: bool = True) -> dict[str, Node]:
        train = set(self.trainable()) if requires_grad else set()
        return {k: graph.leaf(v, k in train) for k, v in sorted(self.params.items())}

    def legal_row(self, c: Configuration) -> np.ndarray:
        ok = np.array([legal_kind(self.system, c, k) for k in kinds(self.system)])
        return ok[self._kind_of_action]


def _cell(P, prefix) -> LSTMCellParams:
    return LSTMCellParams(P[f"{prefix}_w_in"], P[f"{prefix}_w_rec"], P[f"{prefix}_b"])


def _tile(g: Graph, row: Node, lanes: int) -> Node:
    return g.gather_rows(row, np.zeros(lanes, dtype=np.intp))


def encode_tokens(g: Graph, P: dict[str, Node], batch: Sequence[EncodedSentence]) -> tuple[Node, np.ndarray]:
    """ReLU projection of [word; pretrained; pos] for every token of every
    lane, sentinels included, stacked lane after lane. Returns the
    representation node and each lane's row offset."""
    words = np.concatenate([s.word_ids for s in batch])
    tags = np.concatenate([s.pos_ids for s in batch])
    parts = [g.gather_rows(P["word_emb"], words)]
    pre = np.concatenate([s.pretrained for s in batch])
    if pre.shape[1]:
        parts.append(g.leaf(pre))
    parts.append(g.gather_rows(P["pos_emb"], tags))
    x = g.concat_cols(parts)
    reps = g.relu(g.add(g.matmul(x, P["tok_w"]), P["tok_b"]))
    offsets = np.cumsum([0] + [s.n + 1 for s in batch])[:-1]
    return reps, offsets


class BufferStates:
    """Right-to-left LSTM states for every buffer position, read by pointer.

    ``state(j)`` summarises tokens ``j..n-1`` of a lane; position ``n`` is
    the learned state of a buffer holding only the ROOT sentinel. Popping
    the buffer is just advancing ``j``.
    """

    def __init__(self, g: Graph, P: dict[str, Node], reps: Node, offsets: np.ndarray,
                 lengths: np.ndarray):
        self.g = g
        self.lengths = lengths
        B = len(lengths)
        cell = _cell(P, "buf")
        h, c = _tile(g, P["buf_h0"], B), _tile(g, P["buf_c0"], B)
        self.sources: list[Node] = [P["buf_h0"]]
        for k in range(int(lengths.max(initial=0))):
            # lanes shorter than k+1 keep running on their sentinel; never read
            pos = np.where(k < lengths, lengths - 1 - k, lengths)
            x = g.gather_rows(reps, offsets + pos)
            h, c = lstm_cell(g, cell, x, h, c)
            self.sources.append(h)

    def at(self, front: np.ndarray) -> Node:
        front = np.asarray(front)
        sentinel = front >= self.lengths
        which = np.where(sentinel, 0, self.lengths - front)
        rows = np.where(sentinel, 0, np.arange(len(front)))
        return self.g.gather_multi(self.sources, which, rows)


def encode_buffer(g, P, reps, offsets, lengths) -> BufferStates:
    return BufferStates(g, P, reps, offsets, np.asarray(lengths))


def classify_step(g: Graph, P: dict[str, Node], stack_top: Node, buffer_state: Node, action_top: Node) -> Node:
    state = g.concat_cols([stack_top, buffer_state, action_top])
    hidden = g.relu(g.add(g.matmul(state, P["cls_w1"]), P["cls_b1"]))
    return g.add(g.matmul(hidden, P["cls_w2"]), P["cls_b2"])


@dataclass
class BatchPlan:
    """Step-major arrays of shape ``T x B`` (legal masks ``T x B x A``).

    ``fronts`` is the 0-based buffer front position before each step
    (``n`` for the ROOT sentinel).
    """

    actions: np.ndarray
    stack_ops: np.ndarray
    buffer_pops: np.ndarray
    fronts: np.ndarray
    loss_mask: np.ndarray
    legal: np.ndarray
    lengths: np.ndarray

    @property
    def steps(self) -> int:
        return self.actions.shape[0]

    @property
    def lanes(self) -> int:
        return self.actions.shape[1]


def plan_batch(model: ParserModel, sequences: Sequence[Sequence[Transition]],
               lengths: Sequence[int] | None = None) -> BatchPlan:
    system = model.system
    if lengths is None:
        lengths = [len(seq) // 2 for seq in sequences]
    B = len(sequences)
    T = max((len(s) for s in sequences), default=0)
    A = model.num_actions
    actions = np.zeros((T, B), dtype=np.intp)
    stack_ops = np.full((T, B), HOLD, dtype=np.int64)
    buffer_pops = np.zeros((T, B), dtype=bool)
    fronts = np.tile(np.asarray(lengths, dtype=np.intp), (T, 1))
    loss_mask = np.zeros((T, B), dtype=bool)
    legal = np.zeros((T, B, A), dtype=bool)
    for b, (seq, n) in enumerate(zip(sequences, lengths)):
        c = Configuration.initial(n)
        for t, tr in enumerate(seq):
            if tr not in model.action_index:
                raise ValueError(f"transition {tr} is not in the {system.value} action inventory")
            a = model.action_index[tr]
            actions[t, b] = a
            stack_ops[t, b], buf_op = stack_buffer_ops(system, tr)
            buffer_pops[t, b] = buf_op == BUFFER_POP
            fronts[t, b] = c.buf - 1
            loss_mask[t, b] = True
            legal[t, b] = model.legal_row(c)
            c = apply(system, c, tr)
    return BatchPlan(actions, stack_ops, buffer_pops, fronts, loss_mask, legal,
                     np.asarray(lengths, dtype=np.intp))


@dataclass
class ForwardResult:
    loss: Node
    graph: Graph
    params: dict[str, Node]
    step_logits: list[np.ndarray] = field(default_factory=list)
    lane_losses: np.ndarray | None = None


class _Runner:
    """Shared per-step machinery for teacher-forced training and decoding."""

    def __init__(self, model: ParserModel, batch: Sequence[EncodedSentence], g: Graph,
                 P: dict[str, Node]):
        self.g, self.P = g, P
        B = len(batch)
        self.lengths = np.array([s.n for s in batch], dtype=np.intp)
        self.reps, self.offsets = encode_tokens(g, P, batch)
        self.buffer = encode_buffer(g, P, self.reps, self.offsets, self.lengths)
        self.stack = StackLSTM(g, _cell(P, "stack"), B, P["stack_h0"], P["stack_c0"],
                               depth=model.config.stack_depth)
        self.act_cell = _cell(P, "act")
        self.act_h, self.act_c = _tile(g, P["act_h0"], B), _tile(g, P["act_c0"], B)

    def logits(self, fronts: np.ndarray) -> Node:
        return classify_step(self.g, self.P, self.stack.top_h, self.buffer.at(fronts), self.act_h)

    def advance(self, fronts: np.ndarray, stack_ops: np.ndarray, actions: np.ndarray) -> None:
        g = self.g
        # B0's representation is what a push puts on the stack
        x = g.gather_rows(self.reps, self.offsets + np.minimum(fronts, self.lengths))
        self.stack.step(x, stack_ops)
        a = g.gather_rows(self.P["act_emb"], actions)
        self.act_h, self.act_c = lstm_cell(g, self.act_cell, a, self.act_h, self.act_c)


def forward_batch(model: ParserModel, batch: Sequence[EncodedSentence], plan: BatchPlan,
                  requires_grad: bool = True) -> ForwardResult:
    if plan.lanes != len(batch):
        raise ValueError(f"plan has {plan.lanes} lanes but batch has {len(batch)} sentences")
    if not np.array_equal(plan.lengths, [s.n for s in batch]):
        raise ValueError("plan lengths do not match the batch")
    g = Graph()
    P = model.bind(g, requires_grad)
    run = _Runner(model, batch, g, P)
    step_nodes = []
    for t in range(plan.steps):
        step_nodes.append(run.logits(plan.fronts[t]))
        run.advance(plan.fronts[t], plan.stack_ops[t], plan.actions[t])
    all_logits = g.concat_rows(step_nodes)
    T, B = plan.steps, plan.lanes
    loss = g.masked_softmax_cross_entropy(
        all_logits, plan.legal.reshape(T * B, -1), plan.actions.reshape(-1), plan.loss_mask.reshape(-1))
    step_logits = [n.value for n in step_nodes]
    return ForwardResult(loss, g, P, step_logits, lane_losses(step_logits, plan))


def lane_losses(step_logits: Sequence[np.ndarray], plan: BatchPlan) -> np.ndarray:
    """Mean per-step negative log-likelihood of each lane's oracle actions."""
    total = np.zeros(plan.lanes)
    for t, z in enumerate(step_logits):
        legal = plan.legal[t]
        masked = np.where(legal, z, -np.inf)
        top = masked.max(axis=1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        lse = np.log(np.where(legal, np.exp(masked - top), 0.0).sum(axis=1) + ~legal.any(axis=1)) + top[:, 0]
        nll = lse - z[np.arange(plan.lanes), plan.actions[t]]
        total += np.where(plan.loss_mask[t], nll, 0.0)
    return total / np.maximum(plan.loss_mask.sum(axis=0), 1)


def parse_batch(model: ParserModel, sentences: Sequence[Sentence]) -> list[DepTree]:
    """Greedy decoding of a batch, one lane per sentence."""
    if not sentences:
        return []
    batch = [model.encode(s) for s in sentences]
    g = Graph()
    P = model.bind(g, requires_grad=False)
    run = _Runner(model, batch, g, P)
    configs = [Configuration.initial(s.n) for s in batch]
    B = len(batch)
    while not all(c.is_terminal() for c in configs):
        fronts = np.array([c.buf - 1 for c in configs], dtype=np.intp)
        z = run.logits(fronts).value
        actions = np.zeros(B, dtype=np.intp)
        ops = np.zeros(B, dtype=np.int64)
        for b, c in enumerate(configs):
            if c.is_terminal():
                continue
            masked = np.where(model.legal_row(c), z[b], -np.inf)
            a = int(np.argmax(masked))  # first maximum: lowest index wins ties
            actions[b] = a
            ops[b] = model._stack_op_of_action[a]
            configs[b] = apply(model.system, c, model.actions[a])
        run.advance(fronts, ops, actions)
        # keep the tape from growing without bound
        g.nodes.clear()
    return [c.as_tree() for c in configs]


def greedy_parse(model: ParserModel, sentence: Sentence) -> DepTree:
    return parse_batch(model, [sentence])[0]


def parse_corpus(model: ParserModel, sentences: Sequence[Sentence], batch_size: int = 32) -> list[DepTree]:
    out: list[DepTree] = []
    for i in range(0, len(sentences), batch_size):
        out.extend(parse_batch(model, sentences[i:i + batch_size]))
    return out


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, model: ParserModel) -> None:
    """Magic line, 8-byte little-endian header length, JSON header, then the
    arrays as little-endian float64 in header order."""
    names = sorted(model.params)
    arrays = [("param:" + k, model.params[k]) for k in names] + [("pretrained", model.pretrained)]
    header = {
        "config": asdict(model.config),
        "vocab": model.vocab.to_dict(),
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, v in arrays:
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> ParserModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    (size,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + size].decode("utf-8"))
    pos += size
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * count
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after arrays")
    params = {k[len("param:"):]: v for k, v in arrays.items() if k.startswith("param:")}
    return ParserModel(ModelConfig(**header["config"]), Vocab.from_dict(header["vocab"]), params,
                       arrays["pretrained"])
