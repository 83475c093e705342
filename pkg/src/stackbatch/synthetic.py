"""Seeded toy treebank: projective English-like sentences from a small
dependency grammar. Used for smoke training and benchmarks when no real
treebank is at hand."""

from __future__ import annotations

import numpy as np

from .transitions import DepTree
from .treebank import Sentence

_LEXICON = {
    "DT": "the a this that every some no each".split(),
    "JJ": ("big small red old new quick lazy happy green tall bright dark heavy soft "
           "strange quiet loud young ancient busy").split(),
    "NN": ("dog cat man woman car house tree book city river table child bird teacher "
           "garden window letter market road doctor idea song friend storm engine "
           "village painting lamp boat apple").split(),
    "PRP": "he she it they we".split(),
    "VBD": ("saw liked found took made gave watched built painted opened sold wrote "
            "carried moved visited fixed chased followed").split(),
    "VBZ": "sees likes finds takes makes gives watches builds paints opens".split(),
    "VBI": "slept arrived smiled waited laughed vanished".split(),
    "IN": "in on with near under from behind for".split(),
    "RB": "quickly often slowly never quietly again".split(),
    "CC": "and but".split(),
}

# prepositions that prefer attaching to the verb rather than the object noun
_VERBAL_PREPS = {"in", "under", "behind", "for"}


def _word(rng: np.random.Generator, tag: str) -> str:
    words = _LEXICON[tag]
    # Zipf-ish weights so the corpus has frequent words and singletons
    w = 1.0 / np.arange(1, len(words) + 1)
    return words[rng.choice(len(words), p=w / w.sum())]


class _Node:
    def __init__(self, form, tag, label):
        self.form, self.tag, self.label = form, tag, label
        self.left: list[_Node] = []
        self.right: list[_Node] = []


def _noun_phrase(rng, label) -> _Node:
    if rng.random() < 0.15:
        return _Node(_word(rng, "PRP"), "PRP", label)
    head = _Node(_word(rng, "NN"), "NN", label)
    if rng.random() < 0.9:
        head.left.append(_Node(_word(rng, "DT"), "DT", "det"))
    for _ in range(rng.choice(3, p=[0.5, 0.35, 0.15])):
        head.left.append(_Node(_word(rng, "JJ"), "JJ", "amod"))
    # determiner precedes adjectives
    head.left = [n for n in head.left if n.tag == "DT"] + [n for n in head.left if n.tag == "JJ"]
    return head


def _prep_phrase(rng) -> _Node:
    prep = _Node(_word(rng, "IN"), "IN", "prep")
    prep.right.append(_noun_phrase(rng, "pobj"))
    return prep


def _clause(rng, depth, label="root") -> _Node:
    transitive = rng.random() < 0.75
    if transitive:
        tag = "VBD" if rng.random() < 0.6 else "VBZ"
        verb = _Node(_word(rng, tag), tag, label)
    else:
        verb = _Node(_word(rng, "VBI"), "VBD", label)
    verb.left.append(_noun_phrase(rng, "nsubj"))
    if rng.random() < 0.2:
        verb.left.append(_Node(_word(rng, "RB"), "RB", "advmod"))
    if transitive:
        obj = _noun_phrase(rng, "dobj")
        verb.right.append(obj)
        if depth < 2 and rng.random() < 0.45:
            pp = _prep_phrase(rng)
            # lexical preference, not a hard rule: leaves real attachment ambiguity
            verbal = pp.form in _VERBAL_PREPS
            if verbal == (rng.random() < 0.8):
                verb.right.append(pp)
            else:
                obj.right.append(pp)
    elif depth < 2 and rng.random() < 0.5:
        verb.right.append(_prep_phrase(rng))
    if rng.random() < 0.15:
        verb.right.append(_Node(_word(rng, "RB"), "RB", "advmod"))
    if depth == 0 and rng.random() < 0.25:
        verb.right.append(_Node(_word(rng, "CC"), "CC", "cc"))
        verb.right.append(_clause(rng, depth + 1, "conj"))
    return verb


def _sentence(rng: np.random.Generator) -> Sentence:
    root = _clause(rng, 0)
    root.right.append(_Node(".", ".", "punct"))
    tokens: list[list] = []

    def emit(node: _Node, head: int) -> int:
        left_ids = [emit(child, -1) for child in node.left]
        tokens.append([node.form, node.tag, head, node.label])
        me = len(tokens)
        for i in left_ids:
            tokens[i - 1][2] = me
        for child in node.right:
            emit(child, me)
        return me

    emit(root, 0)
    forms = [t[0] for t in tokens]
    tags = [t[1] for t in tokens]
    return Sentence(forms, tags, DepTree([t[2] for t in tokens], [t[3] for t in tokens]))


def generate(count: int, seed: int = 1) -> list[Sentence]:
    rng = np.random.default_rng(seed)
    return [_sentence(rng) for _ in range(count)]
