"""CoNLL-X / CoNLL-U reading and writing, vocabularies, pretrained
embeddings and attachment-score evaluation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .transitions import DepTree

PUNCT_TAGS = frozenset({"``", ",", ":", ".", "''"})

UNK = "<UNK>"
ROOT = "<ROOT>"


class ConllError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass
class Sentence:
    forms: list[str]
    pos: list[str]
    tree: DepTree | None = None
    cpos: list[str] | None = None
    ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.ids:
            self.ids = list(range(1, len(self.forms) + 1))
        if len(self.pos) != len(self.forms) or len(self.ids) != len(self.forms):
            raise ValueError("sentence columns differ in length")
        if self.tree is not None and self.tree.n != len(self.forms):
            raise ValueError("tree size does not match sentence length")

    def __len__(self) -> int:
        return len(self.forms)


def read_conll(path) -> list[Sentence]:
    sentences: list[Sentence] = []
    rows: list[list[str]] = []

    def flush(lineno):
        if not rows:
            return
        heads, labels = [], []
        for r in rows:
            try:
                heads.append(int(r[6]))
            except ValueError:
                raise ConllError(path, lineno, f"non-integer HEAD {r[6]!r}") from None
            labels.append(r[7])
        pos = [r[4] if r[4] != "_" else r[3] for r in rows]
        sentences.append(Sentence(
            forms=[r[1] for r in rows],
            pos=pos,
            cpos=[r[3] for r in rows],
            tree=DepTree(heads, labels),
        ))
        rows.clear()

    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            flush(lineno)
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 8:
            cols = line.split()
        if len(cols) not in (8, 10):
            raise ConllError(path, lineno, f"expected 10 columns, found {len(cols)}")
        if "-" in cols[0] or "." in cols[0]:
            continue
        rows.append(cols)
    flush(len(lines))
    return sentences


def write_conll(path, sentences: Iterable[Sentence], trees: Sequence[DepTree] | None = None) -> None:
    """Write sentences; ``trees`` overrides each sentence's own tree (used for
    predictions). Columns other than FORM, CPOS, POS, HEAD and DEPREL are
    written as ``_``."""
    sentences = list(sentences)
    if trees is not None and len(trees) != len(sentences):
        raise ValueError("one tree per sentence required")
    out = []
    for k, s in enumerate(sentences):
        tree = trees[k] if trees is not None else s.tree
        cpos = s.cpos or s.pos
        for i in range(len(s)):
            head = str(tree.heads[i]) if tree is not None else "_"
            label = tree.labels[i] if tree is not None else "_"
            out.append("\t".join([str(s.ids[i]), s.forms[i], "_", cpos[i], s.pos[i], "_",
                                  head, label, "_", "_"]))
        out.append("")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + ("\n" if out else ""))


class Vocab:
    """Index maps for forms, POS tags and labels.

    Forms and tags are ordered by descending frequency, then
    lexicographically; index 0 is ``<UNK>`` and index 1 is ``<ROOT>``.
    Labels are sorted lexicographically.
    """

    def __init__(self, forms: Sequence[str], pos: Sequence[str], labels: Sequence[str],
                 form_counts: dict[str, int] | None = None):
        self.forms = list(forms)
        self.pos = list(pos)
        self.labels = list(labels)
        self.form_counts = dict(form_counts or {})
        self.form_index = {w: i for i, w in enumerate(self.forms)}
        self.pos_index = {p: i for i, p in enumerate(self.pos)}
        self.label_index = {l: i for i, l in enumerate(self.labels)}

    @classmethod
    def build(cls, sentences: Iterable[Sentence]) -> "Vocab":
        forms, tags, labels = Counter(), Counter(), set()
        for s in sentences:
            forms.update(s.forms)
            tags.update(s.pos)
            if s.tree is not None:
                labels.update(s.tree.labels)

        def ordered(counter):
            return [k for k, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))]

        return cls([UNK, ROOT] + ordered(forms), [UNK, ROOT] + ordered(tags), sorted(labels),
                   dict(forms))

    def singletons(self) -> frozenset[str]:
        return frozenset(w for w, c in self.form_counts.items() if c == 1)

    def form_ids(self, forms: Sequence[str]) -> list[int]:
        return [self.form_index.get(w, 0) for w in forms]

    def pos_ids(self, tags: Sequence[str]) -> list[int]:
        return [self.pos_index.get(p, 0) for p in tags]

    def to_dict(self) -> dict:
        return {"forms": self.forms, "pos": self.pos, "labels": self.labels,
                "form_counts": self.form_counts}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(d["forms"], d["pos"], d["labels"], d.get("form_counts"))


class PretrainedEmbeddings:
    def __init__(self, words: Sequence[str], matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.index = {w: i for i, w in enumerate(words)}
        self.words = list(words)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def lookup(self, word: str) -> np.ndarray:
        i = self.index.get(word)
        if i is None:
            i = self.index.get(word.lower())
        if i is None:
            return np.zeros(self.dim)
        return self.matrix[i]

    def rows(self, words: Sequence[str]) -> np.ndarray:
        if not words:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(w) for w in words])


def load_embeddings(path, expected_dim: int | None = None) -> PretrainedEmbeddings:
    words, vecs = [], []
    dim = expected_dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\r\n").split()
            if not parts:
                continue
            word, fields = parts[0], parts[1:]
            if dim is None:
                dim = len(fields)
            if len(fields) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, found {len(fields)}")
            try:
                vecs.append([float(v) for v in fields])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
            words.append(word)
    return PretrainedEmbeddings(words, np.array(vecs).reshape(len(vecs), dim or 0))


def evaluate(gold: Sequence[Sentence], pred: Sequence[DepTree], exclude_punct: bool = True) -> tuple[float, float]:
    """Unlabeled and labeled attachment scores, in percent."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predictions")
    total = heads_ok = both_ok = 0
    for k, (g, p) in enumerate(zip(gold, pred)):
        if g.tree is None or g.tree.n != p.n:
            raise ValueError(f"sentence {k}: gold and predicted token counts differ")
        for i in range(g.tree.n):
            if exclude_punct and g.pos[i] in PUNCT_TAGS:
                continue
            total += 1
            if g.tree.heads[i] == p.heads[i]:
                heads_ok += 1
                if g.tree.labels[i] == p.labels[i]:
                    both_ok += 1
    if total == 0:
        return 100.0, 100.0
    return 100.0 * heads_ok / total, 100.0 * both_ok / total
