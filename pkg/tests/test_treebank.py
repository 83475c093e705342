import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stackbatch.synthetic import generate
from stackbatch.transitions import DepTree
from stackbatch.treebank import (ROOT, UNK, ConllError, PretrainedEmbeddings, Sentence, Vocab, evaluate,
                                 load_embeddings, read_conll, write_conll)


def _write(tmp_path, text, name="t.conll", newline="\n"):
    p = tmp_path / name
    p.write_bytes(text.replace("\n", newline).encode("utf-8"))
    return p


def test_one_token_file(tmp_path):
    p = _write(tmp_path, "1\tHi\t_\tX\tX\t_\t0\troot\t_\t_\n")
    (s,) = read_conll(p)
    assert s.forms == ["Hi"] and s.pos == ["X"]
    assert s.tree.heads == [0] and s.tree.labels == ["root"]


def test_space_separated_and_no_trailing_blank(tmp_path):
    p = _write(tmp_path, "1 Hi _ X X _ 0 root _ _")
    assert read_conll(p)[0].tree.heads == [0]


def test_crlf_is_same_as_lf(tmp_path):
    text = "1\tA\t_\tN\tNN\t_\t2\tnsubj\t_\t_\n2\tran\t_\tV\tVBD\t_\t0\troot\t_\t_\n\n"
    lf = read_conll(_write(tmp_path, text, "a"))
    crlf = read_conll(_write(tmp_path, text, "b", newline="\r\n"))
    assert [(s.forms, s.pos, s.tree) for s in lf] == [(s.forms, s.pos, s.tree) for s in crlf]


def test_conllu_extras_skipped(tmp_path):
    text = ("# sent_id = 1\n"
            "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n"
            "1\tdo\t_\tAUX\t_\t_\t3\taux\t_\t_\n"
            "2\tn't\t_\tPART\t_\t_\t3\tneg\t_\t_\n"
            "2.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n"
            "3\tgo\t_\tVERB\t_\t_\t0\troot\t_\t_\n")
    (s,) = read_conll(_write(tmp_path, text))
    assert s.forms == ["do", "n't", "go"]
    assert s.pos == ["AUX", "PART", "VERB"]  # falls back to CPOS


def test_multiple_blank_lines_between_sentences(tmp_path):
    row = "1\tx\t_\tX\tX\t_\t0\troot\t_\t_\n"
    assert len(read_conll(_write(tmp_path, row + "\n\n\n" + row + "\n"))) == 2


def test_bad_column_count(tmp_path):
    with pytest.raises(ConllError) as err:
        read_conll(_write(tmp_path, "1\tHi\t_\tX\n"))
    assert err.value.lineno == 1


def test_non_integer_head(tmp_path):
    with pytest.raises(ConllError, match="HEAD"):
        read_conll(_write(tmp_path, "1\tHi\t_\tX\tX\t_\tzero\troot\t_\t_\n"))


def test_round_trip(tmp_path):
    sents = generate(20, seed=5)
    p = tmp_path / "rt.conll"
    write_conll(p, sents)
    back = read_conll(p)
    assert [(s.forms, s.pos, s.tree) for s in back] == [(s.forms, s.pos, s.tree) for s in sents]
    write_conll(tmp_path / "rt2.conll", back)
    assert (tmp_path / "rt2.conll").read_bytes() == p.read_bytes()


def test_write_predicted_trees(tmp_path):
    s = Sentence(["a", "b"], ["X", "Y"], DepTree([2, 0], ["l", "root"]))
    p = tmp_path / "pred.conll"
    write_conll(p, [s], [DepTree([0, 1], ["root", "r"])])
    assert read_conll(p)[0].tree == DepTree([0, 1], ["root", "r"])
    with pytest.raises(ValueError):
        write_conll(p, [s], [])


def test_empty_write(tmp_path):
    p = tmp_path / "e.conll"
    write_conll(p, [])
    assert p.read_bytes() == b""
    assert read_conll(p) == []


def test_single_sentence_has_trailing_blank(tmp_path):
    p = tmp_path / "s.conll"
    write_conll(p, [Sentence(["Hi"], ["X"], DepTree([0], ["root"]))])
    assert p.read_text().endswith("\t_\t_\n\n")


def test_sentence_validation():
    with pytest.raises(ValueError):
        Sentence(["a"], ["X", "Y"])
    with pytest.raises(ValueError):
        Sentence(["a"], ["X"], DepTree([0, 1], ["a", "b"]))


# vocab -------------------------------------------------------------------------

def test_vocab_order():
    s1 = Sentence(["b", "a", "b"], ["N", "V", "N"], DepTree([0, 1, 1], ["root", "y", "x"]))
    s2 = Sentence(["c", "a"], ["N", "D"], DepTree([0, 1], ["root", "x"]))
    v = Vocab.build([s1, s2])
    assert v.forms == [UNK, ROOT, "a", "b", "c"]
    assert v.pos == [UNK, ROOT, "N", "D", "V"]
    assert v.labels == ["root", "x", "y"]
    assert v.form_ids(["c", "zzz"]) == [4, 0]
    assert v.singletons() == {"c"}
    assert Vocab.from_dict(v.to_dict()).to_dict() == v.to_dict()


@settings(max_examples=25, deadline=None)
@given(st.permutations(list(range(12))))
def test_vocab_independent_of_sentence_order(order):
    sents = generate(12, seed=9)
    assert Vocab.build([sents[i] for i in order]).to_dict() == Vocab.build(sents).to_dict()


# embeddings --------------------------------------------------------------------

def test_embeddings_dimension(tmp_path):
    p = _write(tmp_path, "the 0.1 0.2 0.3\nCat 1 2 3\n", "e.txt")
    e = load_embeddings(p)
    assert e.dim == 3
    assert np.array_equal(e.lookup("Cat"), [1, 2, 3])
    assert np.array_equal(e.lookup("THE"), [0.1, 0.2, 0.3])  # lowercase fallback
    assert np.array_equal(e.lookup("dog"), np.zeros(3))
    assert e.rows([]).shape == (0, 3)


def test_embeddings_errors(tmp_path):
    with pytest.raises(ValueError, match="expected 3"):
        load_embeddings(_write(tmp_path, "a 1 2 3\nb 1 2 3 4\n", "bad.txt"))
    with pytest.raises(ValueError, match="non-numeric"):
        load_embeddings(_write(tmp_path, "a 1 x 3\n", "nan.txt"))
    with pytest.raises(ValueError):
        load_embeddings(_write(tmp_path, "a 1 2\n", "dim.txt"), expected_dim=3)


def test_embeddings_rows():
    e = PretrainedEmbeddings(["x"], np.array([[2.0, 3.0]]))
    assert np.array_equal(e.rows(["x", "y"]), [[2, 3], [0, 0]])


# evaluation --------------------------------------------------------------------

def _sent(heads, labels, pos):
    return Sentence([f"w{i}" for i in range(len(heads))], pos, DepTree(heads, labels))


def test_eval_perfect():
    g = _sent([2, 0], ["a", "root"], ["N", "V"])
    assert evaluate([g], [g.tree]) == (100.0, 100.0)


def test_eval_labels_all_wrong():
    g = _sent([2, 0], ["a", "root"], ["N", "V"])
    assert evaluate([g], [DepTree([2, 0], ["b", "c"])]) == (100.0, 0.0)


def test_eval_hand_count():
    # token:  1     2     3     4     5(punct)
    # gold:   2/a   0/r   2/b   3/c   2/p
    # pred:   2/a   0/x   2/b   2/c   1/p
    # scored tokens 1..4; heads right on 1,2,3 (3 of 4); labels also right on 1,3 (2 of 4)
    g = _sent([2, 0, 2, 3, 2], ["a", "r", "b", "c", "p"], ["N", "V", "N", "N", "."])
    p = DepTree([2, 0, 2, 2, 1], ["a", "x", "b", "c", "p"])
    assert evaluate([g], [p]) == (75.0, 50.0)
    # with punctuation: 3 of 5 heads, 2 of 5 labeled
    assert evaluate([g], [p], exclude_punct=False) == (60.0, 40.0)


def test_eval_alignment_errors():
    g = _sent([0], ["r"], ["N"])
    with pytest.raises(ValueError):
        evaluate([g], [])
    with pytest.raises(ValueError):
        evaluate([g], [DepTree([0, 1], ["r", "x"])])
