import subprocess
import sys

import pytest

from stackbatch.cli import build_parser, main, read_config_file
from stackbatch.model import load_checkpoint
from stackbatch.synthetic import generate
from stackbatch.transitions import DepTree, Transition
from stackbatch.treebank import Sentence, read_conll, write_conll

SMALL = ["--hidden", "6", "--state-dim", "6", "--action-dim", "3", "--word-dim", "3", "--pos-dim", "2",
         "--token-dim", "4", "--stack-depth", "40"]


@pytest.fixture
def files(tmp_path, toy_corpus):
    train, dev = tmp_path / "train.conll", tmp_path / "dev.conll"
    write_conll(train, toy_corpus[:10])
    write_conll(dev, toy_corpus[30:33])
    return tmp_path, train, dev


def test_eval_identical(files, capsys):
    _, _, dev = files
    assert main(["eval", "--gold", str(dev), "--pred", str(dev)]) == 0
    assert capsys.readouterr().out.strip() == "UAS 100.00 LAS 100.00"


def test_oracle_non_projective_only(tmp_path, capsys):
    p = tmp_path / "np.conll"
    write_conll(p, [Sentence(list("abcd"), ["X"] * 4, DepTree([3, 4, 0, 3], ["x"] * 4))])
    out = tmp_path / "o.txt"
    assert main(["oracle", "--input", str(p), "--output", str(out)]) == 0
    assert out.read_text() == ""
    assert "skipped 1 " in capsys.readouterr().err


def test_oracle_stdout(files, capsys, toy_corpus):
    _, train, _ = files
    assert main(["oracle", "--input", str(train), "--system", "arc-eager"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 10
    seq = [Transition.parse(t) for t in lines[0].split()]
    assert len(seq) == 2 * len(toy_corpus[0])


def test_bench_csv(files, capsys):
    tmp, train, _ = files
    csv = tmp / "b.csv"
    assert main(["bench", "--train", str(train), "--batch-sizes", "1,8", "--warmup", "0", "--csv", str(csv)]
                + SMALL) == 0
    lines = csv.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0] == "batch_size,sent_per_s,trans_per_s,speedup,parallel_fraction,stddev"
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "8"]
    assert "trans/s" in capsys.readouterr().out


def test_bench_needs_batch_one(files):
    tmp, train, _ = files
    with pytest.raises(SystemExit) as err:
        main(["bench", "--train", str(train), "--batch-sizes", "8", "--csv", str(tmp / "b.csv")])
    assert err.value.code == 1


def test_train_parse_eval(files, capsys):
    tmp, train, dev = files
    model, pred = tmp / "m.ckpt", tmp / "pred.conll"
    argv = ["train", "--train", str(train), "--dev", str(dev), "--out", str(model), "--epochs", "2",
            "--batch-size", "4", "--no-wallclock"] + SMALL
    assert main(argv) == 0
    metrics = (tmp / "m.ckpt.metrics.tsv").read_text().splitlines()
    assert len(metrics) == 3 and metrics[1].endswith("\t-")
    assert load_checkpoint(model).config.hidden == 6
    assert main(["parse", "--model", str(model), "--input", str(dev), "--output", str(pred)]) == 0
    assert [len(s) for s in read_conll(pred)] == [len(s) for s in read_conll(dev)]
    capsys.readouterr()
    assert main(["eval", "--gold", str(dev), "--pred", str(pred), "--include-punct"]) == 0
    assert capsys.readouterr().out.startswith("UAS ")


def test_config_file_and_override(files):
    tmp, train, dev = files
    cfg = tmp / "run.cfg"
    cfg.write_text(f"# experiment\ntrain = {train}\ndev = {dev}\nout = {tmp / 'a.ckpt'}\n"
                   "epochs = 1\nhidden = 5\nno-wallclock = true\n")
    assert main(["train", "--config", str(cfg), "--hidden", "7", "--state-dim", "4", "--token-dim", "4"]) == 0
    assert load_checkpoint(tmp / "a.ckpt").config.hidden == 7
    assert (tmp / "a.ckpt.metrics.tsv").read_text().splitlines()[1].endswith("\t-")


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("what\n")
    with pytest.raises(ValueError):
        read_config_file(bad)
    with pytest.raises(SystemExit) as err:
        main(["eval", "--config", str(bad)])
    assert err.value.code == 1
    bad.write_text("colour = blue\n")
    with pytest.raises(SystemExit) as err:
        main(["eval", "--config", str(bad)])
    assert err.value.code == 1


@pytest.mark.parametrize("command", ["oracle", "train", "parse", "eval", "bench", "synth"])
def test_help_exits_zero(command, capsys):
    with pytest.raises(SystemExit) as err:
        main([command, "--help"])
    assert err.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["eval", "--gold", "x"], ["train", "--batch-size", "two"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == 1


def test_missing_file_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["eval", "--gold", str(tmp_path / "nope"), "--pred", str(tmp_path / "nope")])
    assert err.value.code == 1
    assert "file not found" in capsys.readouterr().err


def test_malformed_treebank_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.conll"
    bad.write_text("1\tHi\t_\n")
    assert main(["oracle", "--input", str(bad)]) == 2
    assert "data error" in capsys.readouterr().err


def test_bad_checkpoint_is_data_error(files, tmp_path):
    _, _, dev = files
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["parse", "--model", str(bad), "--input", str(dev), "--output", str(tmp_path / "o")]) == 2


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a.conll", tmp_path / "b.conll"
    assert main(["synth", "--count", "7", "--seed", "4", "--output", str(a)]) == 0
    assert main(["synth", "--count", "7", "--seed", "4", "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert [s.forms for s in read_conll(a)] == [s.forms for s in generate(7, 4)]


def test_module_entry_point(files):
    _, _, dev = files
    done = subprocess.run([sys.executable, "-m", "stackbatch", "eval", "--gold", str(dev), "--pred", str(dev)],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert done.stdout.strip() == "UAS 100.00 LAS 100.00"
