"""Command-line entry point.

Exit status: 0 on success, 1 on usage errors (bad flags, missing files),
2 on data errors (malformed treebank, embeddings or checkpoint).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import bench, synthetic
from .model import ModelConfig, ParserModel, load_checkpoint, parse_corpus, save_checkpoint
from .trainer import TrainConfig, train
from .transitions import NonProjectiveError, System, static_oracle
from .treebank import ConllError, Vocab, evaluate, load_embeddings, read_conll, write_conll

USAGE_ERROR = 1
DATA_ERROR = 2


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--system", choices=[s.value for s in System], default=System.ARC_HYBRID.value,
                   help="transition system (default: %(default)s)")
    g.add_argument("--hidden", type=int, default=200, help="LSTM hidden size")
    g.add_argument("--state-dim", type=int, default=200, help="parser state width before the softmax")
    g.add_argument("--action-dim", type=int, default=48, help="action embedding size")
    g.add_argument("--word-dim", type=int, default=32, help="learned word embedding size")
    g.add_argument("--pos-dim", type=int, default=12, help="POS embedding size")
    g.add_argument("--token-dim", type=int, default=100, help="token representation size")
    g.add_argument("--stack-depth", type=int, default=150, help="fixed StackLSTM depth")
    g.add_argument("--zero-initial-state", action="store_true",
                   help="keep LSTM initial states (stack bottom included) fixed at zero")


def _model_config(args) -> ModelConfig:
    return ModelConfig(hidden=args.hidden, state_dim=args.state_dim, action_dim=args.action_dim,
                       word_dim=args.word_dim, pos_dim=args.pos_dim, token_dim=args.token_dim,
                       stack_depth=args.stack_depth, system=args.system,
                       learn_initial_state=not args.zero_initial_state)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stackbatch", description="Minibatched StackLSTM dependency parsing.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help):
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--config", help="optional 'key = value' file; flags override it")
        p.add_argument("--seed", type=int, default=1, help="random seed (default: %(default)s)")
        return p

    p = add("oracle", "Extract static-oracle transition sequences, one sentence per line.")
    p.add_argument("--input", required=True, help="CoNLL treebank")
    p.add_argument("--system", choices=[s.value for s in System], default=System.ARC_HYBRID.value,
                   help="transition system (default: %(default)s)")
    p.add_argument("--output", help="output file (default: stdout)")

    p = add("train", "Train a parser and write a checkpoint.")
    p.add_argument("--train", required=True, help="training treebank")
    p.add_argument("--dev", required=True, help="development treebank")
    p.add_argument("--embeddings", help="pretrained embeddings, one 'word v1 ... vd' per line")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="metrics log (default: <out>.metrics.tsv)")
    p.add_argument("--batch-size", type=int, default=8, help="minibatch size b")
    p.add_argument("--epochs", type=int, default=20, help="number of epochs")
    p.add_argument("--lr", type=float, default=5e-4, help="base learning rate tau")
    p.add_argument("--warmup-epochs", type=float, default=5.0, help="linear warmup length")
    p.add_argument("--lr-cap", type=float, default=0.02, help="upper bound on tau * b")
    p.add_argument("--clip", type=float, default=5.0, help="global gradient norm limit")
    p.add_argument("--l2", type=float, default=1e-6, help="L2 regularization weight")
    p.add_argument("--patience", type=int, default=1, help="epochs without dev improvement per halving")
    p.add_argument("--no-wallclock", action="store_true",
                   help="write '-' in the wallclock column so logs are byte-reproducible")
    _add_model_flags(p)

    p = add("parse", "Parse a treebank greedily with a trained model.")
    p.add_argument("--model", required=True, help="checkpoint")
    p.add_argument("--input", required=True, help="CoNLL input (HEAD/DEPREL ignored)")
    p.add_argument("--output", required=True, help="CoNLL output with predicted HEAD/DEPREL")
    p.add_argument("--batch-size", type=int, default=32, help="sentences decoded together")

    p = add("eval", "Attachment scores of predictions against gold.")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--include-punct", action="store_true", help="score punctuation tokens too")

    p = add("bench", "Training throughput per batch size, written as CSV.")
    p.add_argument("--train", required=True, help="treebank to train on")
    p.add_argument("--batch-sizes", default="1,8,16,32,64", help="comma-separated, must include 1")
    p.add_argument("--repeats", type=int, default=1, help="timed epochs per batch size")
    p.add_argument("--warmup", type=int, default=1, help="untimed epochs per batch size")
    p.add_argument("--limit", type=int, help="use only the first N sentences")
    p.add_argument("--csv", required=True, help="output CSV")
    _add_model_flags(p)

    p = add("synth", "Write a seeded synthetic projective treebank.")
    p.add_argument("--count", type=int, default=500, help="number of sentences")
    p.add_argument("--output", required=True)
    return parser


def _parse(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    choices = parser._subparsers._group_actions[0].choices
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    config = pre.parse_known_args(argv)[0].config
    command = next((a for a in argv if a in choices), None)
    if config and command:
        if not os.path.isfile(config):
            parser.error(f"config file not found: {config}")
        try:
            values = read_config_file(config)
        except ValueError as exc:
            parser.error(str(exc))
        sub = choices[command]
        known = {a.dest: a for a in sub._actions}
        for key, value in values.items():
            if key not in known or key in ("help", "config"):
                parser.error(f"unknown config key {key!r}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                values[key] = value.lower() in ("1", "true", "yes", "on")
            # satisfied by the file; the command line may still override it
            action.required = False
        sub.set_defaults(**values)
    return parser.parse_args(argv)


def _require_files(parser, *paths):
    for path in paths:
        if path is not None and not os.path.isfile(path):
            parser.error(f"file not found: {path}")


def _read(path):
    try:
        return read_conll(path)
    except (ConllError, UnicodeDecodeError) as exc:
        raise DataError(str(exc)) from None


def cmd_oracle(args):
    sentences = _read(args.input)
    lines, skipped = [], 0
    for s in sentences:
        try:
            seq = static_oracle(args.system, s.tree)
        except NonProjectiveError:
            skipped += 1
            continue
        lines.append(" ".join(str(t) for t in seq))
    text = "".join(line + "\n" for line in lines)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"skipped {skipped} non-projective sentence(s)", file=sys.stderr)


def _check_trees(sentences, path):
    for k, s in enumerate(sentences, start=1):
        problems = s.tree.problems()
        if problems:
            raise DataError(f"{path}: sentence {k}: {'; '.join(problems)}")


def cmd_train(args):
    train_sents = _read(args.train)
    dev_sents = _read(args.dev)
    _check_trees(train_sents, args.train)
    _check_trees(dev_sents, args.dev)
    embeddings = None
    if args.embeddings:
        try:
            embeddings = load_embeddings(args.embeddings)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    vocab = Vocab.build(train_sents)
    model = ParserModel.create(_model_config(args), vocab, seed=args.seed, embeddings=embeddings)
    config = TrainConfig(base_lr=args.lr, warmup_epochs=args.warmup_epochs, lr_cap=args.lr_cap,
                         batch_size=args.batch_size, clip_norm=args.clip, l2=args.l2,
                         plateau_patience=args.patience, max_epochs=args.epochs, seed=args.seed,
                         log_wallclock=not args.no_wallclock)
    metrics = args.metrics or args.out + ".metrics.tsv"
    rows = train(model, train_sents, dev_sents, config, metrics)
    save_checkpoint(args.out, model)
    last = rows[-1]
    print(f"epoch {last['epoch']} dev UAS {last['dev_UAS']:.2f} LAS {last['dev_LAS']:.2f}")


def cmd_parse(args):
    try:
        model = load_checkpoint(args.model)
    except (ValueError, KeyError) as exc:
        raise DataError(f"{args.model}: {exc}") from None
    sentences = _read(args.input)
    trees = parse_corpus(model, sentences, args.batch_size)
    write_conll(args.output, sentences, trees)


def cmd_eval(args):
    gold = _read(args.gold)
    pred = _read(args.pred)
    try:
        uas, las = evaluate(gold, [s.tree for s in pred], exclude_punct=not args.include_punct)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    print(f"UAS {uas:.2f} LAS {las:.2f}")


def cmd_bench(args, parser):
    try:
        sizes = [int(x) for x in args.batch_sizes.split(",") if x.strip()]
    except ValueError:
        parser.error(f"bad --batch-sizes {args.batch_sizes!r}")
    if 1 not in sizes or min(sizes) < 1:
        parser.error("--batch-sizes must contain 1 and only positive sizes")
    sentences = _read(args.train)
    if args.limit:
        sentences = sentences[: args.limit]
    if not sentences:
        raise DataError(f"{args.train}: no sentences")
    model = ParserModel.create(_model_config(args), Vocab.build(sentences), seed=args.seed)
    results = bench.measure(model, sentences, sizes, repeats=args.repeats, seed=args.seed,
                            warmup_epochs=args.warmup)
    bench.write_csv(results, args.csv)
    print(bench.format_table(results))


def cmd_synth(args):
    write_conll(args.output, synthetic.generate(args.count, args.seed))


def main(argv=None) -> int:
    parser = build_parser()
    args = _parse(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    _require_files(sub, *(getattr(args, k, None) for k in ("input", "train", "dev", "embeddings",
                                                          "model", "gold", "pred")))
    try:
        if args.command == "oracle":
            cmd_oracle(args)
        elif args.command == "train":
            cmd_train(args)
        elif args.command == "parse":
            cmd_parse(args)
        elif args.command == "eval":
            cmd_eval(args)
        elif args.command == "bench":
            cmd_bench(args, sub)
        elif args.command == "synth":
            cmd_synth(args)
    except DataError as exc:
        print(f"stackbatch: data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
