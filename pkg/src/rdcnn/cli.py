"""Command-line entry point: ``rdcnn {train,predict,eval,dict-tag}``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from rdcnn import modelfile
from rdcnn.config import BRANCHES, TrainConfig, load_run_config
from rdcnn.corpus import CorpusError, Record, dump_jsonl, evaluate, format_columns, read_jsonl, split_clauses
from rdcnn.dictionary import Lexicon, dict_features
from rdcnn.trainer import history_csv, predict, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# Flags that map one-to-one onto TrainConfig fields.
CONFIG_FLAGS = [
    ("--d-x", "d_x", int),
    ("--d-d", "d_d", int),
    ("--n-r", "n_r", int),
    ("--f-d", "f_d", int),
    ("--w-d", "w_d", int),
    ("--d-b", "d_b", int),
    ("--f-s", "f_s", int),
    ("--w-s", "w_s", int),
    ("--epochs", "epochs", int),
    ("--batch-size", "batch_size", int),
    ("--lr", "lr", float),
    ("--char-dropout", "char_dropout", float),
    ("--max-len", "max_len", int),
]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdcnn", description="Dictionary-augmented dilated CNN + CRF clinical NER.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model on a JSON-lines corpus")
    p.add_argument("--config", help="run config file of 'key = value' lines")
    p.add_argument("--train", required=True, help="training corpus (JSON lines)")
    p.add_argument("--dict", help="lexicon TSV (surface<TAB>type); omit for no dictionary features")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--history", help="write per-epoch loss CSV here")
    p.add_argument("--seed", type=int)
    p.add_argument("--branches", choices=BRANCHES)
    p.add_argument("--no-residual", dest="residual", action="store_const", const=False)
    p.add_argument("--constrained", action="store_const", const=True, help="forbid invalid BIEOS transitions")
    for flag, dest, kind in CONFIG_FLAGS:
        p.add_argument(flag, dest=dest, type=kind)

    p = sub.add_parser("predict", help="tag raw text or JSON lines with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--dict", help="lexicon TSV used for dictionary features")
    p.add_argument("--input", required=True, help="one document per line: raw text or {\"text\": ...}")
    p.add_argument("--output", required=True, help="JSON-lines predictions")

    p = sub.add_parser("eval", help="score predictions against gold annotations")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--csv", help="also write the report as CSV here")

    p = sub.add_parser("dict-tag", help="print per-character dictionary features")
    p.add_argument("--dict", help="lexicon TSV; omit for an empty lexicon")
    p.add_argument("--input", required=True, help="one document per line")
    p.add_argument("--output", help="write here instead of stdout")
    return parser


def _lexicon(path) -> Lexicon:
    return Lexicon.from_tsv(path) if path else Lexicon()


def _texts(path) -> list[str]:
    texts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                try:
                    line = json.loads(line)["text"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorpusError(f"{path}:{lineno}: {exc}") from None
            texts.append(line)
    return texts


def cmd_train(args) -> int:
    overrides = {dest: getattr(args, dest) for _, dest, _ in CONFIG_FLAGS}
    overrides.update(seed=args.seed, branches=args.branches, residual=args.residual, constrained=args.constrained)
    if args.config:
        config = load_run_config(args.config, **overrides)
    else:
        config = TrainConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    corpus = read_jsonl(args.train)
    lexicon = Lexicon.from_tsv(args.dict) if args.dict else None
    model, history = train(corpus, lexicon, config)
    modelfile.save(model, args.out)
    if args.history:
        modelfile.write_atomic(args.history, history_csv(history))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = modelfile.load(args.model)
    lexicon = _lexicon(args.dict)
    records = [Record(text, predict(model, lexicon, text)) for text in _texts(args.input)]
    modelfile.write_atomic(args.output, dump_jsonl(records))
    return EXIT_OK


def cmd_eval(args) -> int:
    gold, pred = read_jsonl(args.gold), read_jsonl(args.pred)
    if len(gold) != len(pred):
        raise CorpusError(f"record count mismatch: {len(gold)} gold vs {len(pred)} predicted")
    for i, (g, p) in enumerate(zip(gold, pred), 1):
        if g.text != p.text:
            raise CorpusError(f"record {i}: gold and predicted texts differ")
    report = evaluate([g.entities for g in gold], [p.entities for p in pred])
    print(report.to_table())
    print()
    print(report.to_csv(), end="")
    if args.csv:
        modelfile.write_atomic(args.csv, report.to_csv())
    return EXIT_OK


def cmd_dict_tag(args) -> int:
    lexicon = _lexicon(args.dict)
    rows = [(c.text, dict_features(c.text, lexicon)) for text in _texts(args.input) for c in split_clauses(text)]
    out = format_columns(rows)
    if args.output:
        modelfile.write_atomic(args.output, out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval, "dict-tag": cmd_dict_tag}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except FloatingPointError as exc:
        print(f"rdcnn {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"rdcnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
