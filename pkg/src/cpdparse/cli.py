"""Command-line entry point: ``cpdparse {train,parse,evaluate,check,bench}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
(including a failed self-check).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import bench, checks
from .core import Hyperparams, LabelSet, graph_from_gold
from .cpd import DEFAULT_DENSE_BUDGET, RELATIONS
from .errors import (BudgetExceededError, CpdParseError, LabelVocabularyError, SdpFormatError,
                     ShapeError, TrainingDivergenceError)
from .evaluation import evaluate
from .model import Parser
from .sdp_io import SdpDocument, read_sdp_file, write_sdp
from .training import train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("cpdparse")


class UsageError(CpdParseError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config -----------------------------------------------------------------------

CONFIG_KEYS = {"train", "dev", "checkpoint", "log", "frame", "preset", "relations"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Raises on malformed lines."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FileNotFoundError(f"{path}: {e.strerror or e}") from e
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def hyperparams_from_config(cfg: dict) -> Hyperparams:
    preset = cfg.get("preset", "desk")
    if preset not in ("desk", "full"):
        raise UsageError(f"preset must be 'desk' or 'full', got {preset!r}")
    types = {f.name: f.type for f in dataclasses.fields(Hyperparams)}
    overrides = {}
    for key, value in cfg.items():
        if key in CONFIG_KEYS:
            continue
        if key not in types:
            raise UsageError(f"unknown config key {key!r}")
        kind = types[key] if isinstance(types[key], str) else types[key].__name__
        try:
            if kind == "bool":
                overrides[key] = _parse_bool(value)
            elif kind == "int":
                overrides[key] = int(value)
            elif kind == "float":
                overrides[key] = float(value)
            elif kind == "tuple":
                overrides[key] = tuple(float(v) for v in value.split(","))
            else:
                overrides[key] = value
        except ValueError as e:
            raise UsageError(f"config key {key!r}: {e}") from e
    try:
        return Hyperparams.desk(**overrides) if preset == "desk" else Hyperparams(**overrides)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def _override(hp: Hyperparams, args) -> Hyperparams:
    changes = {}
    for attr, field_name in (("seed", "seed"), ("iters_train", "train_iters"),
                             ("iters_test", "test_iters"), ("rank", "rank")):
        value = getattr(args, attr, None)
        if value is not None:
            changes[field_name] = value
    return dataclasses.replace(hp, **changes) if changes else hp


def _relations(text: str) -> tuple:
    rels = tuple(r.strip() for r in text.split(",") if r.strip())
    bad = [r for r in rels if r not in RELATIONS]
    if bad:
        raise UsageError(f"unknown relations {bad}; choose from {list(RELATIONS)}")
    return rels


def _read(path, frame=True):
    try:
        return read_sdp_file(path, frame=frame)
    except OSError as e:
        raise FileNotFoundError(f"{path}: {e.strerror or e}") from e


# -- commands ---------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg_path = Path(args.config)
    cfg = read_config(cfg_path)
    base = cfg_path.parent

    def resolve(key, required=True):
        if key not in cfg:
            if required:
                raise UsageError(f"{cfg_path}: missing required key {key!r}")
            return None
        p = Path(cfg[key])
        return p if p.is_absolute() else base / p

    hp = _override(hyperparams_from_config(cfg), args)
    frame = _parse_bool(cfg.get("frame", "true"))
    relations = _relations(cfg.get("relations", ",".join(RELATIONS)))
    train_doc = _read(resolve("train"), frame)
    dev_path = resolve("dev", required=False)
    dev_doc = _read(dev_path, frame) if dev_path else SdpDocument(())
    ckpt = resolve("checkpoint")
    log_path = resolve("log", required=False) or ckpt.with_suffix(".log")
    lines = []

    def log_fn(line):
        lines.append(line)
        print(line, flush=True)

    result = train(train_doc.sentences, hp, dev_doc.sentences, relations=relations, log_fn=log_fn)
    result.parser.save(ckpt)
    log_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"checkpoint={ckpt} log={log_path} best_epoch={result.best_epoch}")
    return EXIT_OK


def cmd_parse(args) -> int:
    parser = Parser.load(args.checkpoint)
    hp = _override(parser.hp, args)
    doc = _read(args.input, not args.no_frame)
    parsed = [parser.parse(s, hp.test_iters) for s in doc.sentences]
    text = write_sdp(SdpDocument(tuple(parsed)), frame=not args.no_frame)
    if args.output == "-":
        sys.stdout.write(text + ("\n" if text else ""))
    else:
        Path(args.output).write_text(text + ("\n" if text else ""), encoding="utf-8")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gold = _read(args.gold, not args.no_frame).sentences
    pred = _read(args.pred, not args.no_frame).sentences
    if len(gold) != len(pred):
        raise ShapeError(f"{args.pred} has {len(pred)} sentences, {args.gold} has {len(gold)}")
    labels = LabelSet.from_sentences(list(gold) + list(pred))
    g = [graph_from_gold(s, labels) for s in gold]
    p = [graph_from_gold(s, labels) for s in pred]
    headline = evaluate(p, g, include_root_arcs=args.include_root)
    other = evaluate(p, g, include_root_arcs=not args.include_root, buckets=False)
    sys.stdout.write(headline.to_text())
    sys.stdout.write(headline.to_kv())
    prefix = "with_root" if other.include_root_arcs else "without_root"
    sys.stdout.write("".join(f"{prefix}.{line}\n" for line in other.to_kv().splitlines()))
    return EXIT_OK


def cmd_check(args) -> int:
    report = checks.run_checks(args.n, args.labels, args.rank or 4, args.iters, args.seed or 0,
                               coords=args.coords, budget=args.dense_budget, corrupt=args.corrupt)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_bench(args) -> int:
    try:
        sizes = [int(x) for x in args.labels.split(",") if x.strip()]
    except ValueError as e:
        raise UsageError(f"--labels: {e}") from e
    if not sizes or min(sizes) < 1:
        raise UsageError("--labels needs positive integers")
    print(f"n={args.n} rank={args.rank or 300} iters={args.iters} repeats={args.repeats}")
    rows = bench.label_sweep(args.n, sizes, args.rank or 300, args.iters, args.repeats,
                             args.dense_budget, args.seed or 0, log_fn=print)
    print(bench.format_table(rows))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _common(p, rank=True):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    if rank:
        p.add_argument("--rank", type=int, default=None, help="CPD rank")


def build_parser() -> argparse.ArgumentParser:
    ap = _ArgumentParser(prog="cpdparse", description="Second-order semantic dependency parsing with CPD factors.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("train", help="train a parser from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--iters-train", type=int, default=None)
    p.add_argument("--iters-test", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse an SDP file with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output path, or - for stdout")
    p.add_argument("--iters-test", type=int, default=None)
    p.add_argument("--no-frame", action="store_true", help="2014 layout without the FRAME column")
    _common(p, rank=False)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("evaluate", help="labeled and unlabeled F1 of predicted against gold SDP")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--include-root", action="store_true", help="count root arcs in the headline score")
    p.add_argument("--no-frame", action="store_true")
    p.set_defaults(func=cmd_evaluate, threads=1)

    p = sub.add_parser("check", help="factored vs dense inference and gradient self-checks")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--labels", type=int, default=3)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--coords", type=int, default=20)
    p.add_argument("--dense-budget", type=int, default=DEFAULT_DENSE_BUDGET)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    _common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="inference time against label-set size")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--labels", default="1,5,10,20,30,40", help="comma-separated label-set sizes")
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--dense-budget", type=int, default=DEFAULT_DENSE_BUDGET)
    _common(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except UsageError as e:
        print(f"cpdparse: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergenceError, FloatingPointError) as e:
        node = getattr(e, "node", None)
        print(f"cpdparse: numerical failure: {e}" + (f" (node {node})" if node else ""), file=sys.stderr)
        return EXIT_NUMERIC
    except BudgetExceededError as e:
        print(f"cpdparse: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, SdpFormatError, LabelVocabularyError, ShapeError, ValueError) as e:
        print(f"cpdparse: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
