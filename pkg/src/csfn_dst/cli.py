"""Command-line entry point: ``csfn-dst <subcommand> [flags]``.

Exit codes: 0 success, 1 bad arguments / schema / corpus / checkpoint, 2 a
non-finite loss aborted training. Flags override values from ``--config``.
Relative ``--out`` paths are resolved under ``$CSFN_DST_OUT_DIR`` when set.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data_io import Corpus, CorpusError, generate_toy_corpus, load_corpus, load_multiwoz, save_corpus
from .fusion import ModelConfig
from .numerics import CheckpointError, TrainingError
from .pipeline import ABLATIONS, CSFNDST, ORACLE_MODES, TrainConfig, evaluate, grid_search, train, write_traces
from .pipeline.diagnostics import model_grad_check
from .schema_graph import SchemaDef, SchemaError, bundled_schema_path, load_schema

log = logging.getLogger("csfn_dst")

OUT_DIR_ENV = "CSFN_DST_OUT_DIR"
SUBCOMMANDS = ("gen-data", "train", "eval", "grad-check", "trace", "grid-search")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="JSON file of flag values; explicit flags win")
    p.add_argument("--schema", help="schema JSON path or bundled name (toy, multiwoz21)")
    p.add_argument("--corpus", help="canonical corpus JSON, or a TRADE-style file/directory")
    p.add_argument("--ckpt", help="checkpoint path")
    p.add_argument("--out", help="output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--n", type=int, default=200, help="number of dialogues (gen-data)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=5, help="early-stopping patience in epochs; 0 disables")
    p.add_argument("--d-model", type=int, default=400)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--layers", type=int, default=6)
    p.add_argument("--ablation", choices=ABLATIONS, default=None)
    p.add_argument("--oracle", choices=ORACLE_MODES, default="none")
    p.add_argument("--max-decode-len", type=int, default=10)
    p.add_argument("--strict-paper", action="store_true", help="disable dropout")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="csfn-dst", description="Schema-graph dialogue state tracker.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen-data": "write a synthetic toy corpus",
        "train": "train a model and save a checkpoint",
        "eval": "evaluate a checkpoint and write an EvalReport",
        "grad-check": "finite-difference check of the full model",
        "trace": "write per-turn gate/value/state traces",
        "grid-search": "train over layer counts 4..8 and keep the best",
    }
    for name in SUBCOMMANDS:
        _common(sub.add_parser(name, help=helps[name], description=helps[name]))
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(k.replace("-", "_") for k in raw) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in raw.items()})
        args = parser.parse_args(argv)
    return args


# -- helpers ----------------------------------------------------------------
def _out_path(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _schema(name_or_path: str | None, corpus: Corpus | None = None) -> SchemaDef:
    if name_or_path is None:
        if corpus is not None and corpus.schema is not None:
            return SchemaDef.from_dict(corpus.schema)
        name_or_path = "toy"
    path = Path(name_or_path)
    if not path.exists() and name_or_path in ("toy", "multiwoz21"):
        path = bundled_schema_path(name_or_path)
    return load_schema(path)


def _corpus(path: str | None, schema_arg: str | None, split: str) -> tuple[Corpus, SchemaDef]:
    if not path:
        raise UsageError("--corpus is required")
    p = Path(path)
    if not p.exists():
        raise CorpusError(f"{p}: no such file or directory")
    if p.is_file():
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{p}: malformed JSON ({exc})") from None
        if isinstance(raw, dict):
            corpus = load_corpus(p)
            return corpus, _schema(schema_arg, corpus)
    schema = _schema(schema_arg or "multiwoz21")
    corpus, report = load_multiwoz(p, schema, split)
    log.info("ingested %s: %d excluded dialogues", p, report.dialogues_excluded)
    return corpus, schema


def _model_config(args) -> ModelConfig:
    return ModelConfig(d_model=args.d_model, n_heads=args.heads, n_layers=args.layers,
                       max_decode_len=args.max_decode_len)


def _train_config(args) -> TrainConfig:
    return TrainConfig(batch_size=args.batch, lr=args.lr, epochs=args.epochs,
                       seed=1 if args.seed is None else args.seed,
                       ablation=args.ablation or "schema", strict_paper=args.strict_paper,
                       patience=args.patience or None)


def _load_model(args) -> CSFNDST:
    if not args.ckpt:
        raise UsageError("--ckpt is required")
    model = CSFNDST.load(args.ckpt)
    if args.ablation:
        model.set_ablation(args.ablation)
    model.cfg.max_decode_len = args.max_decode_len
    return model


def _write_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=1)
    if path is None:
        print(text)
    else:
        path.write_text(text + "\n", encoding="utf-8")


# -- subcommands --------------------------------------------------------------
def cmd_gen_data(args) -> int:
    if not args.out:
        raise UsageError("--out is required")
    schema = _schema(args.schema)
    corpus = generate_toy_corpus(schema, n_dialogues=args.n, seed=7 if args.seed is None else args.seed)
    save_corpus(corpus, _out_path(args.out))
    print(f"wrote {len(corpus.all_dialogues())} dialogues to {_out_path(args.out)}")
    return 0


def cmd_train(args) -> int:
    if not args.out:
        raise UsageError("--out is required")
    corpus, schema = _corpus(args.corpus, args.schema, "train")
    out = _out_path(args.out)
    result = train(corpus, schema, _model_config(args), _train_config(args),
                   log_path=out.with_name(out.name + ".log.jsonl"))
    result.model.save(out, extra={"best_epoch": result.best_epoch, "history": result.history})
    print(json.dumps({"checkpoint": str(out), "best_epoch": result.best_epoch,
                      "best_valid_joint_accuracy": result.best_valid}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args)
    corpus, _ = _corpus(args.corpus, args.schema, args.split)
    report, _ = evaluate(corpus.split(args.split), model, args.oracle, args.workers)
    out = _out_path(args.out)
    if out is None:
        print(report.to_json())
    else:
        out.write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"joint_accuracy={report.joint_accuracy:.4f} -> {out}")
    return 0


def cmd_trace(args) -> int:
    model = _load_model(args)
    corpus, _ = _corpus(args.corpus, args.schema, args.split)
    _, traces = evaluate(corpus.split(args.split), model, args.oracle, args.workers)
    out = _out_path(args.out)
    if out is None:
        for entry in traces:
            print(json.dumps(entry, sort_keys=True, ensure_ascii=False))
    else:
        write_traces(traces, out)
    return 0


def cmd_grad_check(args) -> int:
    report = model_grad_check(seed=0 if args.seed is None else args.seed)
    summary = {"max_rel_error": report.max_rel_error, "n_checked": report.n_checked, "tol": report.tol,
               "passed": report.passed, "worst": report.worst}
    _write_json(summary, _out_path(args.out))
    return 0 if report.passed else 1


def cmd_grid_search(args) -> int:
    if not args.out:
        raise UsageError("--out is required")
    corpus, schema = _corpus(args.corpus, args.schema, "train")
    best, results = grid_search(corpus, schema, _model_config(args), _train_config(args))
    out = _out_path(args.out)
    results[best].model.save(out, extra={"grid": {str(n): r.best_valid for n, r in results.items()}})
    print(json.dumps({"best_layers": best, "valid_joint_accuracy": {str(n): r.best_valid for n, r in results.items()},
                      "model": asdict(results[best].model.cfg)}, sort_keys=True))
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "trace": cmd_trace,
    "grid-search": cmd_grid_search,
}


def run(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        return COMMANDS[args.command](args)
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 2
    except (UsageError, CorpusError, SchemaError, CheckpointError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
