"""Command-line entry point: ``sarcnet {stats,train,eval,attend,grid,selfcheck}``.

Exit codes: 0 success, 1 usage/config, 2 I/O, 3 numeric/validation.
"""
from __future__ import annotations

import argparse
import html
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path


from . import __version__
from .config import default_config_text, format_config, load_config
from .data import (
    build_vocabulary,
    class_word_frequencies,
    dataset_stats,
    encode_records,
    file_digest,
    load_dataset,
    load_split,
    save_split,
    split_dataset,
    tokenize,
)
from .embeddings import build_embedding_matrix, coverage_report, load_vectors_text
from .errors import ConfigError, SarcnetError, UnsupportedVariantError
from .gradcheck import CHECKS, run_selfcheck
from .model import Artifacts, explain, load_checkpoint, predict, save_checkpoint
from .train import DEFAULT_GRID, AdaDeltaConfig, evaluate, fit, grid_search, write_metrics_log

log = logging.getLogger("sarcnet")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    input_digests: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    started_at: str = ""
    duration_s: float = 0.0
    version: str = __version__

    def add_input(self, path):
        if path:
            self.input_digests[str(path)] = file_digest(path)


def _emit_manifest(manifest: RunManifest, out_dir, started: float):
    manifest.duration_s = round(time.time() - started, 3)
    text = json.dumps(asdict(manifest), indent=2, sort_keys=True)
    if out_dir is None:
        print(f"manifest: {json.dumps(asdict(manifest), sort_keys=True)}", file=sys.stderr)
    else:
        Path(out_dir, "manifest.json").write_text(text + "\n", encoding="utf-8")


def _new_manifest(command, config=None, seed=None):
    return RunManifest(command, config or {}, seed, started_at=datetime.now(timezone.utc).isoformat())


# -- stats ---------------------------------------------------------------------

def cmd_stats(args) -> int:
    started = time.time()
    records = load_dataset(args.dataset)
    vocab = build_vocabulary(tokenize(r.headline) for r in records)
    pre = None if not args.embeddings else load_vectors_text(args.embeddings, restrict_to=vocab)
    stats = dataset_stats(records, vocab, None if pre is None else pre.vectors)
    print(stats.report())
    if pre is not None:
        print()
        print(coverage_report(vocab, pre))
    sarc, plain = class_word_frequencies(records, args.top_k)
    for title, ranked in (("sarcastic", sarc), ("non-sarcastic", plain)):
        print(f"\ntop {args.top_k} words ({title}):")
        for tok, n in ranked:
            print(f"  {tok}\t{n}")
    manifest = _new_manifest("stats", {"top_k": args.top_k})
    manifest.add_input(args.dataset)
    manifest.add_input(args.embeddings)
    manifest.results = asdict(stats)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "stats.txt").write_text(stats.report() + "\n", encoding="utf-8")
        manifest.outputs.append(str(Path(args.out, "stats.txt")))
    _emit_manifest(manifest, args.out, started)
    return EXIT_OK


# -- train ---------------------------------------------------------------------

def _overrides(args):
    return {"seed": args.seed, "variant": args.variant, "embeddings": args.embeddings}


def prepare_run(dataset, model_cfg, train_cfg):
    """Split, build vocabulary and embedding table. Returns a dict of pieces."""
    records = load_dataset(dataset)
    split = split_dataset(len(records), model_cfg.seed)
    tokens = [tokenize(r.headline) for r in records]
    scope = split.train if train_cfg.vocab_scope == "train" else range(len(records))
    vocab = build_vocabulary((tokens[i] for i in scope), train_cfg.min_count)
    pre = None
    if train_cfg.embeddings:
        pre = load_vectors_text(train_cfg.embeddings, restrict_to=vocab)
        if pre.dim != model_cfg.embedding_dim:
            log.info("embedding_dim %d taken from pretrained vectors", pre.dim)
            model_cfg = replace(model_cfg, embedding_dim=pre.dim)
    table, missing = build_embedding_matrix(vocab, pre, train_cfg.oov_range, model_cfg.seed,
                                            dim=model_cfg.embedding_dim)

    def encode(idx):
        return encode_records([records[i] for i in idx], vocab, model_cfg.max_len, idx)

    return {"records": records, "split": split, "vocab": vocab, "table": table, "missing": missing,
            "config": model_cfg, "encode": encode}


def cmd_train(args) -> int:
    started = time.time()
    if args.print_defaults:
        print(default_config_text(), end="")
        return EXIT_OK
    if not args.dataset or not args.out:
        raise UsageError("train needs --dataset and --out")
    model_cfg, train_cfg = load_config(args.config, _overrides(args))
    run = prepare_run(args.dataset, model_cfg, train_cfg)
    model_cfg = run["config"]
    split, encode = run["split"], run["encode"]
    train, val, test = encode(split.train), encode(split.val), encode(split.test)
    result = fit(train, val, model_cfg, run["table"],
                 AdaDeltaConfig(train_cfg.rho, train_cfg.epsilon, model_cfg.learning_rate),
                 train_cfg.epochs, train_cfg.batch_size, train_cfg.patience)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("model.ckpt", "metrics.tsv", "split.tsv", "config.txt")}
    save_checkpoint(result.params, model_cfg, run["vocab"], paths["model.ckpt"])
    write_metrics_log(result.history, paths["metrics.tsv"])
    save_split(split, paths["split.tsv"], file_digest(args.dataset))
    paths["config.txt"].write_text(format_config(model_cfg, train_cfg), encoding="utf-8")

    test_eval = evaluate(test, result.params, model_cfg)
    print(f"variant: {model_cfg.variant}")
    print(f"epochs_run: {len(result.history)}  best_epoch: {result.best_epoch}  diverged: {result.diverged}")
    print(f"best_val_accuracy: {result.best_val_acc:.6f}")
    print(f"test_accuracy: {test_eval.accuracy:.6f}")

    manifest = _new_manifest("train", {**asdict(model_cfg), **asdict(train_cfg)}, model_cfg.seed)
    manifest.add_input(args.dataset)
    manifest.add_input(args.config)
    manifest.add_input(train_cfg.embeddings)
    manifest.outputs = [str(p) for p in paths.values()]
    manifest.results = {"best_epoch": result.best_epoch, "best_val_accuracy": result.best_val_acc,
                        "test_accuracy": test_eval.accuracy, "diverged": result.diverged,
                        "oov_words": len(run["missing"])}
    _emit_manifest(manifest, out, started)
    return EXIT_NUMERIC if result.diverged else EXIT_OK


# -- eval ----------------------------------------------------------------------

def cmd_eval(args) -> int:
    started = time.time()
    artifacts = load_checkpoint(args.checkpoint)
    split_path = args.split or Path(args.checkpoint).with_name("split.tsv")
    split, digest = load_split(split_path)
    actual = file_digest(args.dataset)
    if digest != actual:
        print(f"error: split manifest {split_path} was made for dataset sha256 {digest}, "
              f"but {args.dataset} has {actual}; refusing to evaluate", file=sys.stderr)
        return EXIT_NUMERIC
    records = load_dataset(args.dataset)
    idx = split.partition(args.partition)
    data = encode_records([records[i] for i in idx], artifacts.vocab, artifacts.config.max_len, idx)
    result = evaluate(data, artifacts.params, artifacts.config)
    print(f"partition: {args.partition}  records: {len(data)}  variant: {artifacts.config.variant}")
    print(result.report())
    manifest = _new_manifest("eval", asdict(artifacts.config), artifacts.config.seed)
    for p in (args.checkpoint, split_path, args.dataset):
        manifest.add_input(p)
    manifest.results = asdict(result)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    _emit_manifest(manifest, args.out, started)
    return EXIT_OK


# -- attend --------------------------------------------------------------------

_PAGE = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>attention</title></head>
<body style="font-family: sans-serif; margin: 2em; background: #fff; color: #111;">
<h1 style="font-size: 1.2em;">Attention over headline tokens</h1>
<p style="color: #555;">Background intensity is proportional to the attention weight of each token.</p>
{rows}
</body></html>
"""


def render_heatmap(items: list[dict]) -> str:
    rows = []
    for item in items:
        peak = max(item["alphas"]) or 1.0
        cells = "".join(
            f'<span title="{a:.4f}" style="background: rgba(220, 30, 30, {a / peak:.4f}); '
            f'padding: 2px 4px; margin: 1px; border-radius: 3px; display: inline-block;">{html.escape(t)}</span>'
            for t, a in zip(item["tokens"], item["alphas"]))
        label = "sarcastic" if item["label"] == 1 else "non-sarcastic"
        rows.append(f'<div style="margin: 0.8em 0;">{cells}'
                    f'<span style="color: #666; margin-left: 1em;">{label} ({item["confidence"]:.3f})</span></div>')
    return _PAGE.format(rows="\n".join(rows))


def attention_records(texts, artifacts: Artifacts) -> list[dict]:
    items = []
    for text in texts:
        pairs = explain(text, artifacts)
        pred = predict(text, artifacts)
        items.append({"text": text, "tokens": [t for t, _ in pairs], "alphas": [a for _, a in pairs],
                      "label": pred.label, "confidence": float(pred.probs[pred.label])})
    return items


def cmd_attend(args) -> int:
    started = time.time()
    artifacts = load_checkpoint(args.checkpoint)
    if not artifacts.config.hybrid:
        raise UnsupportedVariantError(f"{args.checkpoint} is a baseline checkpoint; attention needs a hybrid model")
    texts = list(args.text or [])
    if args.input:
        texts += [line.strip() for line in open(args.input, encoding="utf-8") if line.strip()]
    if not texts:
        raise UsageError("attend needs --text or --input")
    items = attention_records(texts, artifacts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines_path, page_path = out / "attention.jsonl", out / "attention.html"
    with open(lines_path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(json.dumps(item, ensure_ascii=False) + "\n")
    page_path.write_text(render_heatmap(items), encoding="utf-8")
    print(f"wrote {len(items)} records to {lines_path} and {page_path}")
    manifest = _new_manifest("attend", asdict(artifacts.config), artifacts.config.seed)
    manifest.add_input(args.checkpoint)
    manifest.add_input(args.input)
    manifest.outputs = [str(lines_path), str(page_path)]
    _emit_manifest(manifest, out, started)
    return EXIT_OK


# -- grid ----------------------------------------------------------------------

def cmd_grid(args) -> int:
    started = time.time()
    model_cfg, train_cfg = load_config(args.config, _overrides(args))
    grid = DEFAULT_GRID if not args.grid else json.loads(Path(args.grid).read_text(encoding="utf-8"))
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        raise ConfigError("grid file must be a JSON object mapping config keys to non-empty lists")
    run = prepare_run(args.dataset, model_cfg, train_cfg)
    split, encode = run["split"], run["encode"]
    result = grid_search(grid, encode(split.train), encode(split.val), run["config"], run["table"],
                         train_cfg, args.budget)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "grid.tsv").write_text(result.table(), encoding="utf-8")
    save_checkpoint(result.best_fit.params, result.best_config, run["vocab"], out / "model.ckpt")
    write_metrics_log(result.best_fit.history, out / "metrics.tsv")
    save_split(split, out / "split.tsv", file_digest(args.dataset))
    print(result.table(), end="")
    manifest = _new_manifest("grid", {"grid": grid, "budget": args.budget, **asdict(train_cfg)}, model_cfg.seed)
    manifest.add_input(args.dataset)
    manifest.add_input(args.config)
    manifest.outputs = [str(out / n) for n in ("grid.tsv", "model.ckpt", "metrics.tsv", "split.tsv")]
    manifest.results = {"best_config": asdict(result.best_config), "best_val_accuracy": result.rows[0].val_accuracy}
    _emit_manifest(manifest, out, started)
    return EXIT_OK


# -- selfcheck -----------------------------------------------------------------

def cmd_selfcheck(args) -> int:
    started = time.time()
    results = run_selfcheck(seed=args.seed if args.seed is not None else 0, fault=args.inject_fault)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    manifest = _new_manifest("selfcheck", {"inject_fault": args.inject_fault}, args.seed)
    manifest.results = {r.name: r.max_rel_error for r in results}
    _emit_manifest(manifest, args.out, started)
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sarcnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="corpus statistics and per-class word frequencies")
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings", help="word2vec text file for the coverage column")
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    for name, func, helptext in (("train", cmd_train, "split, build vocabulary and train one model"),
                                 ("grid", cmd_grid, "grid search over model settings")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--dataset", required=(name == "grid"))
        p.add_argument("--config")
        p.add_argument("--out", required=(name == "grid"))
        p.add_argument("--seed", type=int)
        p.add_argument("--variant", choices=("baseline", "hybrid"))
        p.add_argument("--embeddings")
        p.set_defaults(func=func)
        if name == "train":
            p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
        else:
            p.add_argument("--grid", help="JSON object of key -> list of values (default: built-in grid)")
            p.add_argument("--budget", type=int, help="train at most this many cells")

    p = sub.add_parser("eval", help="accuracy, loss and confusion counts on one partition")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", help="split manifest (default: split.tsv next to the checkpoint)")
    p.add_argument("--partition", required=True, choices=("train", "val", "test"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attend", help="export attention weights as JSON lines and an HTML heatmap")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", action="append")
    p.add_argument("--input", help="file with one headline per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attend)

    p = sub.add_parser("selfcheck", help="finite-difference check of every backward pass")
    p.add_argument("--seed", type=int)
    p.add_argument("--inject-fault", choices=sorted(CHECKS), help=argparse.SUPPRESS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SarcnetError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
