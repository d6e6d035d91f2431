"""Command-line pipeline.

    assetvalue ingest    --transactions raw.jsonl --rates rates.csv --out clean/
    assetvalue stats     --transactions clean/clean.jsonl --out stats/
    assetvalue split     --transactions clean/clean.jsonl --out split/
    assetvalue featurize --split-dir split/ --tld-counts tld.csv ... --out feats/
    assetvalue train     --model gbt --split-dir split/ --features-dir feats/ --out gbt/
    assetvalue predict   --model gbt/model.json --split-dir split/ --out gbt/pred/
    assetvalue evaluate  --split-dir split/ --pred-dir gbt/pred/ --out gbt/eval/
    assetvalue analyze   --split-dir split/ --pred-dir gbt/pred/ --label gbt --out analysis/
    assetvalue ensemble  --a gbt/pred/ --b nn/pred/ --out ens/

Every command accepts ``--config file.json``, ``--seed`` and ``--out``.
Config keys are option names with underscores. Top-level keys apply to every
command that has the option; a nested object named after a command applies
only to that command and must not contain unknown keys. Explicit flags
override the config.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from collections import Counter
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluation as ev
from . import features as ft
from . import tabular as tb
from .errors import (EmptyInput, MissingRate, SchemaMismatch, SchemaViolation, ShapeMismatch,
                     ValuationError)
from .knowledge import load_knowledge

log = logging.getLogger("assetvalue")

EXIT_SCHEMA = 2
EXIT_RATES = 3
EXIT_EMPTY_TRAIN = 4
EXIT_MISALIGNED = 5
PARTS = ("dev", "test")


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# -- helpers ------------------------------------------------------------------------------


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, out: Path, outputs):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config_data")}
    _write_json(out / "manifest.json", {
        "command": args.command,
        "seed": args.seed,
        "created_at": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "args": cfg,
        "outputs": sorted(str(Path(o).name) for o in outputs),
    })


def _knowledge(args):
    return load_knowledge(words=args.words, adult_words=args.adult_words,
                          trademarks=args.trademarks, tld_counts=args.tld_counts,
                          segment_lexicon=args.lexicon)


def _read_txns(path):
    try:
        return ds.read_jsonl(path)
    except SchemaViolation as exc:
        raise CommandError(EXIT_SCHEMA, str(exc)) from exc


def _single_class(txns):
    classes = {t.asset_class for t in txns}
    if len(classes) > 1:
        raise CommandError(EXIT_SCHEMA, "input mixes asset classes; process one class at a time")
    return classes.pop() if classes else None


def _drop_families(names):
    dropped = set()
    for n in names or ():
        try:
            dropped.add(ft.Family(n))
        except ValueError:
            raise CommandError(EXIT_SCHEMA, f"unknown feature family {n!r}; "
                                            f"choose from {[f.value for f in ft.Family]}") from None
    return ft.ALL_FAMILIES - dropped


def write_predictions(path, record_ids, prices):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "predicted_price"])
        for rid, p in zip(record_ids, prices):
            w.writerow([rid, repr(float(p))])


def read_predictions(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [r["record_id"] for r in rows], np.array([float(r["predicted_price"]) for r in rows])


def _aligned(pred_path, txns):
    ids, preds = read_predictions(pred_path)
    if ids != [t.record_id for t in txns]:
        raise CommandError(EXIT_MISALIGNED, f"{pred_path} is not aligned with its split file")
    return preds


# -- commands -------------------------------------------------------------------------------


def cmd_synth(args):
    from .synthetic import PriceModel, generate_corpus

    corpus = generate_corpus(args.n, ds.AssetClass(args.asset_class), args.seed,
                             PriceModel(noise=args.noise), messy=args.messy)
    out = _out(args)
    paths = corpus.write(out)
    _manifest(args, out, paths.values())


def cmd_ingest(args):
    txns = _read_txns(args.transactions)
    cls = _single_class(txns)
    kept, rejected = ds.filter_transactions(txns)
    suspicious = ds.detect_suspicious(kept) if cls is not None else set()
    kept = [t for t in kept if t.record_id not in suspicious]
    needs_rates = cls is not None and any(t.currency != cls.target_currency for t in kept)
    if needs_rates:
        if not args.rates:
            raise CommandError(EXIT_RATES, "foreign-currency sales present but no --rates given")
        try:
            rates = ds.ExchangeRateTable.from_csv(args.rates, cls.target_currency)
        except SchemaViolation as exc:
            raise CommandError(EXIT_SCHEMA, str(exc)) from exc
        try:
            kept = [ds.normalize_currency(t, rates) for t in kept]
        except MissingRate as exc:
            raise CommandError(EXIT_RATES, str(exc)) from exc
    bad = []
    for t in kept:
        try:
            ds.parse_txn(t)
        except ValuationError as exc:
            bad.append(f"{t.record_id}: {type(exc).__name__} {exc}")
    if bad:
        raise CommandError(EXIT_SCHEMA, "unparseable identifiers: " + "; ".join(bad[:5]))
    out = _out(args)
    ds.write_jsonl(out / "clean.jsonl", kept)
    reasons = Counter(r.value for _, r in rejected)
    report = {
        "input": len(txns),
        "kept": len(kept),
        "rejected": {r.value: reasons.get(r.value, 0) for r in ds.RejectReason},
        "suspicious": len(suspicious),
        "asset_class": None if cls is None else cls.value,
    }
    _write_json(out / "ingest_report.json", report)
    _manifest(args, out, ["clean.jsonl", "ingest_report.json"])
    return report


def cmd_stats(args):
    txns = _read_txns(args.transactions)
    try:
        stats = ds.compute_statistics(txns)
    except EmptyInput as exc:
        raise CommandError(EXIT_SCHEMA, str(exc)) from exc
    out = _out(args)
    _write_json(out / "stats.json", stats.to_json())
    with open(out / "monthly.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", "volume", "median_price"])
        for month, vol, med in stats.monthly:
            w.writerow([month, vol, "" if med is None else repr(med)])
    _manifest(args, out, ["stats.json", "monthly.csv"])


def cmd_split(args):
    txns = _read_txns(args.transactions)
    if not txns:
        raise CommandError(EXIT_EMPTY_TRAIN, "no transactions to split")
    out = _out(args)
    by_class = {}
    for t in txns:
        by_class.setdefault(t.asset_class, []).append(t)
    manifest = {}
    for cls, group in sorted(by_class.items(), key=lambda kv: kv[0].value):
        target = out if len(by_class) == 1 else out / cls.value
        split = ds.chronological_split(group, args.dev_frac, args.test_frac)
        manifest[cls.value] = ds.write_split(split, target)
    manifest["dev_frac"] = args.dev_frac
    manifest["test_frac"] = args.test_frac
    manifest["seed"] = args.seed
    _write_json(out / "split_manifest.json", manifest)
    _manifest(args, out, ["train.jsonl", "dev.jsonl", "test.jsonl", "split_manifest.json"])


def cmd_featurize(args):
    split_dir = Path(args.split_dir)
    train = _read_txns(split_dir / "train.jsonl")
    if not train:
        raise CommandError(EXIT_EMPTY_TRAIN, "empty train split")
    kb = _knowledge(args)
    schema = ft.build_schema(train, _drop_families(args.drop_feature))
    out = _out(args)
    _write_json(out / "schema.json", schema.to_json())
    written = ["schema.json"]
    for part in ("train", *PARTS):
        txns = train if part == "train" else _read_txns(split_dir / f"{part}.jsonl")
        ft.write_features_csv(out / f"{part}.csv", txns, ft.featurize(txns, kb, schema), schema)
        written.append(f"{part}.csv")
    _manifest(args, out, written)


def _select_columns(full_schema, names, X, families):
    """Slice a featurized matrix down to ``families`` (ablation by construction)."""
    if not families <= full_schema.enabled_families:
        raise CommandError(EXIT_SCHEMA, "requested features were not extracted by featurize")
    schema = replace(full_schema, enabled_families=families)
    keep = set(schema.feature_names())
    cols = [i for i, n in enumerate(names) if n in keep]
    return schema, X[:, cols]


def _train_tabular(args, split_dir, out):
    feats = Path(args.features_dir)
    full_schema = ft.FeatureSchema.from_json(_read_json(feats / "schema.json"))
    ids, names, X, y = ft.read_features_csv(feats / "train.csv")
    if names != full_schema.feature_names():
        raise CommandError(EXIT_SCHEMA, "features CSV header does not match schema.json")
    if len(y) == 0:
        raise CommandError(EXIT_EMPTY_TRAIN, "empty train split")
    schema, X = _select_columns(full_schema, names, X, _drop_families(args.drop_feature))
    train = _read_txns(split_dir / "train.jsonl")
    if [t.record_id for t in train] != ids:
        raise CommandError(EXIT_MISALIGNED, "train features do not match the train split")
    weights = None
    if args.recency_weight:
        T, factor = args.recency_weight
        weights = tb.recency_weights(train, int(T), float(factor))

    seed = args.seed
    rows = []
    if args.model == "mean":
        model = tb.fit_mean_baseline(np.exp(y), weights)
        model.n_features = X.shape[1]
    elif args.model == "gbt":
        cfg = tb.GbtConfig(n_trees=args.n_trees, learning_rate=args.learning_rate,
                           max_depth=args.max_depth if args.max_depth is not None else 6,
                           min_leaf=args.min_leaf, seed=seed)
        model = tb.fit_gbt(X, y, weights, cfg)
        rows = [(1, 0, i, loss) for i, loss in enumerate(model.train_loss)]
    elif args.model == "rf":
        cfg = tb.RfConfig(n_trees=args.n_trees, max_depth=args.max_depth, min_leaf=args.min_leaf,
                          seed=seed, n_jobs=args.jobs)
        model = tb.fit_random_forest(X, y, weights, cfg)
    else:
        cfg = tb.AdaConfig(n_stages=args.n_stages, tree_depth=args.tree_depth, seed=seed)
        model = tb.fit_adaboost_r2(X, y, weights, cfg)
        rows = [(1, 0, i, w) for i, w in enumerate(model.stage_weights)]
    pred = tb.predict_log(model, X)
    rows.append((0, 0, 0, float(np.mean((pred - y) ** 2))))
    text = tb.dumps_model(model, schema, {"seed": seed})
    (out / "model.json").write_text(text + "\n", encoding="utf-8")
    return rows


def _train_transformer(args, split_dir, out):
    import torch

    from . import neural as nn_

    torch.set_num_threads(max(1, args.jobs))
    train = _read_txns(split_dir / "train.jsonl")
    if not train:
        raise CommandError(EXIT_EMPTY_TRAIN, "empty train split")
    kb = _knowledge(args)
    variant = nn_.Variant(args.variant)
    vocab = nn_.build_vocab(train)
    cfg = nn_.ModelConfig(vocab.size, max_len=args.max_len, d_model=args.d_model,
                          n_layers=args.layers, n_heads=args.heads, d_ff=args.d_ff)
    model = nn_.new_model(cfg, args.seed)
    rows = []
    if args.pretrain_epochs:
        ordered = sorted(train, key=ds.Transaction.sort_key)
        ids, mask = nn_.encode_transactions(ordered, vocab, variant, kb, cfg.max_len)
        _, losses = nn_.pretrain_mlm(model, ids, mask, nn_.MlmConfig(
            epochs=args.pretrain_epochs, learning_rate=args.lr, batch_size=args.batch_size,
            seed=args.seed))
        rows += [(0, 0, i + 1, loss) for i, loss in enumerate(losses)]
    with torch.no_grad():
        model.head.bias.fill_(float(np.mean([math.log(t.price) for t in train])))
    schedule = nn_.FineTuneSchedule(stage1_epochs=args.stage1_epochs,
                                    stage2_epochs=args.stage2_epochs, T=args.T,
                                    learning_rate=args.lr, batch_size=args.batch_size,
                                    warmup_frac=args.warmup_frac, seed=args.seed)
    model, train_log = nn_.train_two_stage(model, vocab, train, schedule, variant, kb)
    rows += train_log
    text = nn_.dumps_checkpoint(model, vocab, variant, {"seed": args.seed})
    (out / "model.json").write_text(text + "\n", encoding="utf-8")
    return rows


def cmd_train(args):
    split_dir = Path(args.split_dir)
    out = _out(args)
    if args.model == "transformer":
        rows = _train_transformer(args, split_dir, out)
    else:
        if not args.features_dir:
            raise CommandError(EXIT_SCHEMA, "--features-dir is required for tabular models")
        rows = _train_tabular(args, split_dir, out)
    with open(out / "train_log.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "epoch", "step", "loss"])
        for stage, epoch, step, loss in rows:
            w.writerow([stage, epoch, step, repr(float(loss))])
    _manifest(args, out, ["model.json", "train_log.csv"])


def load_predictor(model_path, kb):
    """Callable mapping a transaction list to predicted prices."""
    obj = _read_json(model_path)
    if obj.get("model_type") == "transformer":
        from . import neural as nn_

        model, vocab, variant = nn_.checkpoint_from_json(obj)

        def run(txns):
            if not txns:
                return np.zeros(0)
            ids, mask = nn_.encode_transactions(txns, vocab, variant, kb, model.cfg.max_len)
            return np.exp(nn_.forward(model, ids, mask))
        return run

    model = tb.model_from_json(obj)
    schema = ft.FeatureSchema.from_json(obj["schema"])

    def run(txns):
        X = ft.featurize(txns, kb, schema)
        try:
            return tb.predict(model, X)
        except ShapeMismatch as exc:
            raise CommandError(EXIT_SCHEMA, str(exc)) from exc
    return run


def cmd_predict(args):
    kb = _knowledge(args)
    run = load_predictor(args.model, kb)
    out = _out(args)
    written = []
    if args.transactions:
        sources = [("custom", Path(args.transactions))]
    else:
        sources = [(p, Path(args.split_dir) / f"{p}.jsonl") for p in PARTS]
    for part, path in sources:
        txns = _read_txns(path)
        name = f"predictions_{part}.csv"
        write_predictions(out / name, [t.record_id for t in txns], run(txns))
        written.append(name)
    _manifest(args, out, written)


def _suffix_ranking(split_dir):
    train = _read_txns(Path(split_dir) / "train.jsonl")
    return ev.top_suffixes([ds.parse_txn(t) for t in train])


def _load_preds(args, part, txns):
    if args.ensemble:
        a, b = (_aligned(Path(d) / f"predictions_{part}.csv", txns) for d in args.ensemble)
        return ev.ensemble_geometric(a, b)
    return _aligned(Path(args.pred_dir) / f"predictions_{part}.csv", txns)


def cmd_evaluate(args):
    if not args.pred_dir and not args.ensemble:
        raise CommandError(EXIT_SCHEMA, "give --pred-dir or --ensemble A B")
    split_dir = Path(args.split_dir)
    ranking = _suffix_ranking(split_dir)
    out = _out(args)
    written = []
    summary = {}
    for part in PARTS:
        txns = _read_txns(split_dir / f"{part}.jsonl")
        if not txns:
            continue
        preds = _load_preds(args, part, txns)
        if args.clamp:
            preds = ev.clamp_predictions(preds, *args.clamp)
        truth = np.array([t.price for t in txns])
        parsed = [ds.parse_txn(t) for t in txns]
        report = ev.grouped_eval(preds, truth, parsed, suffix_ranking=ranking,
                                 model_id=args.label or "", split_id=part, log1p=args.log1p)
        report.write(out / f"report_{part}.json", out / f"report_{part}.csv")
        written += [f"report_{part}.json", f"report_{part}.csv"]
        summary[part] = {"msle": report.overall_msle, "n": report.n}
        if args.compare:
            other = _aligned(Path(args.compare) / f"predictions_{part}.csv", txns)
            if args.clamp:
                other = ev.clamp_predictions(other, *args.clamp)
            ea = ev.squared_log_errors(preds, truth, args.log1p)
            eb = ev.squared_log_errors(other, truth, args.log1p)
            summary[part]["compare_msle"] = float(eb.mean())
            summary[part]["p_value"] = ev.paired_significance(ea, eb, args.resamples, args.seed)
    _write_json(out / "summary.json", summary)
    _manifest(args, out, written + ["summary.json"])
    return summary


def cmd_analyze(args):
    """Grouped MSLE of several prediction sets side by side, one CSV row per bucket."""
    split_dir = Path(args.split_dir)
    ranking = _suffix_ranking(split_dir)
    labels = args.label or [Path(d).name for d in args.pred_dir]
    if len(labels) != len(args.pred_dir):
        raise CommandError(EXIT_SCHEMA, "need one --label per --pred-dir")
    txns = _read_txns(split_dir / f"{args.part}.jsonl")
    truth = np.array([t.price for t in txns])
    parsed = [ds.parse_txn(t) for t in txns]
    out = _out(args)
    with open(out / f"analysis_{args.part}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "grouping", "bucket", "count", "share", "msle"])
        for label, pred_dir in zip(labels, args.pred_dir):
            preds = _aligned(Path(pred_dir) / f"predictions_{args.part}.csv", txns)
            rep = ev.grouped_eval(preds, truth, parsed, suffix_ranking=ranking, log1p=args.log1p)
            w.writerow([label, "overall", "all", rep.n, 1.0, repr(rep.overall_msle)])
            for g in rep.groups:
                w.writerow([label, g.grouping, g.bucket, g.count, repr(g.share), repr(g.msle)])
    _manifest(args, out, [f"analysis_{args.part}.csv"])


def cmd_ensemble(args):
    out = _out(args)
    written = []
    for part in PARTS:
        pa, pb = Path(args.a) / f"predictions_{part}.csv", Path(args.b) / f"predictions_{part}.csv"
        if not (pa.exists() and pb.exists()):
            continue
        ids_a, a = read_predictions(pa)
        ids_b, b = read_predictions(pb)
        if ids_a != ids_b:
            raise CommandError(EXIT_MISALIGNED, f"{pa} and {pb} list different records")
        write_predictions(out / f"predictions_{part}.csv", ids_a, ev.ensemble_geometric(a, b))
        written.append(f"predictions_{part}.csv")
    _manifest(args, out, written)


# -- parser ---------------------------------------------------------------------------------


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _knowledge_flags(p):
    p.add_argument("--words")
    p.add_argument("--adult-words")
    p.add_argument("--trademarks")
    p.add_argument("--tld-counts")
    p.add_argument("--lexicon", help="segmentation lexicon (defaults to --words)")


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="assetvalue", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--asset-class", default="DomainName", choices=[c.value for c in ds.AssetClass])
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--messy", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="filter, de-wash and normalize sales")
    p.add_argument("--transactions", required=True)
    p.add_argument("--rates")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", parents=[common], help="descriptive statistics")
    p.add_argument("--transactions", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", parents=[common], help="chronological train/dev/test split")
    p.add_argument("--transactions", required=True)
    p.add_argument("--dev-frac", type=float, default=0.05)
    p.add_argument("--test-frac", type=float, default=0.05)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("featurize", parents=[common], help="extract feature CSVs")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--drop-feature", action="append", default=[])
    _knowledge_flags(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="fit a model")
    p.add_argument("--model", required=True, choices=["mean", "gbt", "rf", "ada", "transformer"])
    p.add_argument("--split-dir", required=True)
    p.add_argument("--features-dir")
    p.add_argument("--drop-feature", action="append", default=[])
    p.add_argument("--recency-weight", nargs=2, type=float, metavar=("T", "FACTOR"))
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=0.3)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--n-stages", type=int, default=50)
    p.add_argument("--tree-depth", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--variant", default="augmented", choices=["vanilla", "augmented"])
    p.add_argument("--T", type=int, default=3000)
    p.add_argument("--stage1-epochs", type=int, default=1)
    p.add_argument("--stage2-epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--warmup-frac", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=512)
    p.add_argument("--pretrain-epochs", type=int, default=0)
    _knowledge_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict prices")
    p.add_argument("--model", required=True)
    p.add_argument("--split-dir")
    p.add_argument("--transactions")
    _knowledge_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="MSLE reports and significance")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--pred-dir")
    p.add_argument("--ensemble", nargs=2, metavar=("A", "B"))
    p.add_argument("--compare", help="second prediction dir for a paired test")
    p.add_argument("--clamp", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--label")
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--log1p", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", parents=[common], help="grouped error analysis table")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--pred-dir", action="append", required=True)
    p.add_argument("--label", action="append")
    p.add_argument("--part", default="dev", choices=list(PARTS))
    p.add_argument("--log1p", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ensemble", parents=[common], help="geometric-mean ensemble of two prediction dirs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_ensemble)
    return parser


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    config_path = pre.parse_known_args(argv)[0].config
    if config_path:
        subparsers = parser._subparsers._group_actions[0].choices
        command = next((a for a in argv if a in subparsers), None)
        if command is not None:
            cfg = _read_json(config_path)
            sub = subparsers[command]
            dests = {a.dest for a in sub._actions}
            # shared top-level keys apply where the command has such an option
            overrides = {k: v for k, v in cfg.items() if not isinstance(v, dict) and k in dests}
            section = cfg.get(command, {})
            unknown = set(section) - dests
            if unknown:
                parser.error(f"unknown config keys for {command}: {sorted(unknown)}")
            overrides.update(section)
            for action in sub._actions:
                if action.dest in overrides:
                    action.required = False
            sub.set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CommandError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    return 0


if __name__ == "__main__":
    sys.exit(main())
