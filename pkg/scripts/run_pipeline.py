"""Run the whole CLI pipeline on a synthetic corpus inside one working directory.

All paths handed to the CLI are relative to ``--workdir``, so two runs in
different directories produce identical manifests apart from timestamps.

    python3 scripts/run_pipeline.py --workdir runs/a --n 2000 --seed 0
"""
import argparse
import os
import sys
import time

from assetvalue.cli import main as cli

KB = ["--words", "raw/words.txt", "--adult-words", "raw/adult_words.txt",
      "--trademarks", "raw/trademarks.txt", "--tld-counts", "raw/tld_counts.csv"]
TABULAR = {
    "mean": [],
    "gbt": [],
    "rf": ["--n-trees", "20"],
    "ada": [],
}


def step(*argv):
    argv = [str(a) for a in argv]
    started = time.perf_counter()
    code = cli(argv)
    print(f"{argv[0]:<10} {time.perf_counter() - started:6.1f}s  exit={code}", flush=True)
    if code:
        sys.exit(code)


def run(n, seed, nn_epochs, T, with_transformer=True):
    step("synth", "--n", n, "--messy", "--seed", seed, "--out", "raw")
    step("ingest", "--transactions", "raw/transactions.jsonl", "--rates", "raw/rates.csv",
         "--seed", seed, "--out", "clean")
    step("stats", "--transactions", "clean/clean.jsonl", "--seed", seed, "--out", "stats")
    step("split", "--transactions", "clean/clean.jsonl", "--seed", seed, "--out", "split")
    step("featurize", "--split-dir", "split", *KB, "--seed", seed, "--out", "features")
    models = list(TABULAR)
    for model, extra in TABULAR.items():
        step("train", "--model", model, "--split-dir", "split", "--features-dir", "features",
             *extra, "--seed", seed, "--out", f"models/{model}")
    if with_transformer:
        step("train", "--model", "transformer", "--split-dir", "split", *KB,
             "--stage1-epochs", nn_epochs, "--T", T, "--seed", seed, "--out", "models/transformer")
        models.append("transformer")
    for model in models:
        step("predict", "--model", f"models/{model}/model.json", "--split-dir", "split", *KB,
             "--seed", seed, "--out", f"predictions/{model}")
        step("evaluate", "--split-dir", "split", "--pred-dir", f"predictions/{model}",
             "--compare", "predictions/mean", "--label", model, "--seed", seed,
             "--out", f"reports/{model}")
    if with_transformer:
        step("ensemble", "--a", "predictions/gbt", "--b", "predictions/transformer",
             "--seed", seed, "--out", "predictions/ensemble")
        step("evaluate", "--split-dir", "split", "--pred-dir", "predictions/ensemble",
             "--label", "ensemble", "--seed", seed, "--out", "reports/ensemble")
        models.append("ensemble")
    analyze = []
    for model in models:
        analyze += ["--pred-dir", f"predictions/{model}", "--label", model]
    step("analyze", "--split-dir", "split", *analyze, "--seed", seed, "--out", "reports")


def parse():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--workdir", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nn-epochs", type=int, default=2)
    p.add_argument("--T", type=int, default=200)
    p.add_argument("--no-transformer", action="store_true")
    return p.parse_args()


if __name__ == "__main__":
    args = parse()
    os.makedirs(args.workdir, exist_ok=True)
    os.chdir(args.workdir)
    run(args.n, args.seed, args.nn_epochs, args.T, not args.no_transformer)
