"""Drop one feature family at a time and report GBT test MSLE.

Features are extracted once and columns are sliced per run, so each row
differs from the full model only in the missing block.

    python3 scripts/ablation.py --n 5000 --seed 0
"""
import argparse
from dataclasses import replace

import numpy as np

from assetvalue import dataset as ds
from assetvalue.evaluation import msle
from assetvalue.features import FAMILY_ORDER, build_schema, featurize
from assetvalue.knowledge import KnowledgeBase
from assetvalue.synthetic import generate_corpus
from assetvalue.tabular import GbtConfig, fit_gbt, fit_mean_baseline, predict


def columns(schema, families):
    keep = set(replace(schema, enabled_families=families).feature_names())
    return [i for i, n in enumerate(schema.feature_names()) if n in keep]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-trees", type=int, default=100)
    args = p.parse_args()

    corpus = generate_corpus(args.n, seed=args.seed)
    kb = KnowledgeBase(frozenset(corpus.words), frozenset(corpus.adult_words),
                       frozenset(corpus.trademarks), dict(corpus.tld_counts))
    split = ds.chronological_split(corpus.transactions)
    schema = build_schema(split.train)
    Xtr, Xte = featurize(split.train, kb, schema), featurize(split.test, kb, schema)
    ytr = np.log([t.price for t in split.train])
    yte = np.array([t.price for t in split.test])

    baseline = msle(predict(fit_mean_baseline(np.exp(ytr)), Xte), yte)
    print(f"{'setting':<16}{'test MSLE':>12}")
    print(f"{'mean baseline':<16}{baseline:>12.4f}")
    runs = [("all features", frozenset(FAMILY_ORDER))]
    runs += [(f"-- {f.value}", frozenset(FAMILY_ORDER) - {f}) for f in FAMILY_ORDER]
    for label, families in runs:
        cols = columns(schema, families)
        model = fit_gbt(Xtr[:, cols], ytr, config=GbtConfig(n_trees=args.n_trees, seed=args.seed))
        print(f"{label:<16}{msle(predict(model, Xte[:, cols]), yte):>12.4f}")


if __name__ == "__main__":
    main()
