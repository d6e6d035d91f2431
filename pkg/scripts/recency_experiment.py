"""Effect of emphasizing recent sales on a corpus whose prices drift over time.

Compares GBT with and without doubled weights on the newest T training rows,
and the transformer with and without the second fine-tuning stage.

    python3 scripts/recency_experiment.py --n 3000 --drift 0.8
"""
import argparse
import math

import numpy as np
import torch

from assetvalue import dataset as ds
from assetvalue.evaluation import msle
from assetvalue.features import build_schema, featurize
from assetvalue.knowledge import KnowledgeBase
from assetvalue.neural import (FineTuneSchedule, ModelConfig, Variant, build_vocab,
                               encode_transactions, forward, new_model, train_two_stage)
from assetvalue.synthetic import generate_corpus
from assetvalue.tabular import GbtConfig, fit_gbt, predict, recency_weights


def drifted(corpus, drift):
    """Scale prices by exp(drift * t) with t in [0, 1] over the corpus time span."""
    times = [t.epoch_seconds for t in corpus.transactions]
    lo, hi = min(times), max(times)
    out = []
    for t, sec in zip(corpus.transactions, times):
        factor = math.exp(drift * (sec - lo) / max(hi - lo, 1))
        out.append(ds.Transaction(**{**t.__dict__, "price": round(t.price * factor, 6)}))
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drift", type=float, default=0.8, help="log-price rise over the full span")
    p.add_argument("--T-frac", type=float, default=0.1)
    p.add_argument("--skip-transformer", action="store_true")
    args = p.parse_args()

    corpus = generate_corpus(args.n, seed=args.seed)
    kb = KnowledgeBase(frozenset(corpus.words), frozenset(corpus.adult_words),
                       frozenset(corpus.trademarks), dict(corpus.tld_counts))
    split = ds.chronological_split(drifted(corpus, args.drift))
    train = sorted(split.train, key=ds.Transaction.sort_key)
    T = round(args.T_frac * len(train))
    truth = np.array([t.price for t in split.test])

    schema = build_schema(train)
    Xtr, Xte = featurize(train, kb, schema), featurize(split.test, kb, schema)
    ytr = np.log([t.price for t in train])
    cfg = GbtConfig(seed=args.seed)
    plain = msle(predict(fit_gbt(Xtr, ytr, config=cfg), Xte), truth)
    weighted = msle(predict(fit_gbt(Xtr, ytr, recency_weights(train, T), cfg), Xte), truth)
    print(f"T = {T} of {len(train)} training sales")
    print(f"gbt                     {plain:.4f}")
    print(f"gbt + recency weights   {weighted:.4f}")

    if args.skip_transformer:
        return
    vocab = build_vocab(train)
    ids, mask = encode_transactions(split.test, vocab, Variant.AUGMENTED, kb, 64)
    for label, stage2 in (("transformer one stage", 0), ("transformer two stage", 3)):
        model = new_model(ModelConfig(vocab.size), seed=args.seed)
        with torch.no_grad():
            model.head.bias.fill_(float(ytr.mean()))
        schedule = FineTuneSchedule(stage1_epochs=3, stage2_epochs=stage2, T=T, seed=args.seed)
        model, _ = train_two_stage(model, vocab, train, schedule, Variant.AUGMENTED, kb)
        print(f"{label:<24}{msle(np.exp(forward(model, ids, mask)), truth):.4f}")


if __name__ == "__main__":
    main()
