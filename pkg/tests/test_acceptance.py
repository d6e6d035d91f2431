"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the lines are repeated
in the terminal summary) or ``python3 tests/test_acceptance.py``.
"""
import filecmp
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from assetvalue import dataset as ds
from assetvalue.cli import main as cli
from assetvalue.dataset import AssetClass, RejectReason, ReserveStatus, SaleKind
from assetvalue.errors import NoDelimiter
from assetvalue.evaluation import Grouping, ensemble_geometric, grouped_eval, msle
from assetvalue.features import build_schema, featurize
from assetvalue.knowledge import KnowledgeBase
from assetvalue.neural import (
    FineTuneSchedule,
    ModelConfig,
    Variant,
    build_vocab,
    encode_transactions,
    evaluate_loss,
    grad_check,
    new_model,
    train_two_stage,
)
from assetvalue.synthetic import generate_corpus
from assetvalue.tabular import (
    AdaConfig,
    GbtConfig,
    RfConfig,
    RfModel,
    dumps_model,
    fit_adaboost_r2,
    fit_gbt,
    fit_mean_baseline,
    fit_random_forest,
    predict,
    predict_log,
)

if __package__:
    from .helpers import nft, random_email_corpus, random_nft_corpus, random_timestamps_corpus, txn
    from .oracles import suspicious_email_bruteforce, suspicious_nft_bruteforce
else:  # run as a script
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
    from tests.helpers import nft, random_email_corpus, random_nft_corpus, random_timestamps_corpus, txn
    from tests.oracles import suspicious_email_bruteforce, suspicious_nft_bruteforce

ROOT = Path(__file__).resolve().parent.parent
RESULTS = []


def verdict(n, ok, detail, elapsed=None, limit=None):
    if limit is not None:
        ok = ok and elapsed < limit
        detail += f"; {elapsed:.2f}s (limit {limit}s)"
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def kb_of(corpus):
    return KnowledgeBase(frozenset(corpus.words), frozenset(corpus.adult_words),
                         frozenset(corpus.trademarks), dict(corpus.tld_counts))


def test_c01_parsing_and_filtering_fixtures():
    t0 = time.perf_counter()
    checks = []
    p = ds.parse_identifier("example.eth", AssetClass.NFT_IDENTIFIER)
    checks.append((p.name, p.suffix) == ("example", "eth"))
    p = ds.parse_identifier("email@example.com", AssetClass.EMAIL_ADDRESS)
    checks.append((p.name, p.suffix) == ("email", "example.com"))
    p = ds.parse_identifier("a.b.eth", AssetClass.NFT_IDENTIFIER)
    checks.append((p.name, p.suffix) == ("a", "b.eth"))
    try:
        ds.parse_identifier("example", AssetClass.DOMAIN_NAME)
        checks.append(False)
    except NoDelimiter:
        checks.append(True)
    auction = dict(sale_kind=SaleKind.AUCTION, bid_count=3)
    checks.append(ds.rejection_reason(txn(reserve_status=ReserveStatus.RESERVE_MET, **auction)) is None)
    checks.append(ds.rejection_reason(txn(price=0.0)) is RejectReason.ZERO_PRICE)
    checks.append(ds.rejection_reason(txn(is_bundle=True)) is RejectReason.BUNDLE)
    checks.append(ds.rejection_reason(txn(reserve_status=ReserveStatus.RESERVE_NOT_MET, **auction))
                  is RejectReason.RESERVE_NOT_MET)
    checks.append(ds.rejection_reason(nft("h.eth", "0xa", "0xb", name_known=False))
                  is RejectReason.HASHED_NAME_UNKNOWN)
    verdict(1, all(checks), f"{sum(checks)}/{len(checks)} fixtures exact",
            time.perf_counter() - t0, 1)


def test_c02_suspicious_detection_oracle():
    t0 = time.perf_counter()
    agree = 0
    flagged = 0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        nfts = random_nft_corpus(rng)
        emails = random_email_corpus(rng)
        got_n, got_e = ds.detect_suspicious_nft(nfts), ds.detect_suspicious_email(emails)
        ok = got_n == suspicious_nft_bruteforce(nfts) and got_e == suspicious_email_bruteforce(emails)
        agree += ok
        flagged += len(got_n) + len(got_e)
    verdict(2, agree == 1000, f"{agree}/1000 instances agree with brute force "
                              f"({flagged} flags total)", time.perf_counter() - t0, 30)


def test_c03_split_invariant():
    # A literal round(0.9N) for train cannot coexist with round(0.05N) for dev and
    # test and a partition of N (N=10 gives 9+1+1). Dev and test use round-half-up;
    # train takes the remainder, which is within one of round(0.9N).
    t0 = time.perf_counter()
    bad = []
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 120))
        txns = random_timestamps_corpus(rng, n)
        split = ds.chronological_split(txns, 0.05, 0.05)
        parts = [split.train, split.dev, split.test]
        keys = [t.sort_key() for part in parts for t in part]
        ordered = all(a[0] <= b[0] for a, b in zip(keys, keys[1:]))
        for left, right in zip(parts, parts[1:]):
            if left and right:
                ordered &= left[-1].timestamp <= right[0].timestamp
        nd = ds.round_half_up(0.05 * n)
        sizes_ok = (len(split.dev) == len(split.test) == nd
                    and len(split.train) == n - 2 * nd
                    and abs(len(split.train) - ds.round_half_up(0.9 * n)) <= 1
                    and sorted(t.record_id for t in txns) == sorted(t.record_id for p in parts for t in p))
        if not (ordered and sizes_ok):
            bad.append(seed)
    verdict(3, not bad, f"{1000 - len(bad)}/1000 corpora ordered with expected sizes",
            time.perf_counter() - t0, 10)


def test_c04_baseline_optimality():
    worst_gap = 0.0
    increases = True
    for seed in range(100):
        rng = np.random.default_rng(seed)
        prices = np.exp(rng.normal(rng.uniform(-5, 10), rng.uniform(0.01, 3), int(rng.integers(1, 200))))
        logs = np.log(prices)
        m = fit_mean_baseline(prices)
        mean = m.log_price_mean
        base = msle(predict(m, np.zeros((len(prices), 0))), prices)
        worst_gap = max(worst_gap, abs(base - float(np.var(logs))))
        shifts = [mean + 0.01, mean - 0.01]
        if mean != 0:
            shifts += [mean * 1.01, mean * 0.99]
        for s in shifts:
            increases &= float(np.mean((logs - s) ** 2)) > float(np.mean((logs - mean) ** 2))
    verdict(4, increases and worst_gap <= 1e-9,
            f"perturbations always increase MSLE; |MSLE - var(ln p)| max {worst_gap:.1e}")


def test_c05_gbt_sanity():
    corpus = generate_corpus(5000, seed=1)
    split = ds.chronological_split(corpus.transactions)
    kb = kb_of(corpus)
    schema = build_schema(split.train)
    Xtr, Xte = featurize(split.train, kb, schema), featurize(split.test, kb, schema)
    ytr = np.log([t.price for t in split.train])
    yte_prices = np.array([t.price for t in split.test])
    t0 = time.perf_counter()
    model = fit_gbt(Xtr, ytr, config=GbtConfig(n_trees=100))
    elapsed = time.perf_counter() - t0
    gbt = msle(predict(model, Xte), yte_prices)
    mean = msle(predict(fit_mean_baseline(np.exp(ytr)), Xte), yte_prices)
    loss = model.train_loss
    monotone = all(b <= a for a, b in zip(loss, loss[1:]))
    gain = 1 - gbt / mean
    verdict(5, gbt < 0.05 and gain >= 0.8 and monotone and len(model.trees) == 100,
            f"test MSLE {gbt:.4f} vs mean {mean:.4f} ({gain:.1%} better); "
            f"loss non-increasing={monotone}", elapsed, 60)


def test_c06_ada_rf_determinism():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 5, size=(400, 4))
    y = X[:, 0] - 0.5 * X[:, 1] + 0.1 * rng.standard_normal(400)
    rf = [fit_random_forest(X, y, config=RfConfig(n_trees=16, max_depth=8, seed=3, n_jobs=j))
          for j in (1, 2, 4)]
    rf_det = len({dumps_model(m) for m in rf}) == 1
    ada = []
    saved = torch.get_num_threads()
    try:
        for threads in (1, 2):
            torch.set_num_threads(threads)
            ada.append(dumps_model(fit_adaboost_r2(X, y, config=AdaConfig(seed=3))))
    finally:
        torch.set_num_threads(saved)
    ada_det = len(set(ada)) == 1
    base = predict_log(rf[0], X)
    order_ok = all(
        np.array_equal(predict_log(RfModel([rf[0].trees[i] for i in rng.permutation(16)], 4), X), base)
        for _ in range(10))
    const_ok = True
    for c in (0.0, 3.25, -7.1):
        yc = np.full(400, c)
        const_ok &= bool(np.all(predict_log(fit_random_forest(X, yc, config=RfConfig(n_trees=5)), X) == c))
        const_ok &= bool(np.all(predict_log(fit_adaboost_r2(X, yc), X) == c))
    verdict(6, rf_det and ada_det and order_ok and const_ok,
            f"rf threads-invariant={rf_det}, ada reproducible={ada_det}, "
            f"order-invariant={order_ok}, constant exact={const_ok}")


def test_c07_gradient_check():
    t0 = time.perf_counter()
    corpus = generate_corpus(64, seed=2)
    vocab = build_vocab(corpus.transactions)
    model = new_model(ModelConfig(vocab.size), seed=0, dtype=torch.float64)
    txns = corpus.transactions[:8]
    ids, mask = encode_transactions(txns, vocab, Variant.AUGMENTED, kb_of(corpus), 64)
    targets = torch.tensor([math.log(t.price) for t in txns], dtype=torch.float64)
    err = grad_check(model, ids, mask, targets, n_samples=200)

    def corrupt(grads):
        grads["head.weight"] = grads["head.weight"] * 2.0 + 1e-2

    bad = grad_check(model, ids, mask, targets, n_samples=200, corrupt=corrupt)
    verdict(7, err < 1e-4 and bad > 1e-2,
            f"float64 max rel. error {err:.2e}; corrupted control {bad:.2e}",
            time.perf_counter() - t0, 60)


def _nn_training_setup():
    corpus = generate_corpus(2000, seed=4)
    split = ds.chronological_split(corpus.transactions)
    train = sorted(split.train, key=ds.Transaction.sort_key)
    return corpus, train, build_vocab(train), kb_of(corpus)


def _two_stage(train, vocab, kb, stage2_epochs, T):
    model = new_model(ModelConfig(vocab.size), seed=0)
    with torch.no_grad():
        model.head.bias.fill_(float(np.mean([math.log(t.price) for t in train])))
    schedule = FineTuneSchedule(stage1_epochs=1, stage2_epochs=stage2_epochs, T=T, seed=0)
    return train_two_stage(model, vocab, train, schedule, Variant.AUGMENTED, kb)


def test_c08_two_stage_schedule(tmp_path):
    corpus, train, vocab, kb = _nn_training_setup()
    T = round(0.1 * len(train))
    newest = train[-T:]
    ids, mask = encode_transactions(newest, vocab, Variant.AUGMENTED, kb, 64)
    targets = torch.tensor([math.log(t.price) for t in newest])
    # stage 1 consumes the same random stream in both runs, so the first model is
    # exactly the start-of-stage-2 state of the second
    start_model, log_a = _two_stage(train, vocab, kb, 0, T)
    end_model, log_b = _two_stage(train, vocab, kb, 3, T)
    same_stage1 = log_a == [r for r in log_b if r[0] == 1]
    start, end = evaluate_loss(start_model, ids, mask, targets), evaluate_loss(end_model, ids, mask, targets)
    lowered = end < start

    raw = tmp_path / "raw"
    corpus.write(raw)
    ds.write_jsonl(tmp_path / "all.jsonl", corpus.transactions)
    kb_flags = ["--words", raw / "words.txt", "--tld-counts", raw / "tld_counts.csv"]
    codes = [
        cli(["split", "--transactions", str(tmp_path / "all.jsonl"), "--out", str(tmp_path / "split")]),
        cli(["train", "--model", "transformer", "--variant", "vanilla", "--stage1-epochs", "3",
             "--stage2-epochs", "0", "--split-dir", str(tmp_path / "split"), "--out", str(tmp_path / "m"),
             *map(str, kb_flags)]),
        cli(["predict", "--model", str(tmp_path / "m" / "model.json"), "--split-dir",
             str(tmp_path / "split"), "--out", str(tmp_path / "p"), *map(str, kb_flags)]),
        cli(["evaluate", "--split-dir", str(tmp_path / "split"), "--pred-dir", str(tmp_path / "p"),
             "--out", str(tmp_path / "e")]),
    ]
    summary = json.loads((tmp_path / "e" / "summary.json").read_text())
    vanilla_ok = codes == [0, 0, 0, 0] and all(math.isfinite(summary[p]["msle"]) for p in ("dev", "test"))
    verdict(8, lowered and same_stage1 and vanilla_ok,
            f"newest-T (T={T}) loss {start:.4f} -> {end:.4f}; vanilla schedule exit codes {codes}, "
            f"test MSLE {summary['test']['msle']:.3f}")


def test_c09_ensemble_convexity():
    rng = np.random.default_rng(9)
    worst = -np.inf
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        y = np.exp(rng.normal(3, 3, n))
        a = y * np.exp(rng.normal(0, rng.uniform(0.01, 4), n))
        b = y * np.exp(rng.normal(rng.uniform(-2, 2), rng.uniform(0.01, 4), n))
        worst = max(worst, msle(ensemble_geometric(a, b), y) - (msle(a, y) + msle(b, y)) / 2)
    verdict(9, worst <= 1e-12, f"max msle(ens) - mean(msle(a), msle(b)) = {worst:.3e} over 1000 pairs")


def test_c10_msle_fixtures():
    y = np.exp(np.random.default_rng(10).normal(4, 3, 100))
    zero = msle(y, y)
    one = msle(math.e * y, y)
    verdict(10, zero == 0.0 and abs(one - 1.0) <= 1e-12, f"identity {zero}; e-scaled {one!r}")


def test_c11_grouped_decomposition():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 300))
        names = ["".join(rng.choice(list("abc12-"), size=int(rng.integers(1, 16)))) for _ in range(n)]
        parsed = [ds.ParsedIdentifier(nm, f"s{int(rng.integers(15))}", AssetClass.DOMAIN_NAME) for nm in names]
        y = np.exp(rng.normal(5, 2, n))
        rep = grouped_eval(y * np.exp(rng.normal(0, 1, n)), y, parsed)
        for g in Grouping:
            groups = rep.by_grouping(g)
            worst = max(worst, abs(sum(b.share * b.msle for b in groups) - rep.overall_msle),
                        abs(sum(b.share for b in groups) - 1.0))
    verdict(11, worst <= 1e-9, f"max reconstruction error {worst:.2e} across all groupings")


def _compare_trees(a: Path, b: Path):
    """Relative paths whose bytes differ, ignoring manifests (they carry timestamps)."""
    diffs = []
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    for rel in files:
        if rel.name == "manifest.json":
            ja, jb = (json.loads((d / rel).read_text()) for d in (a, b))
            ja.pop("created_at"), jb.pop("created_at")
            if ja != jb:
                diffs.append(str(rel))
        elif not (b / rel).exists() or not filecmp.cmp(a / rel, b / rel, shallow=False):
            diffs.append(str(rel))
    return files, diffs


@pytest.mark.slow
def test_c12_end_to_end_determinism(tmp_path):
    t0 = time.perf_counter()
    env = {**os.environ, "PYTHONPATH": str(ROOT / "src")}
    for run in ("a", "b"):
        subprocess.run([sys.executable, str(ROOT / "scripts" / "run_pipeline.py"), "--workdir",
                        str(tmp_path / run), "--n", "2000", "--seed", "0"],
                       check=True, env=env, capture_output=True)
    files, diffs = _compare_trees(tmp_path / "a", tmp_path / "b")
    models = [f for f in files if f.name == "model.json"]
    reports = [f for f in files if f.name.startswith(("report_", "summary", "analysis_"))]
    verdict(12, not diffs and len(models) == 5 and reports,
            f"{len(files)} files compared ({len(models)} models, {len(reports)} reports); "
            f"differing: {diffs or 'none'}", time.perf_counter() - t0, 300)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
