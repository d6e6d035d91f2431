import csv
import json
from pathlib import Path

import pytest

from assetvalue.cli import main
from assetvalue.dataset import AssetClass, read_jsonl, write_jsonl
from assetvalue.features import OTHER

from .helpers import nft, txn

TINY_NN = ["--d-model", "16", "--layers", "1", "--heads", "2", "--d-ff", "32", "--max-len", "32",
           "--batch-size", "32"]


def run(*args):
    return main([str(a) for a in args])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    assert run("synth", "--n", 400, "--messy", "--seed", 3, "--out", root / "raw") == 0
    raw = root / "raw"
    assert run("ingest", "--transactions", raw / "transactions.jsonl", "--rates", raw / "rates.csv",
               "--out", root / "clean") == 0
    assert run("split", "--transactions", root / "clean" / "clean.jsonl", "--out", root / "split") == 0
    kb = ["--words", raw / "words.txt", "--adult-words", raw / "adult_words.txt",
          "--trademarks", raw / "trademarks.txt", "--tld-counts", raw / "tld_counts.csv"]
    assert run("featurize", "--split-dir", root / "split", *kb, "--out", root / "feats") == 0
    for model, extra in [("mean", []), ("gbt", ["--n-trees", 10]), ("rf", ["--n-trees", 3]),
                         ("ada", ["--n-stages", 5])]:
        assert run("train", "--model", model, "--split-dir", root / "split",
                   "--features-dir", root / "feats", *extra, "--out", root / model) == 0
        assert run("predict", "--model", root / model / "model.json", "--split-dir", root / "split",
                   *kb, "--out", root / model / "pred") == 0
    assert run("train", "--model", "transformer", "--split-dir", root / "split", *kb, *TINY_NN,
               "--T", 30, "--stage2-epochs", 1, "--out", root / "nn") == 0
    assert run("predict", "--model", root / "nn" / "model.json", "--split-dir", root / "split",
               *kb, "--out", root / "nn" / "pred") == 0
    return root, kb


def test_ingest_report(pipeline):
    root, _ = pipeline
    rep = json.loads((root / "clean" / "ingest_report.json").read_text())
    assert rep["input"] == 400 + 9
    assert rep["rejected"]["ZeroPrice"] == 1 and rep["rejected"]["Bundle"] == 1
    assert rep["rejected"]["ReserveNotMet"] == 1 and rep["rejected"]["NoBids"] == 1
    assert rep["kept"] == 405
    clean = read_jsonl(root / "clean" / "clean.jsonl")
    assert all(t.currency == "USD" for t in clean)
    manifest = json.loads((root / "clean" / "manifest.json").read_text())
    assert manifest["command"] == "ingest" and manifest["seed"] == 0


def test_split_outputs(pipeline):
    root, _ = pipeline
    sizes = {p: len(read_jsonl(root / "split" / f"{p}.jsonl")) for p in ("train", "dev", "test")}
    assert sizes == {"train": 365, "dev": 20, "test": 20}
    assert json.loads((root / "split" / "split_manifest.json").read_text())["dev_frac"] == 0.05


def test_feature_files(pipeline):
    root, _ = pipeline
    schema = json.loads((root / "feats" / "schema.json").read_text())
    assert schema["suffix_vocab"][-1] == OTHER
    rows = read_csv(root / "feats" / "dev.csv")
    assert len(rows) == 20 and "log_price" in rows[0]


def test_model_files_and_logs(pipeline):
    root, _ = pipeline
    for model in ("mean", "gbt", "rf", "ada"):
        obj = json.loads((root / model / "model.json").read_text())
        assert obj["model_type"] == model and obj["format_version"] == 1 and "schema" in obj
    log = read_csv(root / "nn" / "train_log.csv")
    assert {r["stage"] for r in log} == {"1", "2"}
    assert json.loads((root / "nn" / "model.json").read_text())["model_type"] == "transformer"


def test_predictions_positive_and_aligned(pipeline):
    root, _ = pipeline
    dev_ids = [t.record_id for t in read_jsonl(root / "split" / "dev.jsonl")]
    for model in ("mean", "gbt", "rf", "ada", "nn"):
        rows = read_csv(root / model / "pred" / "predictions_dev.csv")
        assert [r["record_id"] for r in rows] == dev_ids
        assert all(float(r["predicted_price"]) > 0 for r in rows)


def test_evaluate_and_compare(pipeline, tmp_path):
    root, _ = pipeline
    assert run("evaluate", "--split-dir", root / "split", "--pred-dir", root / "gbt" / "pred",
               "--compare", root / "mean" / "pred", "--resamples", 500, "--out", tmp_path / "e") == 0
    summary = json.loads((tmp_path / "e" / "summary.json").read_text())
    assert summary["dev"]["msle"] < summary["dev"]["compare_msle"]
    assert 0 < summary["dev"]["p_value"] <= 1
    rep = json.loads((tmp_path / "e" / "report_test.json").read_text())
    assert rep["split_id"] == "test" and rep["n"] == 20

    assert run("evaluate", "--split-dir", root / "split", "--pred-dir", root / "gbt" / "pred",
               "--compare", root / "gbt" / "pred", "--resamples", 200, "--out", tmp_path / "same") == 0
    same = json.loads((tmp_path / "same" / "summary.json").read_text())
    assert same["dev"]["p_value"] == 1.0


def test_evaluate_perfect_predictions(pipeline, tmp_path):
    root, _ = pipeline
    pred = tmp_path / "perfect"
    pred.mkdir()
    for part in ("dev", "test"):
        txns = read_jsonl(root / "split" / f"{part}.jsonl")
        with open(pred / f"predictions_{part}.csv", "w") as fh:
            fh.write("record_id,predicted_price\n")
            fh.writelines(f"{t.record_id},{t.price!r}\n" for t in txns)
    assert run("evaluate", "--split-dir", root / "split", "--pred-dir", pred, "--out", tmp_path / "e") == 0
    summary = json.loads((tmp_path / "e" / "summary.json").read_text())
    assert summary["dev"]["msle"] == 0.0 and summary["test"]["msle"] == 0.0


def test_ensemble_and_clamp(pipeline, tmp_path):
    root, _ = pipeline
    args = ["--split-dir", root / "split", "--resamples", 100]
    assert run("evaluate", *args, "--ensemble", root / "gbt" / "pred", root / "nn" / "pred",
               "--out", tmp_path / "ens_eval") == 0
    assert run("ensemble", "--a", root / "gbt" / "pred", "--b", root / "nn" / "pred",
               "--out", tmp_path / "ens") == 0
    assert run("evaluate", *args, "--pred-dir", tmp_path / "ens", "--out", tmp_path / "ens_eval2") == 0
    a = json.loads((tmp_path / "ens_eval" / "summary.json").read_text())
    b = json.loads((tmp_path / "ens_eval2" / "summary.json").read_text())
    assert a == b
    assert run("evaluate", *args, "--pred-dir", root / "mean" / "pred", "--clamp", 100, 150,
               "--out", tmp_path / "clamped") == 0


def test_analyze(pipeline, tmp_path):
    root, _ = pipeline
    assert run("analyze", "--split-dir", root / "split", "--pred-dir", root / "gbt" / "pred",
               "--pred-dir", root / "mean" / "pred", "--label", "gbt", "--label", "mean",
               "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "analysis_dev.csv")
    assert {r["model"] for r in rows} == {"gbt", "mean"}
    assert {r["grouping"] for r in rows} == {"overall", "name_length", "suffix", "charset"}


def test_stats(pipeline, tmp_path):
    root, _ = pipeline
    assert run("stats", "--transactions", root / "clean" / "clean.jsonl", "--out", tmp_path) == 0
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert stats["transaction_count"] == 405
    months = read_csv(tmp_path / "monthly.csv")
    assert sum(int(r["volume"]) for r in months) == 405


def test_drop_feature_suffix(pipeline, tmp_path):
    root, _ = pipeline
    assert run("train", "--model", "gbt", "--split-dir", root / "split", "--features-dir",
               root / "feats", "--n-trees", 3, "--drop-feature", "suffix", "--out", tmp_path) == 0
    schema = json.loads((tmp_path / "model.json").read_text())["schema"]
    assert "suffix" not in schema["enabled_families"]
    kb = pipeline[1]
    assert run("predict", "--model", tmp_path / "model.json", "--split-dir", root / "split", *kb,
               "--out", tmp_path / "pred") == 0


def test_recency_weight_changes_model(pipeline, tmp_path):
    root, _ = pipeline
    base = ["train", "--model", "mean", "--split-dir", root / "split", "--features-dir", root / "feats"]
    assert run(*base, "--out", tmp_path / "a") == 0
    assert run(*base, "--recency-weight", 50, 2, "--out", tmp_path / "b") == 0
    a = json.loads((tmp_path / "a" / "model.json").read_text())["params"]["log_price_mean"]
    b = json.loads((tmp_path / "b" / "model.json").read_text())["params"]["log_price_mean"]
    assert a != b


def test_predict_custom_transactions(pipeline, tmp_path):
    root, kb = pipeline
    write_jsonl(tmp_path / "new.jsonl", [txn("brandnew.com"), txn("zz.io")])
    assert run("predict", "--model", root / "gbt" / "model.json", "--transactions",
               tmp_path / "new.jsonl", *kb, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "predictions_custom.csv")
    assert len(rows) == 2 and all(float(r["predicted_price"]) > 0 for r in rows)


def test_config_file(pipeline, tmp_path):
    root, _ = pipeline
    cfg = {"seed": 5, "split_dir": str(root / "split"), "train": {"model": "gbt", "n_trees": 2,
                                                                  "features_dir": str(root / "feats")}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert run("train", "--config", tmp_path / "cfg.json", "--out", tmp_path / "m") == 0
    obj = json.loads((tmp_path / "m" / "model.json").read_text())
    assert obj["seed"] == 5 and len(obj["params"]["trees"]) == 2
    # explicit flags win over the file
    assert run("train", "--config", tmp_path / "cfg.json", "--n-trees", 4, "--out", tmp_path / "m2") == 0
    assert len(json.loads((tmp_path / "m2" / "model.json").read_text())["params"]["trees"]) == 4
    (tmp_path / "bad.json").write_text(json.dumps({"train": {"bogus": 1}}))
    with pytest.raises(SystemExit):
        run("train", "--config", tmp_path / "bad.json", "--out", tmp_path / "x")


# -- exit codes -------------------------------------------------------------------------------


def test_exit_schema_violation(tmp_path):
    (tmp_path / "bad.jsonl").write_text('{"record_id": "x"}\n')
    assert run("ingest", "--transactions", tmp_path / "bad.jsonl", "--out", tmp_path / "o") == 2


def test_exit_missing_rates(tmp_path):
    write_jsonl(tmp_path / "t.jsonl", [txn("a.com", currency="EUR")])
    assert run("ingest", "--transactions", tmp_path / "t.jsonl", "--out", tmp_path / "o") == 3
    (tmp_path / "rates.csv").write_text("currency,date,rate_to_target\nEUR,2019-01-01,1.1\n")
    assert run("ingest", "--transactions", tmp_path / "t.jsonl", "--rates", tmp_path / "rates.csv",
               "--out", tmp_path / "o") == 3


def test_exit_empty_train(tmp_path):
    split = tmp_path / "split"
    split.mkdir()
    for part in ("train", "dev", "test"):
        (split / f"{part}.jsonl").write_text("")
    assert run("featurize", "--split-dir", split, "--out", tmp_path / "f") == 4
    assert run("train", "--model", "transformer", "--split-dir", split, "--out", tmp_path / "m") == 4
    (tmp_path / "empty.jsonl").write_text("")
    assert run("split", "--transactions", tmp_path / "empty.jsonl", "--out", tmp_path / "s") == 4


def test_exit_misaligned(pipeline, tmp_path):
    root, _ = pipeline
    rows = read_csv(root / "gbt" / "pred" / "predictions_dev.csv")
    for part in ("dev", "test"):
        with open(tmp_path / f"predictions_{part}.csv", "w") as fh:
            fh.write("record_id,predicted_price\n")
            fh.writelines(f"{r['record_id']},{r['predicted_price']}\n" for r in reversed(rows))
    assert run("evaluate", "--split-dir", root / "split", "--pred-dir", tmp_path,
               "--out", tmp_path / "e") == 5


def test_ingest_nft_wash_cycle(tmp_path):
    txns = [nft("w.eth", "0xa", "0xb", 0), nft("w.eth", "0xb", "0xa", 1),
            nft("w.eth", "0xa", "0xb", 2), nft("w.eth", "0xb", "0xa", 3),
            nft("ok.eth", "0xc", "0xd", 4)]
    write_jsonl(tmp_path / "t.jsonl", txns)
    assert run("ingest", "--transactions", tmp_path / "t.jsonl", "--out", tmp_path / "o") == 0
    rep = json.loads((tmp_path / "o" / "ingest_report.json").read_text())
    assert rep["suspicious"] == 4 and rep["kept"] == 1 and rep["asset_class"] == "NftIdentifier"


def test_ingest_clean_corpus_keeps_everything(tmp_path):
    write_jsonl(tmp_path / "t.jsonl", [txn(f"n{i}.com", day=i) for i in range(5)])
    assert run("ingest", "--transactions", tmp_path / "t.jsonl", "--out", tmp_path / "o") == 0
    rep = json.loads((tmp_path / "o" / "ingest_report.json").read_text())
    assert rep["kept"] == rep["input"] == 5 and sum(rep["rejected"].values()) == 0


def test_split_multiple_classes(tmp_path):
    txns = [txn(f"n{i}.com", day=i) for i in range(20)]
    txns += [txn(f"m{i}@qq.com", day=i, asset_class=AssetClass.EMAIL_ADDRESS) for i in range(20)]
    write_jsonl(tmp_path / "t.jsonl", txns)
    assert run("split", "--transactions", tmp_path / "t.jsonl", "--out", tmp_path / "s") == 0
    assert (tmp_path / "s" / "DomainName" / "train.jsonl").exists()
    assert (tmp_path / "s" / "EmailAddress" / "test.jsonl").exists()
    assert Path(tmp_path / "s" / "split_manifest.json").exists()
