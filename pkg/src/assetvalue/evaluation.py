"""MSLE, grouped error breakdowns, ensembling, clamping and significance."""
from __future__ import annotations

import csv
import enum
import json
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidBounds, NonPositiveValue, ShapeMismatch
from .features import char_flags


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return a, b


def _log(x, log1p):
    if log1p:
        if np.any(x <= -1):
            raise NonPositiveValue("values must be > -1 for log1p")
        return np.log1p(x)
    if np.any(x <= 0):
        raise NonPositiveValue("values must be > 0")
    return np.log(x)


def squared_log_errors(predicted, true, log1p: bool = False) -> np.ndarray:
    p, t = _pair(predicted, true)
    return (_log(p, log1p) - _log(t, log1p)) ** 2


def msle(predicted, true, log1p: bool = False) -> float:
    """Mean of ``(ln p - ln y)**2``; ``log1p=True`` switches to ``ln(1 + .)``."""
    return float(squared_log_errors(predicted, true, log1p).mean())


class Grouping(str, enum.Enum):
    NAME_LENGTH = "name_length"
    SUFFIX = "suffix"
    CHARSET = "charset"


def length_bucket(name: str) -> str:
    return str(len(name)) if len(name) <= 10 else "11+"


def charset_bucket(name: str) -> str:
    alpha, _, numeric, _ = char_flags(name)
    if alpha:
        return "letters-only"
    if numeric:
        return "numbers-only"
    return "other"


def top_suffixes(train_parsed, k: int = 10) -> list[str]:
    counts = Counter(p.suffix for p in train_parsed)
    return [s for s, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


@dataclass
class GroupResult:
    grouping: str
    bucket: str
    share: float
    msle: float
    count: int


@dataclass
class EvaluationReport:
    overall_msle: float
    n: int
    groups: list = field(default_factory=list)
    model_id: str = ""
    split_id: str = ""

    def by_grouping(self, grouping) -> list[GroupResult]:
        return [g for g in self.groups if g.grouping == Grouping(grouping).value]

    def to_json(self) -> dict:
        return {"overall_msle": self.overall_msle, "n": self.n, "model_id": self.model_id,
                "split_id": self.split_id, "groups": [asdict(g) for g in self.groups]}

    def write(self, json_path, csv_path=None) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if csv_path is not None:
            with open(csv_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["model_id", "split_id", "grouping", "bucket", "count", "share", "msle"])
                w.writerow([self.model_id, self.split_id, "overall", "all", self.n, 1.0,
                            repr(self.overall_msle)])
                for g in self.groups:
                    w.writerow([self.model_id, self.split_id, g.grouping, g.bucket, g.count,
                                repr(g.share), repr(g.msle)])


def _bucket_order(grouping, labels, suffix_ranking):
    present = set(labels)
    if grouping is Grouping.NAME_LENGTH:
        order = [str(i) for i in range(1, 11)] + ["11+"]
    elif grouping is Grouping.SUFFIX:
        order = list(suffix_ranking) + ["other"]
    else:
        order = ["letters-only", "numbers-only", "other"]
    return [b for b in order if b in present]


def grouped_eval(preds, true_prices, parsed, groupings=tuple(Grouping), suffix_ranking=None,
                 model_id: str = "", split_id: str = "", log1p: bool = False) -> EvaluationReport:
    """Overall MSLE plus per-bucket MSLE and share for each grouping.

    ``suffix_ranking`` lists the suffixes that get their own bucket (top 10
    by training frequency); anything else lands in ``other``. When omitted,
    the ranking is taken from ``parsed`` itself.
    """
    errs = squared_log_errors(preds, true_prices, log1p)
    if len(parsed) != errs.size:
        raise ShapeMismatch(f"{len(parsed)} identifiers vs {errs.size} predictions")
    n = errs.size
    if suffix_ranking is None:
        suffix_ranking = top_suffixes(parsed)
    ranked = set(suffix_ranking)
    report = EvaluationReport(float(errs.mean()), n, model_id=model_id, split_id=split_id)
    for grouping in groupings:
        grouping = Grouping(grouping)
        if grouping is Grouping.NAME_LENGTH:
            labels = [length_bucket(p.name) for p in parsed]
        elif grouping is Grouping.SUFFIX:
            labels = [p.suffix if p.suffix in ranked else "other" for p in parsed]
        else:
            labels = [charset_bucket(p.name) for p in parsed]
        labels = np.array(labels, dtype=object)
        for bucket in _bucket_order(grouping, labels, suffix_ranking):
            mask = labels == bucket
            count = int(mask.sum())
            report.groups.append(GroupResult(grouping.value, bucket, count / n,
                                             float(errs[mask].mean()), count))
    return report


def ensemble_geometric(preds_a, preds_b) -> np.ndarray:
    a, b = _pair(preds_a, preds_b)
    return np.exp((_log(a, False) + _log(b, False)) / 2.0)


def clamp_predictions(preds, lo: float, hi: float) -> np.ndarray:
    if not (0 < lo <= hi):
        raise InvalidBounds(f"need 0 < lo <= hi, got ({lo}, {hi})")
    return np.clip(np.asarray(preds, dtype=np.float64), lo, hi)


def paired_significance(sq_log_errors_a, sq_log_errors_b, resamples: int = 10000,
                        seed: int = 0, chunk: int = 256) -> float:
    """Two-sided paired bootstrap p-value for a difference in mean error.

    Resampled mean differences are centred on the observed one (the null
    distribution) and compared in absolute value. Returns
    ``(hits + 1) / (resamples + 1)``.
    """
    a, b = _pair(sq_log_errors_a, sq_log_errors_b)
    if a.size < 2:
        raise ShapeMismatch("need at least two paired errors")
    d = a - b
    n = d.size
    observed = d.mean()
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < resamples:
        m = min(chunk, resamples - done)
        idx = rng.integers(0, n, size=(m, n))
        means = d[idx].mean(axis=1)
        hits += int(np.count_nonzero(np.abs(means - observed) >= abs(observed)))
        done += m
    return (hits + 1) / (resamples + 1)
