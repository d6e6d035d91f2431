"""Deterministic synthetic sales corpus with a known log-linear price model.

    ln(price) = intercept + length_coef * len(name)
                + tld_coef * tld_count + word_coef * is_word + N(0, noise**2)

``messy=True`` adds the records ingestion is expected to drop: zero
prices, bundles, uncleared auctions, unknown hashed names, wash-trade cycles
and quick email resales. It also adds foreign-currency sales with a
matching rate file that has weekend gaps.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .dataset import AssetClass, ReserveStatus, SaleKind, Transaction, write_jsonl

SYLLABLES = ("ka", "ro", "mi", "ne", "to", "la", "su", "vi", "do", "pe", "an", "el",
             "or", "us", "ix", "ba", "go", "zu", "fa", "li")
SUFFIXES = {
    AssetClass.DOMAIN_NAME: ("com", "net", "org", "io", "co"),
    AssetClass.EMAIL_ADDRESS: ("qq.com", "163.com", "126.com"),
    AssetClass.NFT_IDENTIFIER: ("eth",),
}
PLATFORMS = {
    AssetClass.DOMAIN_NAME: ("Sedo", "Flippa"),
    AssetClass.EMAIL_ADDRESS: ("FGLT",),
    AssetClass.NFT_IDENTIFIER: ("OpenSea", "X2Y2", "LooksRare"),
}
FOREIGN = {AssetClass.DOMAIN_NAME: ("EUR", 1.1), AssetClass.EMAIL_ADDRESS: ("USD", 6.5),
           AssetClass.NFT_IDENTIFIER: ("WETH", 1.0)}


@dataclass(frozen=True)
class PriceModel:
    intercept: float = 6.0
    length_coef: float = -0.3
    tld_coef: float = 0.008
    word_coef: float = 1.0
    noise: float = 0.1

    def log_price(self, name: str, tld: int, is_word: bool) -> float:
        return (self.intercept + self.length_coef * len(name) + self.tld_coef * tld
                + self.word_coef * float(is_word))


@dataclass
class SyntheticCorpus:
    transactions: list
    words: list
    adult_words: list
    trademarks: list
    tld_counts: dict
    rates: list = field(default_factory=list)  # (currency, date, rate)
    price_model: PriceModel = PriceModel()

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "transactions": out / "transactions.jsonl",
            "words": out / "words.txt",
            "adult_words": out / "adult_words.txt",
            "trademarks": out / "trademarks.txt",
            "tld_counts": out / "tld_counts.csv",
            "rates": out / "rates.csv",
        }
        write_jsonl(paths["transactions"], self.transactions)
        for key in ("words", "adult_words", "trademarks"):
            paths[key].write_text("".join(w + "\n" for w in getattr(self, key)), encoding="utf-8")
        with open(paths["tld_counts"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "count"])
            for name, count in sorted(self.tld_counts.items()):
                w.writerow([name, count])
        with open(paths["rates"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["currency", "date", "rate_to_target"])
            for cur, day, rate in self.rates:
                w.writerow([cur, day.isoformat(), repr(rate)])
        return {k: str(v) for k, v in paths.items()}


def _make_name(rng) -> str:
    kind = rng.random()
    if kind < 0.1:
        return "".join(str(d) for d in rng.integers(0, 10, size=int(rng.integers(2, 7))))
    parts = [SYLLABLES[i] for i in rng.integers(0, len(SYLLABLES), size=int(rng.integers(1, 6)))]
    name = "".join(parts)
    if kind > 0.9 and len(parts) > 1:
        name = parts[0] + "-" + "".join(parts[1:])
    return name


def generate_corpus(n: int = 2000, asset_class=AssetClass.DOMAIN_NAME, seed: int = 0,
                    price_model: PriceModel = PriceModel(), messy: bool = False,
                    start: datetime = datetime(2019, 1, 1, tzinfo=timezone.utc),
                    days: int = 3 * 365) -> SyntheticCorpus:
    """Generate ``n`` clean sales (plus extra dirty records when ``messy``)."""
    asset_class = AssetClass(asset_class)
    rng = np.random.default_rng(seed)
    n_assets = max(1, int(n * 0.8))
    names = []
    seen = set()
    while len(names) < n_assets:
        name = _make_name(rng)
        suffix = SUFFIXES[asset_class][int(rng.integers(len(SUFFIXES[asset_class])))]
        if (name, suffix) not in seen:
            seen.add((name, suffix))
            names.append((name, suffix))
    distinct = sorted({nm for nm, _ in names})
    words = sorted(nm for nm in distinct if rng.random() < 0.3 and not nm.isdigit())
    word_set = set(words)
    tld_counts = {nm: int(rng.integers(0, 500)) for nm in distinct}
    adult = sorted(w for w in words if rng.random() < 0.05)
    trademarks = sorted(nm for nm in distinct if rng.random() < 0.05)
    delim = asset_class.delimiter
    target = asset_class.target_currency
    platforms = PLATFORMS[asset_class]

    txns = []

    def sale(idx, ts, price, **kw):
        name, suffix = names[idx]
        fields = dict(
            record_id=f"r{len(txns):06d}",
            asset_id=f"{name}{delim}{suffix}",
            asset_class=asset_class,
            price=price,
            currency=target,
            timestamp=ts,
            platform=platforms[int(rng.integers(len(platforms)))],
            sale_kind=SaleKind.BUY_IT_NOW,
            buyer=f"0x{int(rng.integers(1 << 40)):010x}",
            seller=f"0x{int(rng.integers(1 << 40)):010x}",
        )
        fields.update(kw)
        txns.append(Transaction(**fields))

    offsets = np.sort(rng.integers(0, days * 86400, size=n))
    for k in range(n):
        idx = k if k < n_assets else int(rng.integers(n_assets))
        name, _ = names[idx]
        mu = price_model.log_price(name, tld_counts[name], name in word_set)
        price = round(math.exp(mu + price_model.noise * rng.standard_normal()), 6)
        ts = start + timedelta(seconds=int(offsets[k]))
        if rng.random() < 0.3:
            sale(idx, ts, price, sale_kind=SaleKind.AUCTION,
                 reserve_status=ReserveStatus.RESERVE_MET, bid_count=int(rng.integers(1, 20)))
        else:
            sale(idx, ts, price)

    rates = []
    if messy:
        _add_messy(rng, txns, names, sale, start, days, asset_class)
        cur, rate = FOREIGN[asset_class]
        for d in range(-8, days + 2):
            day = start.date() + timedelta(days=d)
            if day.weekday() < 5:
                rates.append((cur, day, rate))
    return SyntheticCorpus(txns, words, adult, trademarks, tld_counts, rates, price_model)


def _add_messy(rng, txns, names, sale, start, days, asset_class):
    def when():
        return start + timedelta(seconds=int(rng.integers(0, days * 86400)))

    n = len(names)
    pick = lambda: int(rng.integers(n))  # noqa: E731
    sale(pick(), when(), 0.0)
    sale(pick(), when(), 120.0, is_bundle=True)
    sale(pick(), when(), 80.0, sale_kind=SaleKind.AUCTION,
         reserve_status=ReserveStatus.RESERVE_NOT_MET, bid_count=3)
    sale(pick(), when(), 80.0, sale_kind=SaleKind.AUCTION,
         reserve_status=ReserveStatus.NO_RESERVE, bid_count=0)
    cur, _ = FOREIGN[asset_class]
    for _ in range(5):
        sale(pick(), when(), 100.0, currency=cur)
    if asset_class is AssetClass.NFT_IDENTIFIER:
        sale(pick(), when(), 0.5, name_known=False)
        # wash-trade cycle between two addresses
        idx = pick()
        t0 = when()
        for k in range(4):
            a, b = ("0xaaaa", "0xbbbb") if k % 2 == 0 else ("0xbbbb", "0xaaaa")
            sale(idx, t0 + timedelta(hours=k), 2.0, seller=a, buyer=b)
    if asset_class is AssetClass.EMAIL_ADDRESS:
        idx = pick()
        t0 = when()
        sale(idx, t0, 500.0)
        sale(idx, t0 + timedelta(days=3), 520.0)


def truth_log_prices(corpus: SyntheticCorpus, txns) -> np.ndarray:
    """Noise-free ln(price) of each transaction under the generating model."""
    word_set = set(corpus.words)
    out = []
    for t in txns:
        name = t.asset_id.split(t.asset_class.delimiter, 1)[0]
        out.append(corpus.price_model.log_price(name, corpus.tld_counts.get(name, 0), name in word_set))
    return np.array(out)

