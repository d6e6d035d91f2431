"""Transaction records, identifier parsing, cleaning and chronological splitting.

All functions are pure: they take transactions and return new lists or
sets, never mutating their inputs.
"""
from __future__ import annotations

import bisect
import csv
import dataclasses
import enum
import json
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from .errors import (
    EmptyInput,
    EmptyName,
    EmptySuffix,
    MissingParty,
    MissingRate,
    NoDelimiter,
    SchemaViolation,
)

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
EMAIL_RESALE_WINDOW = 7 * 86400
RATE_LOOKBACK_DAYS = 7


class AssetClass(str, enum.Enum):
    DOMAIN_NAME = "DomainName"
    EMAIL_ADDRESS = "EmailAddress"
    NFT_IDENTIFIER = "NftIdentifier"

    @property
    def delimiter(self) -> str:
        return "@" if self is AssetClass.EMAIL_ADDRESS else "."

    @property
    def target_currency(self) -> str:
        return TARGET_CURRENCY[self]


TARGET_CURRENCY = {
    AssetClass.DOMAIN_NAME: "USD",
    AssetClass.EMAIL_ADDRESS: "CNY",
    AssetClass.NFT_IDENTIFIER: "ETH",
}


class SaleKind(str, enum.Enum):
    AUCTION = "Auction"
    BUY_IT_NOW = "BuyItNow"
    NEGOTIATED = "Negotiated"
    CHAIN_SALE = "ChainSale"


class ReserveStatus(str, enum.Enum):
    RESERVE_MET = "ReserveMet"
    NO_RESERVE = "NoReserve"
    RESERVE_NOT_MET = "ReserveNotMet"


class RejectReason(str, enum.Enum):
    BUNDLE = "Bundle"
    ZERO_PRICE = "ZeroPrice"
    RESERVE_NOT_MET = "ReserveNotMet"
    RESERVE_UNKNOWN = "ReserveUnknown"
    NO_BIDS = "NoBids"
    HASHED_NAME_UNKNOWN = "HashedNameUnknown"


@dataclass(frozen=True)
class Transaction:
    record_id: str
    asset_id: str
    asset_class: AssetClass
    price: float
    currency: str
    timestamp: datetime
    platform: str
    sale_kind: SaleKind
    collection: Optional[str] = None
    buyer: Optional[str] = None
    seller: Optional[str] = None
    reserve_status: Optional[ReserveStatus] = None
    bid_count: Optional[int] = None
    is_bundle: bool = False
    name_known: bool = True

    @property
    def epoch_seconds(self) -> int:
        return int((self.timestamp - EPOCH).total_seconds())

    def sort_key(self):
        return (self.timestamp, self.record_id)

    def to_json(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, datetime):
                v = format_timestamp(v)
            out[f.name] = v
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Transaction":
        try:
            ts = parse_timestamp(obj["timestamp"])
            price = float(obj["price"])
            bid_count = obj.get("bid_count")
            reserve = obj.get("reserve_status")
            txn = cls(
                record_id=str(obj["record_id"]),
                asset_id=str(obj["asset_id"]),
                asset_class=AssetClass(obj["asset_class"]),
                price=price,
                currency=str(obj["currency"]),
                timestamp=ts,
                platform=str(obj["platform"]),
                sale_kind=SaleKind(obj["sale_kind"]),
                collection=obj.get("collection"),
                buyer=obj.get("buyer"),
                seller=obj.get("seller"),
                reserve_status=None if reserve is None else ReserveStatus(reserve),
                bid_count=None if bid_count is None else int(bid_count),
                is_bundle=bool(obj.get("is_bundle", False)),
                name_known=bool(obj.get("name_known", True)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"bad transaction record {obj!r}: {exc}") from exc
        _validate(txn)
        return txn


def _validate(txn: Transaction) -> None:
    if not txn.record_id or not txn.asset_id:
        raise SchemaViolation(f"empty record_id/asset_id in {txn.record_id!r}")
    if not math.isfinite(txn.price) or txn.price < 0:
        raise SchemaViolation(f"{txn.record_id}: price must be finite and >= 0")
    if txn.bid_count is not None and txn.bid_count < 0:
        raise SchemaViolation(f"{txn.record_id}: negative bid_count")
    upper = datetime.now(timezone.utc) + timedelta(days=1)
    if not (EPOCH <= txn.timestamp <= upper):
        raise SchemaViolation(f"{txn.record_id}: timestamp out of range")


def parse_timestamp(value: str) -> datetime:
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    ts = datetime.fromisoformat(value)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def read_jsonl(path) -> list[Transaction]:
    txns = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"{path}:{line_no}: invalid JSON") from exc
            txns.append(Transaction.from_json(obj))
    return txns


def write_jsonl(path, txns: Iterable[Transaction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in txns:
            fh.write(json.dumps(t.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


# -- identifiers -----------------------------------------------------------


@dataclass(frozen=True)
class ParsedIdentifier:
    name: str
    suffix: str
    asset_class: AssetClass


def parse_identifier(asset_id: str, asset_class: AssetClass) -> ParsedIdentifier:
    """Split an identifier at the first class delimiter into lowercased (name, suffix).

    >>> parse_identifier("a.b.eth", AssetClass.NFT_IDENTIFIER)
    ParsedIdentifier(name='a', suffix='b.eth', asset_class=<AssetClass.NFT_IDENTIFIER: 'NftIdentifier'>)
    """
    asset_class = AssetClass(asset_class)
    delim = asset_class.delimiter
    name, sep, suffix = asset_id.partition(delim)
    if not sep:
        raise NoDelimiter(f"{asset_id!r} has no {delim!r}")
    if not name:
        raise EmptyName(asset_id)
    if not suffix:
        raise EmptySuffix(asset_id)
    return ParsedIdentifier(name.lower(), suffix.lower(), asset_class)


def parse_txn(txn: Transaction) -> ParsedIdentifier:
    return parse_identifier(txn.asset_id, txn.asset_class)


# -- cleaning ---------------------------------------------------------------


def rejection_reason(txn: Transaction) -> Optional[RejectReason]:
    if txn.is_bundle:
        return RejectReason.BUNDLE
    if txn.price == 0:
        return RejectReason.ZERO_PRICE
    if txn.sale_kind is SaleKind.AUCTION:
        if txn.reserve_status is None:
            return RejectReason.RESERVE_UNKNOWN
        if txn.reserve_status is ReserveStatus.RESERVE_NOT_MET:
            return RejectReason.RESERVE_NOT_MET
        if not txn.bid_count:
            return RejectReason.NO_BIDS
    if not txn.name_known:
        return RejectReason.HASHED_NAME_UNKNOWN
    return None


def filter_transactions(txns):
    """Drop bundles, zero prices, uncleared auctions and unknown hashed names.

    Returns ``(kept, rejected)`` where ``rejected`` holds
    ``(transaction, RejectReason)`` pairs. Input order is preserved in both.
    """
    kept, rejected = [], []
    for t in txns:
        reason = rejection_reason(t)
        if reason is None:
            kept.append(t)
        else:
            rejected.append((t, reason))
    return kept, rejected


def detect_suspicious_nft(txns) -> set[str]:
    """Flag wash-trade candidates among NFT sales.

    A sale of asset x from seller a to buyer b is flagged when, among the
    other sales of x, a takes part (as buyer or seller) in at least two and
    so does b. Flags are computed on the full input in one pass.
    """
    by_asset = defaultdict(list)
    for t in txns:
        if t.buyer is None or t.seller is None:
            raise MissingParty(t.record_id)
        by_asset[t.asset_id].append(t)

    flagged = set()
    for group in by_asset.values():
        if len(group) < 3:
            continue
        involvement = Counter()
        for t in group:
            for party in {t.seller, t.buyer}:
                involvement[party] += 1
        for t in group:
            # t itself contributes exactly one to each of its parties
            if involvement[t.seller] - 1 >= 2 and involvement[t.buyer] - 1 >= 2:
                flagged.add(t.record_id)
    return flagged


def detect_suspicious_email(txns) -> set[str]:
    """Flag email-address sales that are resold within seven days."""
    times = defaultdict(list)
    for t in txns:
        times[t.asset_id].append(t.epoch_seconds)
    for v in times.values():
        v.sort()

    flagged = set()
    for t in txns:
        series = times[t.asset_id]
        s = t.epoch_seconds
        i = bisect.bisect_right(series, s)
        if i < len(series) and series[i] - s <= EMAIL_RESALE_WINDOW:
            flagged.add(t.record_id)
    return flagged


def detect_suspicious(txns) -> set[str]:
    """Dispatch to the class-appropriate detector; domain names are never flagged."""
    nft = [t for t in txns if t.asset_class is AssetClass.NFT_IDENTIFIER]
    email = [t for t in txns if t.asset_class is AssetClass.EMAIL_ADDRESS]
    return detect_suspicious_nft(nft) | detect_suspicious_email(email)


# -- currency ---------------------------------------------------------------


@dataclass(frozen=True)
class ExchangeRateTable:
    """Rates keyed by (currency, UTC date) converting into a target currency."""

    entries: dict
    target_currency: str

    def __post_init__(self):
        for key, rate in self.entries.items():
            if not rate > 0:
                raise ValueError(f"non-positive rate for {key}")

    def lookup(self, currency: str, day: date) -> float:
        for back in range(RATE_LOOKBACK_DAYS + 1):
            rate = self.entries.get((currency, day - timedelta(days=back)))
            if rate is not None:
                return rate
        raise MissingRate(f"no {currency}->{self.target_currency} rate within "
                          f"{RATE_LOOKBACK_DAYS} days before {day}")

    @classmethod
    def from_csv(cls, path, target_currency: str) -> "ExchangeRateTable":
        entries = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["currency", "date", "rate_to_target"]:
                raise SchemaViolation(f"{path}: expected header currency,date,rate_to_target")
            for row in reader:
                try:
                    key = (row["currency"], date.fromisoformat(row["date"]))
                    entries[key] = float(row["rate_to_target"])
                except ValueError as exc:
                    raise SchemaViolation(f"{path}: bad row {row}") from exc
        return cls(entries, target_currency)


def normalize_currency(txn: Transaction, rates: ExchangeRateTable) -> Transaction:
    target = txn.asset_class.target_currency
    if txn.currency == target:
        return txn
    if rates.target_currency != target:
        raise MissingRate(f"rate table targets {rates.target_currency}, need {target}")
    rate = rates.lookup(txn.currency, txn.timestamp.date())
    return dataclasses.replace(txn, price=txn.price * rate, currency=target)


# -- splitting ----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    dev: list
    test: list
    # first instant of dev and of test (None when that part is empty)
    boundaries: tuple

    def manifest(self) -> dict:
        fmt = lambda ts: None if ts is None else format_timestamp(ts)  # noqa: E731
        return {
            "counts": {"train": len(self.train), "dev": len(self.dev), "test": len(self.test)},
            "dev_start": fmt(self.boundaries[0]),
            "test_start": fmt(self.boundaries[1]),
            "train_range": _range(self.train),
            "dev_range": _range(self.dev),
            "test_range": _range(self.test),
        }


def _range(txns):
    if not txns:
        return None
    return [format_timestamp(txns[0].timestamp), format_timestamp(txns[-1].timestamp)]


def round_half_up(x) -> int:
    return math.floor(Fraction(x) + Fraction(1, 2))


def split_sizes(n: int, dev_frac, test_frac) -> tuple[int, int, int]:
    # str() keeps 0.05 exact instead of its binary expansion
    n_test = round_half_up(Fraction(str(test_frac)) * n)
    n_dev = round_half_up(Fraction(str(dev_frac)) * n)
    n_dev = min(n_dev, n - n_test)
    return n - n_dev - n_test, n_dev, n_test


def chronological_split(txns, dev_frac=0.05, test_frac=0.05) -> DatasetSplit:
    if not txns:
        raise EmptyInput("cannot split an empty transaction list")
    if dev_frac < 0 or test_frac < 0 or dev_frac + test_frac >= 1:
        raise ValueError("need 0 <= dev_frac + test_frac < 1")
    ordered = sorted(txns, key=Transaction.sort_key)
    n_train, n_dev, _ = split_sizes(len(ordered), dev_frac, test_frac)
    train = ordered[:n_train]
    dev = ordered[n_train:n_train + n_dev]
    test = ordered[n_train + n_dev:]
    boundaries = (dev[0].timestamp if dev else None, test[0].timestamp if test else None)
    return DatasetSplit(train, dev, test, boundaries)


# -- statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class DatasetStats:
    transaction_count: int
    asset_count: int
    txns_per_asset_mean: float
    txns_per_asset_max: int
    price_min: float
    price_median: float
    price_max: float
    price_std: float
    name_length_min: int
    name_length_median: float
    name_length_max: int
    date_first: str
    date_last: str
    suffix_count: int
    platform_share: dict
    # (YYYY-MM, volume, lower median price or None)
    monthly: list

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["monthly"] = [{"month": m, "volume": v, "median_price": p} for m, v, p in self.monthly]
        return out


def _months(first: date, last: date):
    y, m = first.year, first.month
    while (y, m) <= (last.year, last.month):
        yield f"{y:04d}-{m:02d}"
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)


def compute_statistics(txns) -> DatasetStats:
    if not txns:
        raise EmptyInput("no transactions")
    prices = [t.price for t in txns]
    lengths = [len(parse_txn(t).name) for t in txns]
    per_asset = Counter(t.asset_id for t in txns)
    platforms = Counter(t.platform for t in txns)
    suffixes = {parse_txn(t).suffix for t in txns}

    by_month = defaultdict(list)
    for t in txns:
        by_month[t.timestamp.strftime("%Y-%m")].append(t.price)
    first = min(t.timestamp for t in txns)
    last = max(t.timestamp for t in txns)
    monthly = []
    for month in _months(first.date(), last.date()):
        bucket = by_month.get(month, [])
        monthly.append((month, len(bucket), statistics.median_low(bucket) if bucket else None))

    n = len(txns)
    return DatasetStats(
        transaction_count=n,
        asset_count=len(per_asset),
        txns_per_asset_mean=n / len(per_asset),
        txns_per_asset_max=max(per_asset.values()),
        price_min=min(prices),
        price_median=statistics.median(prices),
        price_max=max(prices),
        price_std=statistics.pstdev(prices),
        name_length_min=min(lengths),
        name_length_median=statistics.median(lengths),
        name_length_max=max(lengths),
        date_first=format_timestamp(first),
        date_last=format_timestamp(last),
        suffix_count=len(suffixes),
        platform_share={p: c / n for p, c in sorted(platforms.items())},
        monthly=monthly,
    )


def write_split(split: DatasetSplit, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for part in ("train", "dev", "test"):
        write_jsonl(out_dir / f"{part}.jsonl", getattr(split, part))
    return split.manifest()
