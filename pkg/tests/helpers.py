"""Transaction factories for tests."""
from datetime import datetime, timedelta, timezone
from itertools import count

from assetvalue.dataset import AssetClass, SaleKind, Transaction

T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)
_ids = count()


def txn(asset_id="example.com", price=100.0, day=0.0, asset_class=AssetClass.DOMAIN_NAME, **kw):
    fields = dict(
        record_id=kw.pop("record_id", f"t{next(_ids):06d}"),
        asset_id=asset_id,
        asset_class=asset_class,
        price=price,
        currency=kw.pop("currency", asset_class.target_currency),
        timestamp=T0 + timedelta(days=day),
        platform=kw.pop("platform", "Sedo"),
        sale_kind=kw.pop("sale_kind", SaleKind.BUY_IT_NOW),
    )
    fields.update(kw)
    return Transaction(**fields)


def nft(asset_id, seller, buyer, day=0.0, **kw):
    return txn(asset_id, 1.0, day, AssetClass.NFT_IDENTIFIER, seller=seller, buyer=buyer, **kw)


def random_nft_corpus(rng, max_assets=4, max_per_asset=20, n_parties=5):
    """Small NFT corpus with few parties so wash patterns actually occur."""
    out = []
    for a in range(int(rng.integers(1, max_assets + 1))):
        for _ in range(int(rng.integers(1, max_per_asset + 1))):
            seller, buyer = (f"0x{int(p)}" for p in rng.integers(0, n_parties, size=2))
            out.append(nft(f"n{a}.eth", seller, buyer, day=float(rng.integers(0, 100))))
    rng.shuffle(out)
    return out


def random_email_corpus(rng, max_assets=4, max_per_asset=20):
    out = []
    for a in range(int(rng.integers(1, max_assets + 1))):
        for _ in range(int(rng.integers(1, max_per_asset + 1))):
            # whole-day offsets put many gaps exactly on the 7-day boundary
            day = float(rng.integers(0, 60)) if rng.random() < 0.5 else float(rng.uniform(0, 60))
            out.append(txn(f"m{a}@qq.com", 10.0, day, AssetClass.EMAIL_ADDRESS))
    rng.shuffle(out)
    return out


def random_timestamps_corpus(rng, n):
    return [txn(f"x{i}.com", 1.0 + i, day=float(rng.integers(0, 30)),
                record_id=f"r{int(rng.integers(0, 10**6)):07d}-{i}") for i in range(n)]
