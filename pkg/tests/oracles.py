"""Brute-force re-implementations used as independent oracles."""
from datetime import timedelta


def suspicious_nft_bruteforce(txns):
    flagged = set()
    for t in txns:
        others = [u for u in txns if u.asset_id == t.asset_id and u.record_id != t.record_id]
        a_hits = sum(1 for u in others if t.seller in (u.buyer, u.seller))
        b_hits = sum(1 for u in others if t.buyer in (u.buyer, u.seller))
        if a_hits >= 2 and b_hits >= 2:
            flagged.add(t.record_id)
    return flagged


def suspicious_email_bruteforce(txns):
    week = timedelta(days=7)
    flagged = set()
    for t in txns:
        for u in txns:
            if u.asset_id == t.asset_id and timedelta(0) < u.timestamp - t.timestamp <= week:
                flagged.add(t.record_id)
                break
    return flagged


def best_split_bruteforce(X, y, w):
    """Largest weighted SSE reduction over every (feature, midpoint) split, via plain loops."""
    n, d = len(X), len(X[0])

    def sse(rows):
        tw = sum(w[i] for i in rows)
        m = sum(w[i] * y[i] for i in rows) / tw
        return sum(w[i] * (y[i] - m) ** 2 for i in rows)

    total = sse(range(n))
    best = 0.0
    for j in range(d):
        values = sorted({X[i][j] for i in range(n)})
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2
            left = [i for i in range(n) if X[i][j] <= thr]
            right = [i for i in range(n) if X[i][j] > thr]
            best = max(best, total - sse(left) - sse(right))
    return best, total
