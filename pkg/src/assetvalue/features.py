"""Hand-crafted identifier features.

Seven families, always concatenated in this order::

    Length | Suffix one-hot (+OTHER) | Character (4) | TokenCount
    | Vocabulary (2) | Trademark | TldCount

Any family can be switched off, which simply removes its block.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .dataset import ParsedIdentifier, parse_txn
from .errors import EmptyInput, SchemaMismatch
from .knowledge import KnowledgeBase, tld_count

OTHER = "<OTHER>"


class Family(str, enum.Enum):
    LENGTH = "length"
    SUFFIX = "suffix"
    CHARACTER = "character"
    TOKEN_COUNT = "tokens"
    VOCABULARY = "vocabulary"
    TRADEMARK = "trademark"
    TLD_COUNT = "tld_count"


FAMILY_ORDER = list(Family)
ALL_FAMILIES = frozenset(Family)
CHAR_FLAG_NAMES = ("alpha_only", "has_hyphen", "all_numeric", "non_ascii")


@dataclass(frozen=True)
class FeatureSchema:
    suffix_vocab: tuple  # training suffixes, sorted, then OTHER
    enabled_families: frozenset = ALL_FAMILIES

    def width(self, family: Family) -> int:
        return {
            Family.LENGTH: 1,
            Family.SUFFIX: len(self.suffix_vocab),
            Family.CHARACTER: 4,
            Family.TOKEN_COUNT: 1,
            Family.VOCABULARY: 2,
            Family.TRADEMARK: 1,
            Family.TLD_COUNT: 1,
        }[family]

    @property
    def total_dim(self) -> int:
        return sum(self.width(f) for f in FAMILY_ORDER if f in self.enabled_families)

    def feature_names(self) -> list[str]:
        names = []
        for fam in FAMILY_ORDER:
            if fam not in self.enabled_families:
                continue
            if fam is Family.SUFFIX:
                names += [f"suffix={s}" for s in self.suffix_vocab]
            elif fam is Family.CHARACTER:
                names += [f"char:{n}" for n in CHAR_FLAG_NAMES]
            elif fam is Family.VOCABULARY:
                names += ["vocab:is_word", "vocab:is_adult"]
            else:
                names.append(fam.value)
        return names

    def to_json(self) -> dict:
        return {
            "suffix_vocab": list(self.suffix_vocab),
            "enabled_families": [f.value for f in FAMILY_ORDER if f in self.enabled_families],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSchema":
        return cls(tuple(obj["suffix_vocab"]), frozenset(Family(f) for f in obj["enabled_families"]))


def build_schema(train_txns, toggles=ALL_FAMILIES) -> FeatureSchema:
    if not train_txns:
        raise EmptyInput("schema needs at least one training transaction")
    suffixes = sorted({parse_txn(t).suffix for t in train_txns})
    return FeatureSchema(tuple(suffixes) + (OTHER,), frozenset(Family(f) for f in toggles))


def char_flags(name: str) -> tuple[int, int, int, int]:
    s = name.lower()
    alpha_only = all("a" <= c <= "z" for c in s)
    has_hyphen = "-" in s
    all_numeric = all("0" <= c <= "9" for c in s)
    non_ascii = any(ord(c) > 127 for c in s)
    return int(alpha_only), int(has_hyphen), int(all_numeric), int(non_ascii)


def segment(name: str, lexicon, max_len: int | None = None) -> list[str]:
    """Greedy left-to-right longest-prefix segmentation.

    Characters that do not start any lexicon entry become single-character
    tokens.
    """
    s = name.lower()
    if max_len is None:
        max_len = max((len(w) for w in lexicon), default=0)
    tokens, i = [], 0
    while i < len(s):
        step = 1
        for k in range(min(max_len, len(s) - i), 0, -1):
            if s[i:i + k] in lexicon:
                step = k
                break
        tokens.append(s[i:i + step])
        i += step
    return tokens


def token_count(name: str, kb: KnowledgeBase) -> int:
    return len(segment(name, kb.segment_lexicon, kb.max_lexicon_len))


def extract(parsed: ParsedIdentifier, kb: KnowledgeBase, schema: FeatureSchema,
            families=None) -> np.ndarray:
    if families is not None and frozenset(Family(f) for f in families) != schema.enabled_families:
        raise SchemaMismatch("requested feature families differ from the schema")
    name = parsed.name.lower()
    enabled = schema.enabled_families
    parts = []
    if Family.LENGTH in enabled:
        parts.append([len(parsed.name)])
    if Family.SUFFIX in enabled:
        onehot = [0.0] * len(schema.suffix_vocab)
        try:
            onehot[schema.suffix_vocab.index(parsed.suffix, 0, len(schema.suffix_vocab) - 1)] = 1.0
        except ValueError:
            onehot[-1] = 1.0
        parts.append(onehot)
    if Family.CHARACTER in enabled:
        parts.append(char_flags(name))
    if Family.TOKEN_COUNT in enabled:
        parts.append([token_count(name, kb)])
    if Family.VOCABULARY in enabled:
        parts.append([name in kb.words, name in kb.adult_words])
    if Family.TRADEMARK in enabled:
        parts.append([name in kb.trademarks])
    if Family.TLD_COUNT in enabled:
        parts.append([tld_count(kb, name)])
    return np.array([float(v) for p in parts for v in p], dtype=np.float64)


def featurize(txns, kb: KnowledgeBase, schema: FeatureSchema) -> np.ndarray:
    X = np.zeros((len(txns), schema.total_dim))
    for i, t in enumerate(txns):
        X[i] = extract(parse_txn(t), kb, schema)
    return X


def write_features_csv(path, txns, X: np.ndarray, schema: FeatureSchema) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", *schema.feature_names(), "log_price"])
        for t, row in zip(txns, X):
            w.writerow([t.record_id, *(_fmt(v) for v in row), repr(math.log(t.price))])


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def read_features_csv(path):
    """Returns ``(record_ids, feature_names, X, log_prices)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "record_id" or header[-1] != "log_price":
        raise SchemaMismatch(f"{path}: unexpected header")
    ids = [r[0] for r in body]
    X = np.array([[float(v) for v in r[1:-1]] for r in body], dtype=np.float64).reshape(len(body), len(header) - 2)
    y = np.array([float(r[-1]) for r in body], dtype=np.float64)
    return ids, header[1:-1], X, y
