"""Lookup resources used by the feature extractors and the augmented input.

Every resource is optional. Missing files load as empty collections and leave
a message in ``KnowledgeBase.warnings``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import MalformedLine, NegativeCount

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KnowledgeBase:
    words: frozenset = frozenset()
    adult_words: frozenset = frozenset()
    trademarks: frozenset = frozenset()
    tld_counts: dict = field(default_factory=dict)
    segment_lexicon: Optional[frozenset] = None
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.segment_lexicon is None:
            object.__setattr__(self, "segment_lexicon", self.words)

    @property
    def max_lexicon_len(self) -> int:
        return max((len(w) for w in self.segment_lexicon), default=0)


def tld_count(kb: KnowledgeBase, name: str) -> int:
    return kb.tld_counts.get(name.lower(), 0)


def _read_list(path: Path) -> frozenset:
    entries = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            token = raw.strip()
            if not token:
                continue
            if any(ch.isspace() for ch in token):
                raise MalformedLine(path, line_no, raw.rstrip("\n"))
            entries.add(token.lower())
    return frozenset(entries)


def _read_tld_counts(path: Path) -> dict:
    counts = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            if line_no == 1 and [c.strip().lower() for c in row] == ["name", "count"]:
                continue
            if len(row) != 2:
                raise MalformedLine(path, line_no, ",".join(row))
            name, raw = row[0].strip().lower(), row[1].strip()
            try:
                value = int(raw)
            except ValueError:
                raise MalformedLine(path, line_no, ",".join(row)) from None
            if value < 0:
                raise NegativeCount(path, line_no, ",".join(row))
            # duplicate names after case folding keep the larger count
            counts[name] = max(value, counts.get(name, 0))
    return counts


def load_knowledge(words=None, adult_words=None, trademarks=None, tld_counts=None,
                   segment_lexicon=None) -> KnowledgeBase:
    """Load word lists (one token per line) and a ``name,count`` TLD-count CSV."""
    warnings = []

    def load(path, reader, empty, label):
        if path is None or not Path(path).exists():
            msg = f"{label}: no file{'' if path is None else f' at {path}'}, using empty"
            # an option left unset is routine; a path that does not exist is not
            log.log(logging.INFO if path is None else logging.WARNING, msg)
            warnings.append(msg)
            return empty
        return reader(Path(path))

    kb_words = load(words, _read_list, frozenset(), "words")
    lexicon = None
    if segment_lexicon is not None:
        lexicon = load(segment_lexicon, _read_list, frozenset(), "segment_lexicon")
    return KnowledgeBase(
        words=kb_words,
        adult_words=load(adult_words, _read_list, frozenset(), "adult_words"),
        trademarks=load(trademarks, _read_list, frozenset(), "trademarks"),
        tld_counts=load(tld_counts, _read_tld_counts, {}, "tld_counts"),
        segment_lexicon=lexicon,
        warnings=tuple(warnings),
    )
