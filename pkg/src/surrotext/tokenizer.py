"""Whitespace/punctuation tokenizer and corpus-built vocabulary.

Numbers are normalized to comma-grouped digit tokens: both ``200,000`` and
``200000`` tokenize to ``["200", ",", "000"]``, so a model trained on
comma-grouped text reads bare numbers identically.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .validation import ContractViolation, require

logger = logging.getLogger("surrotext.text")

CLS, EOS, PAD, UNK = "[CLS]", "[EOS]", "[PAD]", "[UNK]"
SPECIAL_TOKENS = (CLS, EOS, PAD, UNK)
CLS_ID, EOS_ID, PAD_ID, UNK_ID = 0, 1, 2, 3

_TOKEN_RE = re.compile(r"[a-z]+|[0-9]+|[^\sa-z0-9]")


def _group_digits(run: str) -> list[str]:
    """Split a digit run into 3-digit groups from the right, with commas."""
    if len(run) <= 3:
        return [run]
    groups = []
    end = len(run)
    while end > 3:
        groups.append(run[end - 3:end])
        end -= 3
    groups.append(run[:end])
    groups.reverse()
    out: list[str] = []
    for i, g in enumerate(groups):
        if i:
            out.append(",")
        out.append(g)
    return out


def tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    for match in _TOKEN_RE.finditer(text.lower()):
        tok = match.group(0)
        if tok.isdigit():
            tokens.extend(_group_digits(tok))
        else:
            tokens.append(tok)
    return tokens


@dataclass
class Vocabulary:
    """Token-to-id map with fixed special ids 0..3 and a max token budget."""

    token_to_id: dict[str, int]
    counts: dict[str, int] = field(default_factory=dict)
    max_tokens: int = 192
    min_count: int = 1

    def __post_init__(self):
        for tok, expected in zip(SPECIAL_TOKENS, range(4)):
            require(self.token_to_id.get(tok) == expected,
                    f"special token {tok} must map to id {expected}")

    def __len__(self) -> int:
        return len(self.token_to_id)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, text: str) -> list[int]:
        """Bracketed id sequence, truncated to ``max_tokens`` inclusive."""
        tokens = tokenize(text)
        require(len(tokens) > 0, "caption tokenized to nothing")
        budget = self.max_tokens - 2
        if len(tokens) > budget:
            logger.warning("caption truncated from %d to %d tokens",
                           len(tokens), self.max_tokens)
            tokens = tokens[:budget]
        return [CLS_ID] + [self.lookup(t) for t in tokens] + [EOS_ID]

    def to_json(self) -> str:
        return json.dumps({
            "max_tokens": self.max_tokens,
            "min_count": self.min_count,
            "tokens": [
                {"token": t, "id": i, "count": self.counts.get(t, 0)}
                for t, i in sorted(self.token_to_id.items(), key=lambda kv: kv[1])
            ],
        })

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        doc = json.loads(text)
        token_to_id = {e["token"]: e["id"] for e in doc["tokens"]}
        counts = {e["token"]: e["count"] for e in doc["tokens"]}
        return cls(token_to_id=token_to_id, counts=counts,
                   max_tokens=doc["max_tokens"], min_count=doc.get("min_count", 1))


def build_vocab(corpus: Iterable[str], min_count: int = 1,
                max_tokens: int = 192) -> Vocabulary:
    """Deterministic vocabulary from a corpus pass.

    Tokens below ``min_count`` fall back to UNK at encode time. Ids are
    assigned by descending count with lexicographic tie-breaks.
    """
    texts = list(corpus)
    require(len(texts) > 0, "cannot build a vocabulary from an empty corpus")
    counter: Counter[str] = Counter()
    for text in texts:
        counter.update(tokenize(text))
    kept = sorted((t for t, c in counter.items() if c >= min_count),
                  key=lambda t: (-counter[t], t))
    token_to_id = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for tok in kept:
        token_to_id[tok] = len(token_to_id)
    return Vocabulary(token_to_id=token_to_id, counts=dict(counter),
                      max_tokens=max_tokens, min_count=min_count)
