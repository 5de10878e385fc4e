"""BM25 retrieval over chunks, built from scratch.

Scoring uses the nonnegative idf variant so adding occurrences of a query
term never lowers a document's score:

    idf(t)      = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
    score(q, d) = sum over unique query terms t of
                  idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len_d / avg_len))

Terms come from the same rule-based tokenizer as chunking, lowercased.
Chunks that match no query term are omitted; a query with no indexed terms
returns an empty ranking. Ties break by chunk id, so rankings are total
and deterministic.
"""

from __future__ import annotations

import math
from collections import Counter

from ..corpus import tokenize
from ..errors import ValidationError

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


def bm25_tokenize(text: str) -> list[str]:
    return tokenize(text.lower())


class BM25Index:
    def __init__(self, chunks, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        if k1 < 0 or not 0.0 <= b <= 1.0:
            raise ValidationError(f"bad BM25 parameters k1={k1} b={b}")
        self.k1 = k1
        self.b = b
        self.chunk_ids: list[str] = []
        self._tf: list[Counter] = []
        self._lengths: list[int] = []
        seen: set[str] = set()
        for chunk in chunks:
            chunk_id = chunk.chunk_id if hasattr(chunk, "chunk_id") else chunk["chunk_id"]
            text = chunk.text if hasattr(chunk, "text") else chunk["text"]
            if chunk_id in seen:
                raise ValidationError(f"duplicate chunk id {chunk_id} in index")
            seen.add(chunk_id)
            terms = bm25_tokenize(text)
            self.chunk_ids.append(chunk_id)
            self._tf.append(Counter(terms))
            self._lengths.append(len(terms))
        if not self.chunk_ids:
            raise ValidationError("cannot index an empty chunk list")
        self._avg_len = sum(self._lengths) / len(self._lengths)
        df: Counter = Counter()
        for tf in self._tf:
            df.update(tf.keys())
        n = len(self.chunk_ids)
        self._idf = {
            term: math.log(1.0 + (n - count + 0.5) / (count + 0.5))
            for term, count in df.items()
        }

    def score(self, query: str, position: int) -> float:
        """BM25 score of the chunk at an index position for a query."""
        tf = self._tf[position]
        length = self._lengths[position]
        norm = self.k1 * (1.0 - self.b + self.b * length / self._avg_len)
        total = 0.0
        for term in sorted(set(bm25_tokenize(query))):
            if term not in self._idf or term not in tf:
                continue
            freq = tf[term]
            total += self._idf[term] * freq * (self.k1 + 1.0) / (freq + norm)
        return total

    def search(self, query: str, k: int = 10) -> list[tuple[str, float]]:
        """Top-k (chunk_id, score) pairs, score descending then chunk id."""
        if k < 1:
            raise ValidationError("k must be at least 1")
        terms = set(bm25_tokenize(query)) & set(self._idf)
        if not terms:
            return []
        scored = []
        for position, chunk_id in enumerate(self.chunk_ids):
            value = self.score(query, position)
            if value > 0.0:
                scored.append((chunk_id, value))
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored[:k]
