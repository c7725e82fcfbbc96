"""Lexical statistics, BM25 scoring and hashed bag-of-terms embeddings.

The hashed embedding maps every term to a signed coordinate of a fixed
256-dimensional space; a text embeds as the L2-normalized sum of its token
vectors. It stands in for a pretrained sentence encoder: deterministic,
dependency-free, and distinct from lexical (BM25) retrieval.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .data import DialogueInstance, tokenize

EMBED_DIM = 256

BM25_K1 = 1.2
BM25_B = 0.75


@dataclass(frozen=True)
class CorpusStats:
    """Document frequencies and length statistics over a response collection."""

    doc_freq: dict[str, int]
    n_docs: int
    avg_doc_len: float

    def idf(self, term: str) -> float:
        # Lucene variant: non-negative for every df.
        df = self.doc_freq.get(term, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def corpus_stats(corpus: list[DialogueInstance]) -> CorpusStats:
    """Stats over all candidate responses of the corpus (dedup by candidate id)."""
    df: Counter[str] = Counter()
    n = 0
    total_len = 0
    seen: set[str] = set()
    for inst in corpus:
        for cand in inst.candidates:
            if cand.id in seen:
                continue
            seen.add(cand.id)
            toks = cand.tokens()
            n += 1
            total_len += len(toks)
            df.update(set(toks))
    return CorpusStats(doc_freq=dict(df), n_docs=max(n, 1), avg_doc_len=total_len / max(n, 1))


def bm25_score(query_terms, doc_terms, stats: CorpusStats, k1: float = BM25_K1, b: float = BM25_B) -> float:
    """Okapi BM25 of a document against a bag-of-terms query."""
    if not doc_terms:
        return 0.0
    tf = Counter(doc_terms)
    dl = len(doc_terms)
    avgdl = stats.avg_doc_len if stats.avg_doc_len > 0 else 1.0
    score = 0.0
    # sorted so the accumulation order (and hence the exact float result)
    # never depends on the process hash seed
    for term in sorted(set(query_terms)):
        f = tf.get(term, 0)
        if f == 0:
            continue
        score += stats.idf(term) * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * dl / avgdl))
    return score


def _term_hash(term: str) -> tuple[int, float]:
    digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "big")
    index = value % EMBED_DIM
    sign = 1.0 if (value >> 8) & 1 else -1.0
    return index, sign


def hashed_embedding(tokens, dim: int = EMBED_DIM) -> np.ndarray:
    """L2-normalized signed-hash embedding of a token sequence."""
    vec = np.zeros(dim)
    for tok in tokens:
        idx, sign = _term_hash(tok)
        vec[idx % dim] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def embed_text(text: str, dim: int = EMBED_DIM) -> np.ndarray:
    return hashed_embedding(tokenize(text), dim)
