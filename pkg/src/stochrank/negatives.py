"""Negative-sampling strategies over a shared response pool.

Three strategies pick non-relevant candidates for a dialogue context:
uniformly at random, by BM25 lexical retrieval, or by hashed-embedding
similarity. Lexical and embedding retrieval are deterministic full scans;
when fewer than m responses score positively the remainder is padded in
ascending response-id order and a warning is logged.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace

import numpy as np

from .data import CandidateResponse, DialogueInstance, tokenize
from .text import BM25_B, BM25_K1, EMBED_DIM, CorpusStats, bm25_score, hashed_embedding

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResponsePool:
    responses: tuple[CandidateResponse, ...]  # unique ids, insertion order
    postings: dict[str, dict[str, int]]  # term -> response id -> term frequency
    stats: CorpusStats
    embeddings: np.ndarray  # one unit (or zero) row per response

    def __post_init__(self):
        ids = [r.id for r in self.responses]
        if len(set(ids)) != len(ids):
            raise ValueError("pool has duplicate response ids")

    @property
    def size(self) -> int:
        return len(self.responses)

    def by_id(self) -> dict[str, CandidateResponse]:
        return {r.id: r for r in self.responses}


def build_pool(responses) -> ResponsePool:
    """Index and embed a collection of responses (first occurrence per id wins)."""
    unique: list[CandidateResponse] = []
    seen: set[str] = set()
    for resp in responses:
        if resp.id in seen:
            continue
        seen.add(resp.id)
        unique.append(resp)

    postings: dict[str, dict[str, int]] = {}
    total_len = 0
    for resp in unique:
        toks = resp.tokens()
        total_len += len(toks)
        counts: dict[str, int] = {}
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
        for t, tf in counts.items():
            postings.setdefault(t, {})[resp.id] = tf
    n = max(len(unique), 1)
    stats = CorpusStats(
        doc_freq={t: len(ids) for t, ids in postings.items()},
        n_docs=n,
        avg_doc_len=total_len / n,
    )
    emb = (
        np.stack([hashed_embedding(r.tokens()) for r in unique])
        if unique
        else np.zeros((0, EMBED_DIM))
    )
    return ResponsePool(responses=tuple(unique), postings=postings, stats=stats, embeddings=emb)


def pool_from_corpus(corpus: list[DialogueInstance], ground_truth_only: bool = False) -> ResponsePool:
    def gen():
        for inst in corpus:
            for cand, label in zip(inst.candidates, inst.labels):
                if ground_truth_only and label != 1:
                    continue
                yield cand

    return build_pool(gen())


def _context_tokens(context) -> list[str]:
    toks: list[str] = []
    for utt in context:
        toks.extend(tokenize(utt))
    return toks


def _as_sampled(resp: CandidateResponse, provenance: str) -> CandidateResponse:
    return replace(resp, provenance=provenance)


def ns_random(pool: ResponsePool, context, m: int, seed: int, exclude=frozenset()) -> list[CandidateResponse]:
    """Uniform sample without replacement, excluding ground-truth ids."""
    exclude = set(exclude)
    eligible = [r for r in pool.responses if r.id not in exclude]
    if len(eligible) < m:
        raise ValueError(f"pool has only {len(eligible)} eligible responses, need {m}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(eligible), size=m, replace=False)
    return [_as_sampled(eligible[int(i)], "sampled_random") for i in idx]


def _ranked_retrieval(pool, scores_by_id, eligible, m, provenance):
    scorable = sorted(
        (r for r in eligible if scores_by_id[r.id] > 0.0),
        key=lambda r: (-scores_by_id[r.id], r.id),
    )
    out = scorable[:m]
    if len(out) < m:
        logger.warning(
            "%s retrieval found only %d scorable responses for m=%d; "
            "padding in ascending id order", provenance, len(out), m,
        )
        taken = {r.id for r in out}
        padding = sorted((r for r in eligible if r.id not in taken), key=lambda r: r.id)
        out = out + padding[: m - len(out)]
    if len(out) < m:
        raise ValueError(f"pool has only {len(out)} eligible responses, need {m}")
    return [_as_sampled(r, provenance) for r in out]


def ns_lexical(pool: ResponsePool, context, m: int, exclude=frozenset()) -> list[CandidateResponse]:
    """Top-m responses by BM25 (k1=1.2, b=0.75) against the concatenated context."""
    exclude = set(exclude)
    query = _context_tokens(context)
    eligible = [r for r in pool.responses if r.id not in exclude]
    scores = {
        r.id: bm25_score(query, r.tokens(), pool.stats, k1=BM25_K1, b=BM25_B) for r in eligible
    }
    return _ranked_retrieval(pool, scores, eligible, m, "sampled_lexical")


def ns_embedding(pool: ResponsePool, context, m: int, exclude=frozenset()) -> list[CandidateResponse]:
    """Top-m responses by hashed-embedding dot product with the context."""
    exclude = set(exclude)
    query_vec = hashed_embedding(_context_tokens(context))
    sims = pool.embeddings @ query_vec
    eligible = [r for r in pool.responses if r.id not in exclude]
    pos = {r.id: i for i, r in enumerate(pool.responses)}
    scores = {r.id: float(sims[pos[r.id]]) for r in eligible}
    return _ranked_retrieval(pool, scores, eligible, m, "sampled_embedding")


STRATEGIES = {
    "random": "ns_random",
    "bm25": "ns_lexical",
    "embed": "ns_embedding",
}


def sample_negatives(
    pool: ResponsePool, context, strategy: str, m: int, seed: int = 0, exclude=frozenset()
) -> list[CandidateResponse]:
    """Dispatch by strategy name {random, bm25, embed}."""
    if strategy == "random":
        return ns_random(pool, context, m, seed, exclude)
    if strategy == "bm25":
        return ns_lexical(pool, context, m, exclude)
    if strategy == "embed":
        return ns_embedding(pool, context, m, exclude)
    raise ValueError(f"unknown negative-sampling strategy {strategy!r}")


def _checksummed_write(path, body: str) -> None:
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# sha256={digest}\n")
        fh.write(body)


def _checksummed_read(path) -> str:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        body = fh.read()
    if not header.startswith("# sha256="):
        raise ValueError(f"{path}: missing checksum header")
    expected = header.strip().split("=", 1)[1]
    actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if actual != expected:
        raise ValueError(f"{path}: checksum mismatch (file corrupted?)")
    return body


def save_pool(pool: ResponsePool, prefix) -> None:
    """Persist as <prefix>.index.json and <prefix>.emb.txt with checksum headers."""
    index_obj = {
        "responses": [
            {"id": r.id, "text": r.text, "provenance": r.provenance} for r in pool.responses
        ],
        "postings": pool.postings,
        "n_docs": pool.stats.n_docs,
        "avg_doc_len": pool.stats.avg_doc_len,
    }
    _checksummed_write(f"{prefix}.index.json", json.dumps(index_obj, sort_keys=True) + "\n")
    lines = [
        r.id + " " + " ".join(repr(float(v)) for v in row)
        for r, row in zip(pool.responses, pool.embeddings)
    ]
    _checksummed_write(f"{prefix}.emb.txt", "\n".join(lines) + ("\n" if lines else ""))


def load_pool(prefix) -> ResponsePool:
    index_obj = json.loads(_checksummed_read(f"{prefix}.index.json"))
    responses = tuple(
        CandidateResponse(id=r["id"], text=r["text"], provenance=r["provenance"])
        for r in index_obj["responses"]
    )
    stats = CorpusStats(
        doc_freq={t: len(ids) for t, ids in index_obj["postings"].items()},
        n_docs=index_obj["n_docs"],
        avg_doc_len=index_obj["avg_doc_len"],
    )
    body = _checksummed_read(f"{prefix}.emb.txt")
    rows = []
    for line in body.splitlines():
        _, *vals = line.split()
        rows.append([float(v) for v in vals])
    emb = np.array(rows) if rows else np.zeros((0, EMBED_DIM))
    return ResponsePool(
        responses=responses, postings=index_obj["postings"], stats=stats, embeddings=emb
    )
