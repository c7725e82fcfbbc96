"""Dialogue ranking data model and corpus IO.

A corpus is a JSON-lines file: one record per line with fields ``id``,
``context`` (list of utterance strings), ``candidates`` (list of
``{id, text, provenance}``) and ``labels`` (list of 0/1 ints). UTF-8.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

PROVENANCES = ("ground_truth", "sampled_random", "sampled_lexical", "sampled_embedding")

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


class CorpusFormatError(ValueError):
    """Raised when a corpus file violates the record schema or an invariant."""


@dataclass(frozen=True)
class CandidateResponse:
    id: str
    text: str
    provenance: str = "ground_truth"

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"candidate {self.id!r}: text is empty")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"candidate {self.id!r}: unknown provenance {self.provenance!r}")

    def tokens(self) -> list[str]:
        return tokenize(self.text)


@dataclass(frozen=True)
class DialogueInstance:
    id: str
    context: tuple[str, ...]
    candidates: tuple[CandidateResponse, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "context", tuple(self.context))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "labels", tuple(int(y) for y in self.labels))
        if len(self.candidates) != len(self.labels):
            raise ValueError(
                f"instance {self.id!r}: {len(self.candidates)} candidates "
                f"vs {len(self.labels)} labels"
            )
        if len(self.candidates) < 1:
            raise ValueError(f"instance {self.id!r}: needs at least one candidate")
        if any(y not in (0, 1) for y in self.labels):
            raise ValueError(f"instance {self.id!r}: labels must be 0/1")
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError(f"instance {self.id!r}: duplicate candidate ids")

    @property
    def k(self) -> int:
        return len(self.candidates)

    def context_tokens(self) -> list[str]:
        out: list[str] = []
        for utt in self.context:
            out.extend(tokenize(utt))
        return out

    def relevant_indices(self) -> list[int]:
        return [j for j, y in enumerate(self.labels) if y == 1]


@dataclass(frozen=True)
class PredictiveDistribution:
    """S stochastic relevance scores per candidate of one instance.

    Row s is one sample (ensemble member or dropout pass); column j is
    candidate j of the referenced instance.
    """

    instance_id: str
    scores: np.ndarray  # shape (S, k)
    source: str  # deterministic | ensemble | dropout
    sample_seeds: tuple[int, ...] = ()

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "sample_seeds", tuple(self.sample_seeds))
        if scores.ndim != 2 or scores.shape[0] < 1:
            raise ValueError("scores must be a non-empty S x k matrix")
        if np.any(scores < 0.0) or np.any(scores > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        if self.source not in ("deterministic", "ensemble", "dropout"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "deterministic" and scores.shape[0] != 1:
            raise ValueError("deterministic source implies S = 1")

    @property
    def n_samples(self) -> int:
        return self.scores.shape[0]

    @property
    def k(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class RankedList:
    instance_id: str
    ordering: tuple[int, ...]
    final_scores: tuple[float, ...]
    tie_break: str = "by_candidate_id"

    def __post_init__(self):
        object.__setattr__(self, "ordering", tuple(self.ordering))
        object.__setattr__(self, "final_scores", tuple(float(s) for s in self.final_scores))
        k = len(self.final_scores)
        if sorted(self.ordering) != list(range(k)):
            raise ValueError("ordering is not a permutation of candidate indices")


def _parse_record(obj: dict, lineno: int) -> DialogueInstance:
    for key in ("id", "context", "candidates", "labels"):
        if key not in obj:
            raise CorpusFormatError(f"line {lineno}: missing field {key!r}")
    try:
        cands = tuple(
            CandidateResponse(
                id=str(c["id"]),
                text=str(c["text"]),
                provenance=str(c.get("provenance", "ground_truth")),
            )
            for c in obj["candidates"]
        )
        return DialogueInstance(
            id=str(obj["id"]),
            context=tuple(str(u) for u in obj["context"]),
            candidates=cands,
            labels=tuple(obj["labels"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"line {lineno}: {exc}") from exc


def load_corpus(
    path, require_single_relevant: bool = True, min_candidates: int = 2
) -> list[DialogueInstance]:
    """Load a JSONL corpus, preserving file order.

    With ``require_single_relevant`` each instance must carry exactly one
    relevant label (default construction); NOTA-style corpora disable it.
    """
    instances: list[DialogueInstance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            inst = _parse_record(obj, lineno)
            if inst.k < min_candidates:
                raise CorpusFormatError(
                    f"line {lineno}: instance {inst.id!r} has k={inst.k}, "
                    f"expected k >= {min_candidates}"
                )
            if inst.id in seen:
                raise CorpusFormatError(f"line {lineno}: duplicate instance id {inst.id!r}")
            if require_single_relevant and sum(inst.labels) != 1:
                raise CorpusFormatError(
                    f"line {lineno}: instance {inst.id!r} has {sum(inst.labels)} "
                    "relevant labels, expected exactly 1"
                )
            seen.add(inst.id)
            instances.append(inst)
    return instances


def instance_to_record(inst: DialogueInstance) -> dict:
    return {
        "id": inst.id,
        "context": list(inst.context),
        "candidates": [
            {"id": c.id, "text": c.text, "provenance": c.provenance} for c in inst.candidates
        ],
        "labels": list(inst.labels),
    }


def save_corpus(instances, path) -> None:
    """Write the canonical JSONL form (round-trips byte-identically)."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def truncate_candidates(inst: DialogueInstance, keep) -> DialogueInstance:
    """New instance restricted to candidate indices in ``keep`` (original order)."""
    keep = set(keep)
    if not keep:
        raise ValueError("keep set is empty")
    if not keep.issubset(range(inst.k)):
        raise ValueError(f"keep set {sorted(keep)} out of range for k={inst.k}")
    idx = [j for j in range(inst.k) if j in keep]
    return DialogueInstance(
        id=inst.id,
        context=inst.context,
        candidates=tuple(inst.candidates[j] for j in idx),
        labels=tuple(inst.labels[j] for j in idx),
    )
