"""Desk-scale synthetic dialogue corpora.

Each instance gets a context of random vocabulary tokens, one relevant
response sharing a configurable fraction of the context's tokens, and
distractor responses with a lower overlap fraction. A vocabulary-rotation
knob replaces a fraction of the vocabulary with fresh tokens to emulate a
shifted target domain (1.0 gives a fully disjoint vocabulary).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CandidateResponse, DialogueInstance


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    instance_count: int = 2000
    vocab_size: int = 300
    context_min_tokens: int = 8
    context_max_tokens: int = 16
    response_tokens: int = 8
    k: int = 10
    relevant_overlap: float = 0.6
    distractor_overlap: float = 0.1
    shift_fraction: float = 0.0
    seed: int = 0
    id_prefix: str = "inst"

    def __post_init__(self):
        if not (0.0 <= self.distractor_overlap < self.relevant_overlap <= 1.0):
            raise ValueError(
                "relevant_overlap must exceed distractor_overlap (task must be learnable)"
            )
        if self.instance_count < 1 or self.k < 2:
            raise ValueError("need at least 1 instance and k >= 2")
        if not (0.0 <= self.shift_fraction <= 1.0):
            raise ValueError("shift_fraction must lie in [0, 1]")
        if self.context_min_tokens > self.context_max_tokens:
            raise ValueError("empty context length range")


def _rotate(token: str, cut: int) -> str:
    # tokens w<i> with i < cut move to a disjoint shifted vocabulary s<i>
    idx = int(token[1:])
    return f"s{idx:04d}" if idx < cut else token


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> list[DialogueInstance]:
    rng = np.random.default_rng(spec.seed)
    vocab = np.array([f"w{i:04d}" for i in range(spec.vocab_size)])
    r = spec.response_tokens
    n_rel_overlap = round(spec.relevant_overlap * r)
    n_dis_overlap = round(spec.distractor_overlap * r)
    max_fresh = r - min(n_rel_overlap, n_dis_overlap)
    if spec.vocab_size < spec.context_max_tokens + max_fresh:
        raise ValueError(
            "vocabulary too small for the requested context length and overlap fractions"
        )
    cut = round(spec.shift_fraction * spec.vocab_size)

    instances = []
    for i in range(spec.instance_count):
        ctx_len = int(rng.integers(spec.context_min_tokens, spec.context_max_tokens + 1))
        ctx_idx = rng.choice(spec.vocab_size, size=ctx_len, replace=False)
        ctx_tokens = vocab[ctx_idx]
        outside = np.setdiff1d(np.arange(spec.vocab_size), ctx_idx)

        def make_response(n_overlap: int) -> str:
            shared = rng.choice(ctx_len, size=n_overlap, replace=False)
            fresh = rng.choice(len(outside), size=r - n_overlap, replace=False)
            toks = list(ctx_tokens[shared]) + list(vocab[outside[fresh]])
            return " ".join(toks)

        inst_id = f"{spec.id_prefix}-{i:05d}"
        responses = [
            CandidateResponse(
                id=f"{inst_id}-r{j:02d}",
                text=make_response(n_rel_overlap if j == 0 else n_dis_overlap),
                provenance="ground_truth" if j == 0 else "sampled_random",
            )
            for j in range(spec.k)
        ]
        order = rng.permutation(spec.k)
        candidates = tuple(responses[int(j)] for j in order)
        labels = tuple(1 if int(j) == 0 else 0 for j in order)

        mid = max(1, ctx_len // 2)
        utterances = (" ".join(ctx_tokens[:mid]), " ".join(ctx_tokens[mid:])) if ctx_len > 1 else (
            " ".join(ctx_tokens),
        )
        instances.append(
            DialogueInstance(id=inst_id, context=utterances, candidates=candidates, labels=labels)
        )

    if cut > 0:
        instances = [_apply_rotation(inst, cut) for inst in instances]
    return instances


def _rotate_text(text: str, cut: int) -> str:
    return " ".join(_rotate(tok, cut) for tok in text.split())


def _apply_rotation(inst: DialogueInstance, cut: int) -> DialogueInstance:
    return DialogueInstance(
        id=inst.id,
        context=tuple(_rotate_text(u, cut) for u in inst.context),
        candidates=tuple(
            CandidateResponse(id=c.id, text=_rotate_text(c.text, cut), provenance=c.provenance)
            for c in inst.candidates
        ),
        labels=inst.labels,
    )
