"""Trainable pointwise probabilistic scorer over (context, response) pairs.

Eight lexical/semantic features feed a one-hidden-layer tanh network with
two output logits (relevant, non-relevant) mapped to a relevance
probability by softmax. Training is plain seeded SGD with cross-entropy
on balanced relevant/non-relevant pairs; dropout regularizes the hidden
layer and doubles as the test-time stochasticity source.

Feature order (fixed):
  0  BM25 of response against the concatenated context
  1  unigram Jaccard overlap (context vs response)
  2  bigram Jaccard overlap
  3  IDF-weighted Jaccard overlap
  4  log(1 + response length in tokens)
  5  log(1 + context length in tokens)
  6  hashed-embedding cosine (context vs response)
  7  fraction of distinct context terms covered by the response
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import DialogueInstance, tokenize
from .text import CorpusStats, bm25_score, hashed_embedding

logger = logging.getLogger(__name__)

N_FEATURES = 8
DEFAULT_HIDDEN = 16

PARAMS_FORMAT_VERSION = 1


def _bigrams(tokens):
    return {(a, b) for a, b in zip(tokens, tokens[1:])}


def _jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def extract_features(context, response_text: str, stats: CorpusStats) -> np.ndarray:
    """Feature vector for one (context utterances, response text) pair."""
    ctx_tokens: list[str] = []
    for utt in context:
        ctx_tokens.extend(tokenize(utt))
    resp_tokens = tokenize(response_text)
    ctx_set, resp_set = set(ctx_tokens), set(resp_tokens)

    inter = ctx_set & resp_set
    union = ctx_set | resp_set
    # sorted: float accumulation order must not depend on the hash seed
    idf_inter = sum(stats.idf(t) for t in sorted(inter))
    idf_union = sum(stats.idf(t) for t in sorted(union))

    emb_cos = float(np.dot(hashed_embedding(ctx_tokens), hashed_embedding(resp_tokens)))

    feats = np.array(
        [
            bm25_score(ctx_tokens, resp_tokens, stats),
            _jaccard(ctx_set, resp_set),
            _jaccard(_bigrams(ctx_tokens), _bigrams(resp_tokens)),
            idf_inter / idf_union if idf_union > 0 else 0.0,
            math.log1p(len(resp_tokens)),
            math.log1p(len(ctx_tokens)),
            emb_cos,
            len(inter) / len(ctx_set) if ctx_set else 0.0,
        ]
    )
    if not np.all(np.isfinite(feats)):
        raise FloatingPointError("non-finite feature value")
    return feats


@dataclass(frozen=True)
class ScorerParameters:
    w1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (2, h): row 0 relevant, row 1 non-relevant
    b2: np.ndarray  # (2,)
    dropout_rate: float = 0.1
    train_seed: int = 0

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.w2.shape[0] != 2 or self.b2.shape != (2,):
            raise ValueError("output layer must produce 2 logits")
        if self.w1.shape[0] != self.w2.shape[1] or self.b1.shape != (self.w1.shape[0],):
            raise ValueError("inconsistent hidden dimensions")

    @property
    def d(self) -> int:
        return self.w1.shape[1]

    @property
    def h(self) -> int:
        return self.w1.shape[0]


def init_params(
    d: int = N_FEATURES,
    h: int = DEFAULT_HIDDEN,
    dropout_rate: float = 0.1,
    seed: int = 0,
) -> ScorerParameters:
    """Seeded uniform [-0.5, 0.5]/sqrt(fan-in) weights, zero biases."""
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-0.5, 0.5, size=(h, d)) / math.sqrt(d)
    w2 = rng.uniform(-0.5, 0.5, size=(2, h)) / math.sqrt(h)
    return ScorerParameters(
        w1=w1, b1=np.zeros(h), w2=w2, b2=np.zeros(2),
        dropout_rate=dropout_rate, train_seed=seed,
    )


def draw_mask(rng: np.random.Generator, h: int, dropout_rate: float) -> np.ndarray:
    """One Bernoulli(1 - dropout_rate) keep indicator per hidden unit."""
    return (rng.random(h) >= dropout_rate).astype(float)


def _forward_batch(params: ScorerParameters, X: np.ndarray, masks=None):
    """Returns (probabilities of relevance, cache for backprop).

    Contractions go through einsum rather than BLAS matmul: OpenBLAS picks
    kernels by pointer alignment, which perturbs the last bit across
    processes and would break byte-identical reruns.
    """
    z1 = np.einsum("nd,hd->nh", X, params.w1) + params.b1
    a1 = np.tanh(z1)
    if masks is not None and params.dropout_rate > 0.0:
        a1 = a1 * masks / (1.0 - params.dropout_rate)
    logits = np.einsum("nh,ch->nc", a1, params.w2) + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs2 = expz / expz.sum(axis=1, keepdims=True)
    if not np.all(np.isfinite(probs2)):
        raise FloatingPointError("non-finite activation in forward pass")
    cache = (X, a1, probs2, masks)
    return probs2[:, 0], cache


def forward(params: ScorerParameters, x: np.ndarray, mask=None) -> float:
    """Probability of relevance for one feature vector (optional dropout mask)."""
    x = np.asarray(x, dtype=float)
    masks = None if mask is None else np.asarray(mask, dtype=float)[None, :]
    p, _ = _forward_batch(params, x[None, :], masks)
    return float(p[0])


def _backward_batch(params: ScorerParameters, cache, labels: np.ndarray):
    """Mean cross-entropy gradients over the batch. Label 1 = relevant (logit 0)."""
    X, a1, probs2, masks = cache
    n = X.shape[0]
    onehot = np.zeros_like(probs2)
    onehot[np.arange(n), np.where(labels == 1, 0, 1)] = 1.0
    dlogits = (probs2 - onehot) / n
    gw2 = np.einsum("nc,nh->ch", dlogits, a1)
    gb2 = dlogits.sum(axis=0)
    da1 = np.einsum("nc,ch->nh", dlogits, params.w2)
    if masks is not None and params.dropout_rate > 0.0:
        da1 = da1 * masks / (1.0 - params.dropout_rate)
    # a1 already carries the mask scaling; recover tanh' from pre-dropout z1
    z1 = np.einsum("nd,hd->nh", X, params.w1) + params.b1
    dz1 = da1 * (1.0 - np.tanh(z1) ** 2)
    gw1 = np.einsum("nh,nd->hd", dz1, X)
    gb1 = dz1.sum(axis=0)
    return {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def _batch_loss(probs2: np.ndarray, labels: np.ndarray) -> float:
    idx = np.where(labels == 1, 0, 1)
    picked = probs2[np.arange(len(labels)), idx]
    return float(-np.mean(np.log(np.clip(picked, 1e-300, None))))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 5
    batch_size: int = 32
    balance: bool = True
    hidden: int = DEFAULT_HIDDEN
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def corpus_feature_table(corpus, stats: CorpusStats) -> dict[str, np.ndarray]:
    """Features for every candidate of every instance, keyed by instance id."""
    table = {}
    for inst in corpus:
        table[inst.id] = np.stack(
            [extract_features(inst.context, c.text, stats) for c in inst.candidates]
        )
    return table


def train(
    corpus: list[DialogueInstance],
    cfg: TrainConfig,
    seed: int,
    stats: CorpusStats,
    loss_log: list | None = None,
    feature_table: dict[str, np.ndarray] | None = None,
    pair_counts: list | None = None,
) -> ScorerParameters:
    """SGD training on (context, candidate) pairs; deterministic given (cfg, seed).

    Each epoch pairs every relevant candidate with an equal number of
    freshly sampled non-relevant candidates from the same instance
    (``cfg.balance``), shuffles, and applies mini-batch SGD with dropout.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    for inst in corpus:
        rel = sum(inst.labels)
        if rel == 0 or rel == inst.k:
            raise ValueError(
                f"instance {inst.id!r} needs at least one relevant and one "
                "non-relevant candidate"
            )
    rng = np.random.default_rng(seed)
    params = init_params(
        d=N_FEATURES, h=cfg.hidden, dropout_rate=cfg.dropout_rate, seed=seed
    )
    feats = feature_table if feature_table is not None else corpus_feature_table(corpus, stats)

    for epoch in range(cfg.epochs):
        X_rows, labels = [], []
        for inst in corpus:
            rel_idx = inst.relevant_indices()
            non_idx = [j for j in range(inst.k) if inst.labels[j] == 0]
            for j in rel_idx:
                X_rows.append(feats[inst.id][j])
                labels.append(1)
            if cfg.balance:
                chosen = rng.choice(
                    non_idx, size=len(rel_idx), replace=len(non_idx) < len(rel_idx)
                )
            else:
                chosen = non_idx
            for j in chosen:
                X_rows.append(feats[inst.id][int(j)])
                labels.append(0)
        X = np.stack(X_rows)
        y = np.array(labels)
        if pair_counts is not None:
            pair_counts.append((int(np.sum(y == 1)), int(np.sum(y == 0))))
        order = rng.permutation(len(y))
        X, y = X[order], y[order]

        epoch_losses = []
        for start in range(0, len(y), cfg.batch_size):
            Xb, yb = X[start : start + cfg.batch_size], y[start : start + cfg.batch_size]
            masks = None
            if cfg.dropout_rate > 0.0:
                masks = (rng.random((len(yb), cfg.hidden)) >= cfg.dropout_rate).astype(float)
            try:
                _, cache = _forward_batch(params, Xb, masks)
            except FloatingPointError as exc:
                raise FloatingPointError(
                    f"divergence at epoch {epoch}, batch {start // cfg.batch_size}: {exc}"
                ) from exc
            loss = _batch_loss(cache[2], yb)
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"divergence at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            epoch_losses.append(loss * len(yb))
            grads = _backward_batch(params, cache, yb)
            params = replace(
                params,
                w1=params.w1 - cfg.learning_rate * grads["w1"],
                b1=params.b1 - cfg.learning_rate * grads["b1"],
                w2=params.w2 - cfg.learning_rate * grads["w2"],
                b2=params.b2 - cfg.learning_rate * grads["b2"],
            )
        mean_loss = sum(epoch_losses) / len(y)
        logger.info("epoch %d: mean training loss %.6f", epoch, mean_loss)
        if loss_log is not None:
            loss_log.append(mean_loss)
    return replace(params, train_seed=seed)


def _loss_and_grads(params: ScorerParameters, x: np.ndarray, label: int):
    p2, cache = _forward_batch(params, x[None, :], None)
    loss = _batch_loss(cache[2], np.array([label]))
    grads = _backward_batch(params, cache, np.array([label]))
    return loss, grads


def gradient_check(
    params: ScorerParameters, x: np.ndarray, label: int, step: float = 1e-5
) -> float:
    """Max relative gap between analytic and central-difference gradients."""
    x = np.asarray(x, dtype=float)
    _, grads = _loss_and_grads(params, x, label)
    worst = 0.0
    for name in ("w1", "b1", "w2", "b2"):
        arr = getattr(params, name)
        for idx in np.ndindex(arr.shape):
            losses = []
            for sign in (+1.0, -1.0):
                perturbed = arr.copy()
                perturbed[idx] += sign * step
                p = replace(params, **{name: perturbed})
                losses.append(
                    _batch_loss(_forward_batch(p, x[None, :], None)[1][2], np.array([label]))
                )
            numeric = (losses[0] - losses[1]) / (2.0 * step)
            analytic = grads[name][idx]
            denom = abs(analytic) + abs(numeric) + 1e-12
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def save_params(params: ScorerParameters, path) -> None:
    """Versioned flat text serialization (row-major decimal arrays)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"stochrank-params v{PARAMS_FORMAT_VERSION} d={params.d} h={params.h} "
            f"dropout_rate={params.dropout_rate!r} train_seed={params.train_seed}\n"
        )
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(params, name)
            fh.write(name + " " + " ".join(repr(float(v)) for v in arr.ravel()) + "\n")


def load_params(path, expect_d: int | None = None, expect_h: int | None = None) -> ScorerParameters:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if not header or header[0] != "stochrank-params":
            raise ValueError(f"{path}: not a scorer parameter file")
        fields = dict(part.split("=", 1) for part in header[2:])
        d, h = int(fields["d"]), int(fields["h"])
        if expect_d is not None and d != expect_d:
            raise ValueError(f"{path}: expected d={expect_d}, file has d={d}")
        if expect_h is not None and h != expect_h:
            raise ValueError(f"{path}: expected h={expect_h}, file has h={h}")
        arrays = {}
        shapes = {"w1": (h, d), "b1": (h,), "w2": (2, h), "b2": (2,)}
        for line in fh:
            name, *vals = line.split()
            arrays[name] = np.array([float(v) for v in vals]).reshape(shapes[name])
        return ScorerParameters(
            w1=arrays["w1"], b1=arrays["b1"], w2=arrays["w2"], b2=arrays["b2"],
            dropout_rate=float(fields["dropout_rate"]), train_seed=int(fields["train_seed"]),
        )
