"""Predictive distributions from seed-ensembles and test-time dropout.

Run-file interchange format: a ``#`` header line carrying the source type
and seeds (plus an optional config hash), then one tab-separated line per
(instance_id, candidate_id, sample_index, score) with scores printed at 9
significant digits. External scorers can inject their own distributions
through this format.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DialogueInstance, PredictiveDistribution
from .ranker import ScorerParameters, TrainConfig, _forward_batch, draw_mask, extract_features
from .text import CorpusStats


@dataclass(frozen=True)
class EnsembleSpec:
    member_seeds: tuple[int, ...]
    train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "member_seeds", tuple(self.member_seeds))
        if len(self.member_seeds) < 2:
            raise ValueError("an ensemble needs M >= 2 members")
        if len(set(self.member_seeds)) != len(self.member_seeds):
            raise ValueError("member seeds must be pairwise distinct")

    @property
    def m(self) -> int:
        return len(self.member_seeds)


@dataclass(frozen=True)
class DropoutSpec:
    passes: int = 10
    dropout_rate: float = 0.1
    pass_seed_base: int = 0
    mask_sharing: str = "shared_per_pass"  # or independent_per_candidate

    def __post_init__(self):
        if self.passes < 2:
            raise ValueError("dropout inference needs T >= 2 passes")
        if not (0.0 < self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie strictly in (0, 1)")
        if self.mask_sharing not in ("shared_per_pass", "independent_per_candidate"):
            raise ValueError(f"unknown mask_sharing {self.mask_sharing!r}")


def _instance_features(instance: DialogueInstance, stats: CorpusStats) -> np.ndarray:
    return np.stack([extract_features(instance.context, c.text, stats) for c in instance.candidates])


def predict_deterministic(
    params: ScorerParameters, instance: DialogueInstance, stats: CorpusStats,
    features: np.ndarray | None = None,
) -> PredictiveDistribution:
    """Single mask-free forward pass per candidate."""
    X = _instance_features(instance, stats) if features is None else features
    probs, _ = _forward_batch(params, X, None)
    return PredictiveDistribution(
        instance_id=instance.id,
        scores=probs[None, :],
        source="deterministic",
        sample_seeds=(params.train_seed,),
    )


def predict_ensemble(
    members: list[ScorerParameters], instance: DialogueInstance, stats: CorpusStats,
    features: np.ndarray | None = None,
) -> PredictiveDistribution:
    """One deterministic row per member, in member order (dropout disabled)."""
    if len({m.d for m in members}) != 1:
        raise ValueError("ensemble members disagree on feature dimensionality")
    X = _instance_features(instance, stats) if features is None else features
    if X.shape[1] != members[0].d:
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match members' d={members[0].d}"
        )
    rows = [_forward_batch(m, X, None)[0] for m in members]
    return PredictiveDistribution(
        instance_id=instance.id,
        scores=np.stack(rows),
        source="ensemble",
        sample_seeds=tuple(m.train_seed for m in members),
    )


def predict_dropout(
    params: ScorerParameters, spec: DropoutSpec, instance: DialogueInstance,
    stats: CorpusStats, features: np.ndarray | None = None,
) -> PredictiveDistribution:
    """T masked forward passes; pass t draws from seed pass_seed_base + t."""
    if not (0.0 < spec.dropout_rate < 1.0):
        raise ValueError("dropout_rate must lie strictly in (0, 1)")
    if params.dropout_rate != spec.dropout_rate:
        raise ValueError(
            f"spec dropout_rate {spec.dropout_rate} differs from the rate the "
            f"scorer was trained with ({params.dropout_rate})"
        )
    X = _instance_features(instance, stats) if features is None else features
    k = X.shape[0]
    rows = []
    seeds = []
    for t in range(spec.passes):
        seed = spec.pass_seed_base + t
        seeds.append(seed)
        rng = np.random.default_rng(seed)
        if spec.mask_sharing == "shared_per_pass":
            masks = np.tile(draw_mask(rng, params.h, spec.dropout_rate), (k, 1))
        else:
            masks = np.stack([draw_mask(rng, params.h, spec.dropout_rate) for _ in range(k)])
        rows.append(_forward_batch(params, X, masks)[0])
    return PredictiveDistribution(
        instance_id=instance.id,
        scores=np.stack(rows),
        source="dropout",
        sample_seeds=tuple(seeds),
    )


def distribution_stats(dist: PredictiveDistribution):
    """(mean, variance, covariance) per candidate; unbiased (S-1) normalizer.

    S = 1 yields zero variance/covariance by convention.
    """
    # normalize memory layout: fancy indexing can hand us Fortran-ordered
    # arrays, and reduction order (hence the low bits) depends on layout
    scores = np.ascontiguousarray(dist.scores)
    mean = scores.mean(axis=0)
    k = scores.shape[1]
    if dist.n_samples < 2:
        return mean, np.zeros(k), np.zeros((k, k))
    centered = scores - mean
    # pairwise dots rather than one matmul: keeps each entry bit-identical
    # under candidate permutation (BLAS blocking is shape-dependent)
    cov = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            cov[i, j] = cov[j, i] = np.dot(centered[:, i], centered[:, j]) / (dist.n_samples - 1)
    return mean, np.diag(cov).copy(), cov


def save_run_file(dists: list[PredictiveDistribution], instances, path, config_hash: str = "") -> None:
    """Write the tab-separated run file (one interchange format for all analyses)."""
    by_id = {inst.id: inst for inst in instances}
    with open(path, "w", encoding="utf-8") as fh:
        first = dists[0] if dists else None
        source = first.source if first else "deterministic"
        seeds = ",".join(str(s) for s in (first.sample_seeds if first else ()))
        fh.write(f"# source={source} seeds={seeds} config_hash={config_hash}\n")
        for dist in dists:
            inst = by_id[dist.instance_id]
            for j, cand in enumerate(inst.candidates):
                for s in range(dist.n_samples):
                    fh.write(
                        f"{dist.instance_id}\t{cand.id}\t{s}\t{dist.scores[s, j]:.9g}\n"
                    )


def load_run_file(path, instances) -> list[PredictiveDistribution]:
    """Rebuild distributions from a run file, aligned to the instances' candidate order."""
    by_id = {inst.id: inst for inst in instances}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing run-file header")
        fields = dict(part.split("=", 1) for part in header[1:].split())
        source = fields.get("source", "deterministic")
        seeds = tuple(int(s) for s in fields.get("seeds", "").split(",") if s)
        cells: dict[str, dict[tuple[str, int], float]] = {}
        order: list[str] = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                inst_id, cand_id, sample, score = line.rstrip("\n").split("\t")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed run-file line") from exc
            if inst_id not in cells:
                cells[inst_id] = {}
                order.append(inst_id)
            cells[inst_id][(cand_id, int(sample))] = float(score)
    dists = []
    for inst_id in order:
        inst = by_id.get(inst_id)
        if inst is None:
            raise ValueError(f"{path}: run file references unknown instance {inst_id!r}")
        n_samples = max(s for (_, s) in cells[inst_id]) + 1
        scores = np.empty((n_samples, inst.k))
        for j, cand in enumerate(inst.candidates):
            for s in range(n_samples):
                scores[s, j] = cells[inst_id][(cand.id, s)]
        dists.append(
            PredictiveDistribution(
                instance_id=inst_id, scores=scores, source=source, sample_seeds=seeds
            )
        )
    return dists
