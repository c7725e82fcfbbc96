"""Empirical calibration error and reliability curves.

Buckets are equal-width over [0, 1]: value v lands in bucket
floor(v * c), except v = 1.0 which stays in the top bucket (interior
boundary values therefore go to the higher bucket). Empty buckets carry
size 0 and contribute nothing. An equal-mass bucketing is available for
sensitivity analysis.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import DialogueInstance, PredictiveDistribution


@dataclass(frozen=True)
class ReliabilityReport:
    bucket_count: int
    bucket_sizes: tuple[int, ...]
    bucket_confidence: tuple[float, ...]  # mean predicted probability, 0.0 if empty
    bucket_relevance: tuple[float, ...]  # empirical relevance fraction, 0.0 if empty
    ece: float
    n: int
    scheme: str = "equal_width"

    def recompute_ece(self) -> float:
        total = 0.0
        for size, conf, rel in zip(self.bucket_sizes, self.bucket_confidence, self.bucket_relevance):
            if size:
                total += (size / self.n) * abs(conf - rel)
        return total


def _bucket_index_equal_width(p: float, c: int) -> int:
    return min(int(p * c), c - 1)


def compute_ece(predictions, c: int = 10, scheme: str = "equal_width") -> ReliabilityReport:
    """Reliability report over (probability, binary label) pairs."""
    predictions = list(predictions)
    if not predictions:
        raise ValueError("empty prediction list")
    if c < 1:
        raise ValueError("bucket count must be >= 1")
    probs = np.array([p for p, _ in predictions], dtype=float)
    labels = np.array([int(y) for _, y in predictions])
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValueError("probability outside [0, 1]")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0/1")
    n = len(probs)

    if scheme == "equal_width":
        idx = np.minimum((probs * c).astype(int), c - 1)
    elif scheme == "equal_mass":
        order = np.argsort(probs, kind="stable")
        idx = np.empty(n, dtype=int)
        # spread n points over c buckets as evenly as possible, in sorted order
        idx[order] = np.minimum((np.arange(n) * c) // n, c - 1)
    else:
        raise ValueError(f"unknown bucketing scheme {scheme!r}")

    sizes, confs, rels = [], [], []
    ece = 0.0
    for i in range(c):
        in_bucket = idx == i
        size = int(in_bucket.sum())
        sizes.append(size)
        if size == 0:
            confs.append(0.0)
            rels.append(0.0)
            continue
        conf = float(probs[in_bucket].mean())
        rel = float(labels[in_bucket].mean())
        confs.append(conf)
        rels.append(rel)
        ece += (size / n) * abs(conf - rel)
    return ReliabilityReport(
        bucket_count=c,
        bucket_sizes=tuple(sizes),
        bucket_confidence=tuple(confs),
        bucket_relevance=tuple(rels),
        ece=ece,
        n=n,
        scheme=scheme,
    )


def reduce_distribution(dist: PredictiveDistribution, reducer: str) -> np.ndarray:
    """Per-candidate point prediction: sample mean or the first (deterministic) row."""
    if reducer == "mean":
        return dist.scores.mean(axis=0)
    if reducer == "deterministic":
        return dist.scores[0]
    raise ValueError(f"unknown reducer {reducer!r}")


def balanced_ece(
    distributions: list[PredictiveDistribution],
    instances: list[DialogueInstance],
    reducer: str = "mean",
    non_rel_per_query: int = 1,
    seed: int = 0,
    c: int = 10,
) -> ReliabilityReport:
    """ECE over each instance's relevant candidate plus sampled non-relevant ones.

    non_rel_per_query = 1 gives the balanced protocol; larger values emulate
    increasingly unbalanced candidate pools.
    """
    if non_rel_per_query < 1:
        raise ValueError("non_rel_per_query must be >= 1")
    by_id = {inst.id: inst for inst in instances}
    rng = np.random.default_rng(seed)
    pairs: list[tuple[float, int]] = []
    for dist in distributions:
        inst = by_id[dist.instance_id]
        rel_idx = inst.relevant_indices()
        if not rel_idx:
            raise ValueError(
                f"instance {inst.id!r} has no relevant candidate; "
                "NOTA instances are excluded from calibration"
            )
        non_idx = [j for j in range(inst.k) if inst.labels[j] == 0]
        if non_rel_per_query > len(non_idx):
            raise ValueError(
                f"instance {inst.id!r}: requested {non_rel_per_query} non-relevant "
                f"candidates but only {len(non_idx)} exist"
            )
        point = reduce_distribution(dist, reducer)
        chosen = rng.choice(non_idx, size=non_rel_per_query, replace=False)
        for j in rel_idx:
            pairs.append((float(point[j]), 1))
        for j in sorted(int(j) for j in chosen):
            pairs.append((float(point[j]), 0))
    return compute_ece(pairs, c=c)


def save_reliability_csv(report: ReliabilityReport, path, config_hash: str = "") -> None:
    """CSV export plus bucket boundaries for reliability-curve plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash} ece={report.ece:.9g} n={report.n}\n")
        writer = csv.writer(fh)
        writer.writerow(["bucket_low", "bucket_high", "size", "mean_confidence", "relevance_fraction"])
        c = report.bucket_count
        for i in range(c):
            writer.writerow(
                [
                    f"{i / c:.6g}",
                    f"{(i + 1) / c:.6g}",
                    report.bucket_sizes[i],
                    f"{report.bucket_confidence[i]:.9g}",
                    f"{report.bucket_relevance[i]:.9g}",
                ]
            )


def save_reliability_plot_spec(report: ReliabilityReport, csv_path, path) -> None:
    """Declarative plot spec: confidence on x, % of relevant documents on y."""
    spec = {
        "kind": "reliability_curve",
        "data": str(csv_path),
        "x": {"field": "mean_confidence", "label": "confidence", "domain": [0, 1]},
        "y": {"field": "relevance_fraction", "label": "% of relevant documents", "domain": [0, 1]},
        "reference": {"kind": "diagonal", "label": "perfect calibration"},
        "annotations": {"ece": round(report.ece, 9), "n": report.n},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec, fh, indent=2, sort_keys=True)
        fh.write("\n")
