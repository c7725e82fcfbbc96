"""Risk-aware re-ranking: mean minus variance and cross-covariance penalties.

score_j = mean_j - b * var_j - 2b * sum_{i != j} cov_ij, with statistics
from the unbiased sample moments of the predictive distribution. b > 0 is
risk aversion, b < 0 risk predilection. The candidate's own covariance is
excluded from the sum (it is already the variance term); an inclusion
flag exists for ablation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import DialogueInstance, PredictiveDistribution, RankedList
from .stochastic import distribution_stats

DEFAULT_B_GRID = tuple(round(0.05 * i, 2) for i in range(21)) + (-0.1,)


@dataclass(frozen=True)
class RiskConfig:
    b: float = 0.0
    b_grid: tuple[float, ...] = DEFAULT_B_GRID

    def __post_init__(self):
        object.__setattr__(self, "b_grid", tuple(self.b_grid))
        if 0.0 not in self.b_grid:
            raise ValueError("b_grid must contain the no-risk reference 0.0")


def risk_adjusted_scores(
    dist: PredictiveDistribution, b: float, include_self_covariance: bool = False
) -> np.ndarray:
    mean, var, cov = distribution_stats(dist)
    cross = cov.sum(axis=1)
    if not include_self_covariance:
        cross = cross - var
    return mean - b * var - 2.0 * b * cross


def _order_by_score(scores: np.ndarray, candidate_ids) -> tuple[int, ...]:
    # descending score, ties by ascending candidate id
    return tuple(sorted(range(len(scores)), key=lambda j: (-scores[j], candidate_ids[j])))


def rerank(dist: PredictiveDistribution, instance: DialogueInstance, b: float) -> RankedList:
    if dist.k != instance.k:
        raise ValueError(
            f"distribution has {dist.k} candidates but instance {instance.id!r} has {instance.k}"
        )
    scores = risk_adjusted_scores(dist, b)
    ordering = _order_by_score(scores, [c.id for c in instance.candidates])
    return RankedList(
        instance_id=instance.id, ordering=ordering, final_scores=tuple(float(s) for s in scores)
    )


def _mean_metric(pairs, b: float, metric) -> float:
    values = []
    for dist, inst in pairs:
        ranked = rerank(dist, inst, b)
        values.append(metric(ranked, inst))
    return float(np.mean(values))


def _default_metric(ranked: RankedList, inst: DialogueInstance) -> float:
    # R_k@1 with a single relevant candidate: indicator of a relevant top hit
    from .evaluation import recall_at_k

    return recall_at_k(ranked, inst.labels, inst.k, 1)


def select_b(validation, grid, metric=None) -> float:
    """Grid value maximizing the mean metric; ties toward 0, then smaller |b|."""
    validation = list(validation)
    if not validation:
        raise ValueError("empty validation set")
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    metric = metric or _default_metric
    scored = [(_mean_metric(validation, b, metric), b) for b in grid]
    best = max(v for v, _ in scored)
    candidates = [b for v, b in scored if v == best]
    if 0.0 in candidates:
        return 0.0
    return min(candidates, key=lambda b: (abs(b), b))


@dataclass(frozen=True)
class SweepRow:
    b: float
    metric: float
    gain_percent: float


def sweep_report(test, grid, metric=None) -> list[SweepRow]:
    """Per-b mean metric over (distribution, instance) pairs, with gain over b = 0."""
    test = list(test)
    metric = metric or _default_metric
    values = {b: _mean_metric(test, b, metric) for b in grid}
    base = values.get(0.0)
    if base is None:
        base = _mean_metric(test, 0.0, metric)
    rows = []
    for b in grid:
        gain = 0.0 if base == 0 else 100.0 * (values[b] - base) / base
        rows.append(SweepRow(b=b, metric=values[b], gain_percent=gain))
    return rows


def save_sweep_csv(rows: list[SweepRow], path, config_hash: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["b", "metric", "gain_percent"])
        for row in rows:
            writer.writerow([f"{row.b:.6g}", f"{row.metric:.9g}", f"{row.gain_percent:.9g}"])


def save_sweep_plot_spec(csv_path, path) -> None:
    spec = {
        "kind": "risk_aversion_sweep",
        "data": str(csv_path),
        "x": {"field": "b", "label": "risk aversion b"},
        "y": {"field": "gain_percent", "label": "gain over b = 0 (%)"},
        "reference": {"kind": "hline", "y": 0.0},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec, fh, indent=2, sort_keys=True)
        fh.write("\n")
