"""Ranking effectiveness, significance testing, and the shift experiment grid.

Grid cells train on a (source corpus, train-NS) pair and evaluate on a
(target corpus, test-NS) pair: R@1 of deterministic and ensemble scorers,
balanced ECE for both, a validation-selected risk-aversion gain, and a
paired t-test of ensemble vs deterministic per-query R@1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .calibration import balanced_ece
from .data import DialogueInstance, RankedList
from .negatives import ResponsePool, pool_from_corpus, sample_negatives
from .ranker import TrainConfig, corpus_feature_table, train
from .risk import rerank, select_b
from .stochastic import predict_deterministic, predict_ensemble
from .text import corpus_stats


def recall_at_k(ranked: RankedList, labels, n: int, k: int) -> float:
    """Fraction of relevant candidates ranked in the top K of n candidates."""
    labels = [int(y) for y in labels]
    if len(labels) != n:
        raise ValueError(f"expected {n} labels, got {len(labels)}")
    if k > n:
        raise ValueError(f"cutoff K={k} exceeds n={n}")
    total_rel = sum(labels)
    if total_rel == 0:
        raise ValueError("no relevant candidate; list should have been excluded upstream")
    hits = sum(labels[j] for j in ranked.ordering[:k])
    return hits / total_rel


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    degenerate: bool = False


def paired_t_test(per_query_a, per_query_b) -> TTestResult:
    """Two-sided paired Student's t-test on per-query metric differences.

    All-zero differences give (t=0, p=1); nonzero constant differences have
    zero sample variance and are reported as p=0 with the degenerate flag.
    """
    a = np.asarray(per_query_a, dtype=float)
    b = np.asarray(per_query_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    n = len(a)
    if n < 2:
        raise ValueError("need at least 2 paired observations")
    diff = a - b
    if np.all(diff == 0.0):
        return TTestResult(t=0.0, p=1.0)
    sd = diff.std(ddof=1)
    mean = diff.mean()
    if sd == 0.0:
        return TTestResult(t=math.copysign(math.inf, mean), p=0.0, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * sps.t.sf(abs(t), df=n - 1)
    return TTestResult(t=float(t), p=float(p))


@dataclass(frozen=True)
class GridCell:
    source: str
    target: str
    train_ns: str
    test_ns: str
    no_shift: bool
    recall_deterministic: float
    recall_ensemble: float
    ece_deterministic: float
    ece_ensemble: float
    risk_b: float
    risk_gain_percent: float
    t_stat: float
    p_value: float
    significant: bool


@dataclass(frozen=True)
class ExperimentGrid:
    sources: dict[str, list[DialogueInstance]]
    targets: dict[str, list[DialogueInstance]]
    train_ns: str = "bm25"
    test_ns: tuple[str, ...] = ("bm25",)
    cells: tuple[GridCell, ...] = ()


def build_ns_lists(
    corpus: list[DialogueInstance],
    pool: ResponsePool,
    strategy: str,
    k: int,
    seed: int,
) -> list[DialogueInstance]:
    """Rebuild each instance as ground truth + (k-1) strategy-sampled negatives."""
    out = []
    for i, inst in enumerate(corpus):
        rel = inst.relevant_indices()[0]
        gt = inst.candidates[rel]
        negs = sample_negatives(
            pool, inst.context, strategy, k - 1, seed=seed + i, exclude={gt.id}
        )
        out.append(
            DialogueInstance(
                id=inst.id,
                context=inst.context,
                candidates=(gt, *negs),
                labels=(1,) + (0,) * (k - 1),
            )
        )
    return out


def _per_query_recall(dists, instances, b: float = 0.0) -> list[float]:
    by_id = {i.id: i for i in instances}
    return [
        recall_at_k(rerank(d, by_id[d.instance_id], b), by_id[d.instance_id].labels,
                    by_id[d.instance_id].k, 1)
        for d in dists
    ]


def run_experiment_cell(
    source_name: str,
    source: list[DialogueInstance],
    target_name: str,
    target: list[DialogueInstance],
    train_ns: str,
    test_ns: str,
    seeds: tuple[int, ...],
    cfg: TrainConfig,
    k: int = 10,
    b_grid=(0.0, 0.1, 0.25, 0.5, 1.0),
    alpha: float = 0.05,
) -> GridCell:
    train_pool = pool_from_corpus(source)
    target_pool = pool_from_corpus(target)

    train_corpus = build_ns_lists(source, train_pool, train_ns, k, seed=seeds[0])
    test_corpus = build_ns_lists(target, target_pool, test_ns, k, seed=seeds[0] + 7919)

    stats = corpus_stats(train_corpus)
    feats = corpus_feature_table(train_corpus, stats)
    members = [
        train(train_corpus, cfg, seed, stats, feature_table=feats) for seed in seeds
    ]
    baseline = members[0]

    test_feats = corpus_feature_table(test_corpus, stats)
    det_dists = [
        predict_deterministic(baseline, inst, stats, features=test_feats[inst.id])
        for inst in test_corpus
    ]
    ens_dists = [
        predict_ensemble(members, inst, stats, features=test_feats[inst.id])
        for inst in test_corpus
    ]

    det_recalls = _per_query_recall(det_dists, test_corpus)
    ens_recalls = _per_query_recall(ens_dists, test_corpus)
    ttest = paired_t_test(ens_recalls, det_recalls)

    ece_det = balanced_ece(det_dists, test_corpus, reducer="deterministic", seed=seeds[0]).ece
    ece_ens = balanced_ece(ens_dists, test_corpus, reducer="mean", seed=seeds[0]).ece

    # risk aversion: select b on the first half of the target, report on the rest
    half = max(1, len(test_corpus) // 2)
    by_id = {i.id: i for i in test_corpus}
    val_pairs = [(d, by_id[d.instance_id]) for d in ens_dists[:half]]
    eval_pairs = [(d, by_id[d.instance_id]) for d in ens_dists[half:]] or val_pairs
    chosen_b = select_b(val_pairs, b_grid)
    base = float(np.mean(_per_query_recall([d for d, _ in eval_pairs],
                                           [i for _, i in eval_pairs], 0.0)))
    at_b = float(np.mean(_per_query_recall([d for d, _ in eval_pairs],
                                           [i for _, i in eval_pairs], chosen_b)))
    gain = 0.0 if base == 0 else 100.0 * (at_b - base) / base

    return GridCell(
        source=source_name,
        target=target_name,
        train_ns=train_ns,
        test_ns=test_ns,
        no_shift=(source_name == target_name and train_ns == test_ns),
        recall_deterministic=float(np.mean(det_recalls)),
        recall_ensemble=float(np.mean(ens_recalls)),
        ece_deterministic=ece_det,
        ece_ensemble=ece_ens,
        risk_b=chosen_b,
        risk_gain_percent=gain,
        t_stat=ttest.t,
        p_value=ttest.p,
        significant=(not ttest.degenerate) and ttest.p < alpha,
    )


def run_experiment_grid(grid: ExperimentGrid, seeds: tuple[int, ...],
                        cfg: TrainConfig | None = None, k: int = 10) -> ExperimentGrid:
    cfg = cfg or TrainConfig()
    if not grid.sources or not grid.targets:
        raise ValueError("grid needs at least one source and one target corpus")
    cells = []
    for source_name, source in grid.sources.items():
        for target_name, target in grid.targets.items():
            for test_ns in grid.test_ns:
                cells.append(
                    run_experiment_cell(
                        source_name, source, target_name, target,
                        grid.train_ns, test_ns, seeds, cfg, k=k,
                    )
                )
    return ExperimentGrid(
        sources=grid.sources, targets=grid.targets, train_ns=grid.train_ns,
        test_ns=grid.test_ns, cells=tuple(cells),
    )


def save_grid_csv(grid: ExperimentGrid, path, config_hash: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["train_source", "test_target", "train_ns", "test_ns", "no_shift",
             "recall_at_1_deterministic", "recall_at_1_ensemble",
             "ece_deterministic", "ece_ensemble",
             "risk_b", "risk_gain_percent", "t_stat", "p_value", "significant"]
        )
        for cell in grid.cells:
            writer.writerow(
                [cell.source, cell.target, cell.train_ns, cell.test_ns, int(cell.no_shift),
                 f"{cell.recall_deterministic:.9g}", f"{cell.recall_ensemble:.9g}",
                 f"{cell.ece_deterministic:.9g}", f"{cell.ece_ensemble:.9g}",
                 f"{cell.risk_b:.6g}", f"{cell.risk_gain_percent:.9g}",
                 f"{cell.t_stat:.9g}", f"{cell.p_value:.9g}", int(cell.significant)]
            )
