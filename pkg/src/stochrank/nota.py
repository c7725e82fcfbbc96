"""Unanswerable-context (NOTA) dataset construction and classification.

A NOTA instance is a candidate list with its relevant response removed;
an answerable instance loses one non-relevant candidate instead, so both
carry k-1 candidates. The classifier input is a concatenation of sorted
per-candidate score blocks (means and/or variances), which makes the
representation invariant to candidate order; a raw-order variant exists
behind a flag. Classification uses a 100-tree random forest evaluated
with stratified cross-validation and macro F1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.metrics import f1_score
from sklearn.model_selection import StratifiedKFold

from .data import DialogueInstance, PredictiveDistribution, instance_to_record, truncate_candidates
from .stochastic import distribution_stats

BLOCKS = ("sorted_means", "sorted_vars_ensemble", "sorted_vars_dropout")


@dataclass(frozen=True)
class NotaFeatureSpec:
    blocks: tuple[str, ...] = ("sorted_means",)
    sort: bool = True  # raw candidate order kept when False (comparison flag)

    def __post_init__(self):
        unknown = set(self.blocks) - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown feature blocks: {sorted(unknown)}")
        # fixed block order: means, ensemble variances, dropout variances
        ordered = tuple(b for b in BLOCKS if b in self.blocks)
        object.__setattr__(self, "blocks", ordered)
        if not ordered:
            raise ValueError("feature spec needs at least one block")


@dataclass(frozen=True)
class NotaInstance:
    base_id: str
    instance: DialogueInstance  # truncated candidate list (k-1 candidates)
    label: int  # 1 = NOTA (no relevant candidate), 0 = answerable
    features: tuple[float, ...] | None = None

    def __post_init__(self):
        rel = sum(self.instance.labels)
        if self.label == 1 and rel != 0:
            raise ValueError(f"NOTA instance {self.base_id!r} still has a relevant candidate")
        if self.label == 0 and rel != 1:
            raise ValueError(
                f"answerable instance {self.base_id!r} must keep exactly one relevant candidate"
            )


def build_nota_dataset(corpus: list[DialogueInstance], seed: int) -> list[NotaInstance]:
    """Seeded half/half split: NOTA instances lose the relevant candidate,
    answerable ones lose one random non-relevant candidate."""
    for inst in corpus:
        if sum(inst.labels) != 1:
            raise ValueError(f"instance {inst.id!r} must have exactly one relevant candidate")
        if inst.k < 2:
            raise ValueError(f"instance {inst.id!r} needs at least 2 candidates")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(corpus))
    n_nota = (len(corpus) + 1) // 2
    nota_positions = set(int(i) for i in order[:n_nota])

    out: list[NotaInstance] = []
    for pos, inst in enumerate(corpus):
        rel = inst.relevant_indices()[0]
        if pos in nota_positions:
            keep = set(range(inst.k)) - {rel}
            label = 1
        else:
            non_idx = [j for j in range(inst.k) if j != rel]
            drop = int(rng.choice(non_idx))
            keep = set(range(inst.k)) - {drop}
            label = 0
        out.append(NotaInstance(base_id=inst.id, instance=truncate_candidates(inst, keep), label=label))
    return out


def extract_nota_features(
    inst: NotaInstance, dists: dict[str, PredictiveDistribution], spec: NotaFeatureSpec
) -> np.ndarray:
    """Concatenated per-candidate blocks, each sorted descending when spec.sort."""
    parts: list[np.ndarray] = []
    for block in spec.blocks:
        source = "dropout" if block in ("sorted_means", "sorted_vars_dropout") else "ensemble"
        dist = dists.get(source)
        if dist is None:
            raise ValueError(f"block {block!r} needs a {source!r} distribution")
        if dist.k != inst.instance.k:
            raise ValueError(
                f"{source} distribution has {dist.k} candidates, instance has {inst.instance.k}"
            )
        mean, var, _ = distribution_stats(dist)
        values = mean if block == "sorted_means" else var
        if spec.sort:
            values = np.sort(values)[::-1]
        parts.append(values)
    return np.concatenate(parts)


def attach_features(
    dataset: list[NotaInstance],
    dists_by_id: dict[str, dict[str, PredictiveDistribution]],
    spec: NotaFeatureSpec,
) -> list[NotaInstance]:
    return [
        replace(
            inst,
            features=tuple(float(v) for v in extract_nota_features(inst, dists_by_id[inst.base_id], spec)),
        )
        for inst in dataset
    ]


@dataclass(frozen=True)
class NotaEvalResult:
    mean_f1: float
    per_fold_f1: tuple[float, ...]
    std_f1: float


def train_eval_nota(dataset: list[NotaInstance], folds: int = 5, seed: int = 0) -> NotaEvalResult:
    """Stratified k-fold random-forest evaluation, macro F1 per fold."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(dataset) < folds:
        raise ValueError("dataset smaller than fold count")
    if any(inst.features is None for inst in dataset):
        raise ValueError("dataset instances carry no features; run attach_features first")
    X = np.array([inst.features for inst in dataset])
    y = np.array([inst.label for inst in dataset])
    if len(np.unique(y)) < 2:
        raise ValueError("single-class dataset")

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    scores = []
    for fold, (train_idx, test_idx) in enumerate(splitter.split(X, y)):
        forest = RandomForestClassifier(
            n_estimators=100,
            criterion="gini",
            max_features="sqrt",
            bootstrap=True,
            random_state=(seed * 1000 + fold) % 2**32,  # sklearn caps at 32 bits
        )
        forest.fit(X[train_idx], y[train_idx])
        pred = forest.predict(X[test_idx])
        scores.append(float(f1_score(y[test_idx], pred, average="macro")))
    arr = np.array(scores)
    return NotaEvalResult(mean_f1=float(arr.mean()), per_fold_f1=tuple(scores), std_f1=float(arr.std()))


def save_nota_dataset(dataset: list[NotaInstance], path) -> None:
    """Corpus format plus a nota_label field."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in dataset:
            record = instance_to_record(inst.instance)
            record["nota_label"] = inst.label
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def save_nota_eval_csv(results: dict[str, NotaEvalResult], path, config_hash: str = "") -> None:
    """Side-by-side feature-spec columns with mean (std) cells."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        names = list(results)
        fh.write(",".join(["feature_spec"] + names) + "\n")
        cells = [f"{r.mean_f1:.3f} ({r.std_f1:.2f})" for r in results.values()]
        fh.write(",".join(["f1_macro"] + cells) + "\n")
