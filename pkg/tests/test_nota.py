import numpy as np
import pytest

from stochrank.data import PredictiveDistribution
from stochrank.nota import (
    NotaFeatureSpec,
    NotaInstance,
    build_nota_dataset,
    extract_nota_features,
    save_nota_dataset,
    train_eval_nota,
)
from stochrank.synth import SyntheticCorpusSpec, generate_synthetic_corpus

from conftest import make_instance


@pytest.fixture(scope="module")
def corpus100():
    return generate_synthetic_corpus(SyntheticCorpusSpec(instance_count=100, vocab_size=150, seed=3))


def test_build_counts_and_truncation(corpus100):
    dataset = build_nota_dataset(corpus100, seed=0)
    assert len(dataset) == 100
    labels = [d.label for d in dataset]
    assert sum(labels) == 50
    assert all(d.instance.k == 9 for d in dataset)
    for d in dataset:
        rel = sum(d.instance.labels)
        assert rel == (0 if d.label == 1 else 1)


def test_build_k2_boundary():
    corpus = [make_instance(f"q{i}", texts=["alpha beta", "gamma delta"], rel=0) for i in range(4)]
    dataset = build_nota_dataset(corpus, seed=0)
    assert all(d.instance.k == 1 for d in dataset)
    answerable = [d for d in dataset if d.label == 0]
    assert answerable and all(sum(d.instance.labels) == 1 for d in answerable)


def test_build_deterministic(corpus100):
    assert build_nota_dataset(corpus100, seed=4) == build_nota_dataset(corpus100, seed=4)


def test_build_rejects_multi_relevant():
    from stochrank.data import DialogueInstance

    base = make_instance()
    bad = DialogueInstance(
        id="bad", context=base.context, candidates=base.candidates, labels=(1, 1, 0)
    )
    with pytest.raises(ValueError, match="bad"):
        build_nota_dataset([bad], seed=0)


def _nota_with_dists(k=10, seed=0):
    rng = np.random.default_rng(seed)
    inst = make_instance("q0", texts=[f"resp number {j}" for j in range(k)], rel=0)
    nota = build_nota_dataset([inst], seed=1)[0]
    dists = {
        "ensemble": PredictiveDistribution(
            instance_id="q0", scores=rng.random((5, k - 1)), source="ensemble"
        ),
        "dropout": PredictiveDistribution(
            instance_id="q0", scores=rng.random((10, k - 1)), source="dropout"
        ),
    }
    return nota, dists


def test_feature_dimensions():
    nota, dists = _nota_with_dists()
    means_only = extract_nota_features(nota, dists, NotaFeatureSpec(blocks=("sorted_means",)))
    assert means_only.shape == (9,)
    two = extract_nota_features(
        nota, dists, NotaFeatureSpec(blocks=("sorted_means", "sorted_vars_dropout"))
    )
    assert two.shape == (18,)
    all_three = extract_nota_features(nota, dists, NotaFeatureSpec(blocks=tuple(reversed(
        ("sorted_means", "sorted_vars_ensemble", "sorted_vars_dropout")))))
    assert all_three.shape == (27,)


def test_block_order_is_canonical():
    spec = NotaFeatureSpec(blocks=("sorted_vars_dropout", "sorted_means"))
    assert spec.blocks == ("sorted_means", "sorted_vars_dropout")


def test_feature_permutation_invariance():
    nota, dists = _nota_with_dists()
    spec = NotaFeatureSpec(blocks=("sorted_means", "sorted_vars_ensemble", "sorted_vars_dropout"))
    base = extract_nota_features(nota, dists, spec)
    perm = np.random.default_rng(0).permutation(9)
    permuted = {
        key: PredictiveDistribution(
            instance_id=d.instance_id, scores=d.scores[:, perm], source=d.source
        )
        for key, d in dists.items()
    }
    from stochrank.data import DialogueInstance

    inst_perm = DialogueInstance(
        id=nota.instance.id,
        context=nota.instance.context,
        candidates=tuple(nota.instance.candidates[j] for j in perm),
        labels=tuple(nota.instance.labels[j] for j in perm),
    )
    nota_perm = NotaInstance(base_id=nota.base_id, instance=inst_perm, label=nota.label)
    np.testing.assert_array_equal(extract_nota_features(nota_perm, permuted, spec), base)


def test_missing_source_error():
    nota, dists = _nota_with_dists()
    with pytest.raises(ValueError, match="ensemble"):
        extract_nota_features(
            nota, {"dropout": dists["dropout"]}, NotaFeatureSpec(blocks=("sorted_vars_ensemble",))
        )


def _nota_item(base_id, label, features):
    from stochrank.data import truncate_candidates

    full = make_instance(base_id, texts=[f"resp {j}" for j in range(3)], rel=0)
    keep = {1, 2} if label == 1 else {0, 1}
    return NotaInstance(
        base_id=base_id,
        instance=truncate_candidates(full, keep),
        label=label,
        features=tuple(float(v) for v in features),
    )


def _synthetic_feature_dataset(n, separable, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = int(i % 2)
        if separable:
            feats = (label + 0.01 * rng.random(), rng.random())
        else:
            feats = rng.random(2)
        out.append(_nota_item(f"q{i}", label, feats))
    return out


def test_perfectly_separable_f1_one():
    dataset = _synthetic_feature_dataset(60, separable=True, seed=1)
    result = train_eval_nota(dataset, folds=5, seed=0)
    assert result.mean_f1 == 1.0
    assert len(result.per_fold_f1) == 5


def test_determinism():
    dataset = _synthetic_feature_dataset(40, separable=False)
    a = train_eval_nota(dataset, folds=4, seed=2)
    b = train_eval_nota(dataset, folds=4, seed=2)
    assert a == b


def test_single_class_rejected():
    dataset = [d for d in _synthetic_feature_dataset(40, separable=False) if d.label == 1]
    with pytest.raises(ValueError, match="single-class"):
        train_eval_nota(dataset, folds=2, seed=0)


def test_missing_features_rejected(corpus100):
    dataset = build_nota_dataset(corpus100[:10], seed=0)
    with pytest.raises(ValueError, match="features"):
        train_eval_nota(dataset, folds=2, seed=0)


def test_fold_requirements():
    dataset = _synthetic_feature_dataset(4, separable=False)
    with pytest.raises(ValueError, match="folds"):
        train_eval_nota(dataset, folds=1, seed=0)
    with pytest.raises(ValueError, match="smaller"):
        train_eval_nota(dataset[:2], folds=4, seed=0)


def test_save_nota_dataset_roundtrip(tmp_path, corpus100):
    dataset = build_nota_dataset(corpus100[:10], seed=0)
    path = tmp_path / "nota.jsonl"
    save_nota_dataset(dataset, path)
    import json

    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == 10
    assert all("nota_label" in rec for rec in lines)
    assert {rec["nota_label"] for rec in lines} == {0, 1}
