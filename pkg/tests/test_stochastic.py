import numpy as np
import pytest

from stochrank.data import PredictiveDistribution
from stochrank.ranker import draw_mask, forward, init_params
from stochrank.stochastic import (
    DropoutSpec,
    EnsembleSpec,
    distribution_stats,
    load_run_file,
    predict_deterministic,
    predict_dropout,
    predict_ensemble,
    save_run_file,
)

from conftest import make_instance


def dist(scores, source="ensemble"):
    return PredictiveDistribution(instance_id="q", scores=np.array(scores, dtype=float), source=source)


def test_ensemble_spec_invariants():
    with pytest.raises(ValueError, match="M >= 2"):
        EnsembleSpec(member_seeds=(1,))
    with pytest.raises(ValueError, match="distinct"):
        EnsembleSpec(member_seeds=(1, 1))


def test_identical_members_zero_variance(small_stats):
    inst = make_instance()
    params = init_params(seed=4)
    out = predict_ensemble([params, params, params], inst, small_stats)
    assert out.source == "ensemble" and out.n_samples == 3
    _, var, _ = distribution_stats(out)
    assert np.all(var <= 1e-12)


def test_ensemble_matrix_matches_forward_oracle(small_stats):
    inst = make_instance(texts=["fine thanks", "purple dishwasher"])
    members = [init_params(seed=s) for s in (1, 2)]
    from stochrank.ranker import extract_features

    expected = np.array(
        [
            [forward(m, extract_features(inst.context, c.text, small_stats)) for c in inst.candidates]
            for m in members
        ]
    )
    out = predict_ensemble(members, inst, small_stats)
    np.testing.assert_allclose(out.scores, expected, atol=1e-15)
    assert out.sample_seeds == (1, 2)


def test_ensemble_feature_mismatch_error(small_stats):
    inst = make_instance()
    a = init_params(d=8, seed=1)
    b = init_params(d=4, seed=2)
    with pytest.raises(ValueError, match="dimensionality"):
        predict_ensemble([a, b], inst, small_stats)


def test_dropout_spec_validation():
    with pytest.raises(ValueError, match="T >= 2"):
        DropoutSpec(passes=1)
    with pytest.raises(ValueError, match="strictly in"):
        DropoutSpec(dropout_rate=0.0)
    with pytest.raises(ValueError, match="mask_sharing"):
        DropoutSpec(mask_sharing="sometimes")


def test_near_zero_dropout_equals_deterministic(small_stats):
    inst = make_instance()
    params = init_params(dropout_rate=1e-9, seed=6)
    spec = DropoutSpec(passes=4, dropout_rate=1e-9, pass_seed_base=0)
    out = predict_dropout(params, spec, inst, small_stats)
    det = predict_deterministic(params, inst, small_stats)
    for row in out.scores:
        np.testing.assert_allclose(row, det.scores[0], atol=1e-9)
    _, var, _ = distribution_stats(out)
    assert np.all(var <= 1e-12)


def test_dropout_seeded_determinism(small_stats):
    inst = make_instance()
    params = init_params(dropout_rate=0.3, seed=6)
    spec = DropoutSpec(passes=5, dropout_rate=0.3, pass_seed_base=42)
    a = predict_dropout(params, spec, inst, small_stats)
    b = predict_dropout(params, spec, inst, small_stats)
    np.testing.assert_array_equal(a.scores, b.scores)
    assert a.sample_seeds == (42, 43, 44, 45, 46)


def test_dropout_matches_scripted_mask_forwards(small_stats):
    inst = make_instance(texts=["fine thanks", "weather is nice"])
    params = init_params(dropout_rate=0.4, seed=9)
    spec = DropoutSpec(passes=3, dropout_rate=0.4, pass_seed_base=100)
    out = predict_dropout(params, spec, inst, small_stats)
    from stochrank.ranker import extract_features

    feats = [extract_features(inst.context, c.text, small_stats) for c in inst.candidates]
    for t in range(3):
        mask = draw_mask(np.random.default_rng(100 + t), params.h, 0.4)
        expected = [forward(params, x, mask) for x in feats]
        np.testing.assert_allclose(out.scores[t], expected, atol=1e-15)


def test_dropout_rate_mismatch_rejected(small_stats):
    inst = make_instance()
    params = init_params(dropout_rate=0.1, seed=6)
    with pytest.raises(ValueError, match="trained with"):
        predict_dropout(params, DropoutSpec(passes=2, dropout_rate=0.2), inst, small_stats)


def test_stats_hand_arithmetic():
    mean, var, _ = distribution_stats(dist([[0.6], [0.8]]))
    assert mean[0] == pytest.approx(0.7)
    assert var[0] == pytest.approx(0.02)


def test_covariance_hand_arithmetic():
    _, _, cov = distribution_stats(dist([[0.6, 0.4], [0.8, 0.2]]))
    assert cov[0, 1] == pytest.approx(-0.02)
    assert cov[1, 0] == pytest.approx(-0.02)


def test_constant_column_zero_variance():
    mean, var, _ = distribution_stats(dist([[0.3, 0.5], [0.3, 0.5], [0.3, 0.5]]))
    np.testing.assert_allclose(mean, [0.3, 0.5])
    np.testing.assert_array_equal(var, [0.0, 0.0])


def test_single_sample_zero_by_convention():
    mean, var, cov = distribution_stats(dist([[0.4, 0.6]], source="deterministic"))
    np.testing.assert_allclose(mean, [0.4, 0.6])
    assert np.all(var == 0.0) and np.all(cov == 0.0)


def test_covariance_symmetric_psd_and_diag(rng):
    for _ in range(20):
        s, k = int(rng.integers(2, 10)), int(rng.integers(2, 8))
        d = dist(rng.random((s, k)))
        mean, var, cov = distribution_stats(d)
        np.testing.assert_allclose(cov, cov.T, atol=1e-14)
        np.testing.assert_array_equal(var, np.diag(cov))
        assert np.linalg.eigvalsh(cov).min() >= -1e-10


def test_mean_permutation_equivariance(rng):
    scores = rng.random((5, 6))
    perm = rng.permutation(6)
    m1, _, _ = distribution_stats(dist(scores))
    m2, _, _ = distribution_stats(dist(scores[:, perm]))
    np.testing.assert_allclose(m2, m1[perm])


def test_run_file_roundtrip(tmp_path, small_corpus, small_stats):
    members = [init_params(seed=s) for s in (1, 2, 3)]
    instances = small_corpus[:5]
    dists = [predict_ensemble(members, inst, small_stats) for inst in instances]
    path = tmp_path / "run.tsv"
    save_run_file(dists, instances, path, config_hash="abc123")
    loaded = load_run_file(path, instances)
    assert len(loaded) == 5
    assert loaded[0].source == "ensemble"
    assert loaded[0].sample_seeds == (1, 2, 3)
    for orig, back in zip(dists, loaded):
        # 9 significant digits survive the trip
        np.testing.assert_allclose(back.scores, orig.scores, atol=1e-8)


def test_run_file_rejects_garbage(tmp_path, small_corpus):
    path = tmp_path / "bad.tsv"
    path.write_text("no header\n")
    with pytest.raises(ValueError, match="header"):
        load_run_file(path, small_corpus)
