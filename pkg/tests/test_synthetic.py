import numpy as np
import pytest

from nkgkit.errors import ConfigError
from nkgkit.models import EmbeddingTable, Triple, TripleSet
from nkgkit.synthetic import (
    GeneratorSpec,
    GroundTruth,
    all_triples,
    build_truth,
    sample_binary_positive_only,
    sample_regression,
)
from nkgkit.training import InitStrategy, TrainConfig, init_embeddings, train
from nkgkit.models import CNkg
from nkgkit.metrics import weighted_mse


def test_vector_offset_zero():
    truth = GroundTruth("vector_offset", np.array([[1.0, 2.0], [1.0, 2.0]]), np.zeros((1, 2)))
    assert truth(Triple(0, 0, 1)) == 0.0


def test_concat_linear_truth_example():
    truth = GroundTruth("concat_linear", np.array([[1.0, 0.0], [0.0, 1.0]]), np.ones((1, 4)))
    assert truth(Triple(0, 0, 1)) == 2.0


def test_build_truth_shapes():
    for kind, width in [("concat_linear", 6), ("vector_offset", 3), ("mip", 3), ("logistic", 6)]:
        t = build_truth(GeneratorSpec(kind, N=7, d=3, K=2, seed=1))
        assert t.embeddings.shape == (7, 3)
        assert t.relations.shape == (2, width)
    assert build_truth(GeneratorSpec("mip", bias=-2.5)).bias == -2.5
    assert build_truth(GeneratorSpec("concat_linear", bias=-2.5)).bias == 0.0


def test_logistic_vanishes_for_very_negative_bias():
    r = np.random.default_rng(0)
    ts = TripleSet(r.integers(0, 100, 10000), r.integers(0, 3, 10000), r.integers(0, 100, 10000))
    base = build_truth(GeneratorSpec("logistic", N=100, d=10, K=3, bias=0.0, seed=0))
    raw = np.log(base.batch(ts) / (1 - base.batch(ts)))
    # b = -10 is not far enough for standard-normal parameters at d = 10
    at_minus_10 = GroundTruth("logistic", base.embeddings, base.relations, -10.0).batch(ts)
    assert at_minus_10.max() > 1e-3
    assert raw.max() < 30
    far = GroundTruth("logistic", base.embeddings, base.relations, -40.0).batch(ts)
    assert far.max() < 1e-3


def test_noiseless_regression_is_exact():
    ds = sample_regression(GeneratorSpec("concat_linear", N=10, d=3, K=2, noise_stds=(0.0,), seed=0), 500)
    np.testing.assert_array_equal(ds.triples.labels, ds.truth.batch(ds.triples))


def test_noise_level_fraction():
    ds = sample_regression(GeneratorSpec("concat_linear", N=10, d=2, K=2, seed=1), 100000)
    frac = np.mean(ds.triples.noise_scales == 1.0)
    assert 0.495 <= frac <= 0.505
    assert set(np.unique(ds.triples.noise_scales)) == {1.0, 5.0}


def test_triples_uniform_over_grid():
    ds = sample_regression(GeneratorSpec("vector_offset", N=5, d=2, K=3, seed=2), 30000)
    counts = np.bincount(ds.triples.relations, minlength=3) / 30000
    np.testing.assert_allclose(counts, 1 / 3, atol=0.02)
    np.testing.assert_allclose(np.bincount(ds.triples.heads, minlength=5) / 30000, 0.2, atol=0.02)


def test_conditional_unbiasedness():
    spec = GeneratorSpec("concat_linear", N=4, d=2, K=1, noise_stds=(1.0,), seed=3)
    truth = build_truth(spec)
    # every sample on one fixed triple: a 1x1x1 design sharing the truth row 2
    fixed = GroundTruth("concat_linear", truth.embeddings[[2]], truth.relations)
    ds = sample_regression(GeneratorSpec("concat_linear", N=1, d=2, K=1, noise_stds=(1.0,), seed=3),
                           100000, truth=fixed)
    gamma = fixed(Triple(0, 0, 0))
    assert abs(ds.triples.labels.mean() - gamma) < 4 / np.sqrt(100000)
    assert abs(ds.triples.labels.mean() - gamma) < 0.0129  # 2.58 / sqrt(n) band


def test_relation_noise_tiers():
    spec = GeneratorSpec("concat_linear", K=3, relation_noise_stds=(1.0, 2.0, 3.0), seed=0)
    ds = sample_regression(spec, 300)
    np.testing.assert_array_equal(ds.triples.noise_scales, np.array([1.0, 2.0, 3.0])[ds.triples.relations])


def test_variant_mismatch():
    with pytest.raises(ConfigError):
        sample_regression(GeneratorSpec("mip"), 10)
    with pytest.raises(ConfigError):
        sample_binary_positive_only(GeneratorSpec("concat_linear"))


def test_spec_validation():
    with pytest.raises(ConfigError):
        GeneratorSpec("nope")
    with pytest.raises(ConfigError):
        GeneratorSpec(N=0)
    with pytest.raises(ConfigError):
        GeneratorSpec(noise_stds=(-1.0,))


def test_binary_gamma_zero_gives_empty():
    spec = GeneratorSpec("mip", N=5, d=2, K=2, bias=-np.inf, seed=0)
    assert len(sample_binary_positive_only(spec)) == 0


def test_binary_gamma_one_keeps_everything():
    spec = GeneratorSpec("mip", N=2, d=1, K=1, seed=0)
    truth = GroundTruth("mip", np.ones((2, 1)), np.ones((1, 1)), np.inf)
    ds = sample_binary_positive_only(spec, truth=truth)
    assert len(ds) == 4
    assert ds.graph.sum() == 4


def test_binary_retained_fraction_matches_mean_gamma():
    spec = GeneratorSpec("logistic", N=100, d=10, K=3, seed=5)
    ds = sample_binary_positive_only(spec)
    p = ds.truth.batch(all_triples(100, 3))
    se = np.sqrt(np.sum(p * (1 - p))) / p.size
    assert abs(len(ds) / p.size - p.mean()) < 3 * se


def test_binary_max_n():
    ds = sample_binary_positive_only(GeneratorSpec("mip", N=30, d=4, K=2, seed=0), max_n=10)
    assert len(ds) == 10
    assert np.all(ds.triples.labels == 1)


def test_reproducible_bytes():
    a = sample_regression(GeneratorSpec(seed=9), 1000)
    b = sample_regression(GeneratorSpec(seed=9), 1000)
    assert a.triples == b.triples
    assert a.triples.labels.tobytes() == b.triples.labels.tobytes()


def test_truth_dict_roundtrip():
    t = build_truth(GeneratorSpec("mip", seed=1))
    u = GroundTruth.from_dict(t.to_dict())
    ts = all_triples(10, 2)
    np.testing.assert_array_equal(t.batch(ts), u.batch(ts))


def test_vector_offset_misspecified_but_width_helps():
    # noiseless vector-offset data fit by C-NKG with true embeddings frozen
    risks = {32: [], 256: []}
    for seed in range(5):
        spec = GeneratorSpec("vector_offset", N=20, d=2, K=1, noise_stds=(0.0,), seed=seed)
        ds = sample_regression(spec, 400)
        for width in risks:
            emb = init_embeddings(InitStrategy("external_frozen", source=ds.truth.embeddings), 20, 2)
            m = CNkg.create(1, 2, (width,), rng=seed)
            train(m, emb, ds.triples, TrainConfig(epochs=40, batch_size=32, seed=seed))
            risks[width].append(weighted_mse(m, emb, ds.triples, 1.0, ds.truth))
    assert min(risks[32] + risks[256]) > 0
    assert np.mean(risks[256]) < np.mean(risks[32])
