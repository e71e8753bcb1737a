import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nkgkit import io as kio
from nkgkit.errors import ConfigError, ShapeError, TrainingDivergedError
from nkgkit.models import CNkg, ConcatLinear, EmbeddingTable, Triple, TripleSet, batch_score
from nkgkit.synthetic import GeneratorSpec, sample_regression
from nkgkit.training import (
    Adam,
    InitStrategy,
    Sgd,
    TrainConfig,
    WeightScheme,
    compute_weights,
    contrastive_loss,
    harmonic_mean_variance,
    init_embeddings,
    train,
    weighted_risk,
)


def sigma_set(sigmas, rel=None):
    n = len(sigmas)
    return TripleSet(np.zeros(n, int), np.zeros(n, int) if rel is None else rel, np.zeros(n, int),
                     np.zeros(n), sigmas)


# ---------------------------------------------------------------- weights

def test_inverse_variance_example():
    w = compute_weights(WeightScheme("inverse_variance"), sigma_set([1.0, 5.0]))
    assert harmonic_mean_variance([1.0, 5.0]) == pytest.approx(25 / 13, abs=1e-12)
    np.testing.assert_allclose(w, [25 / 13, 1 / 13], atol=1e-12)
    np.testing.assert_allclose(w, [1.9231, 0.07692], atol=1e-4)
    assert w.mean() == pytest.approx(1.0, abs=1e-12)


def test_inverse_variance_homogeneous_noise():
    np.testing.assert_allclose(compute_weights(WeightScheme("inverse_variance"), sigma_set([2.0] * 7)), 1.0)


def test_capped_example():
    w = compute_weights(WeightScheme("capped", cap=1.0), sigma_set(np.sqrt([0.5, 4.0])))
    np.testing.assert_allclose(w, [1.0, 0.25], atol=1e-15)


def test_relation_ratio():
    ts = sigma_set([1.0] * 4, rel=np.array([0, 1, 2, 1]))
    w = compute_weights(WeightScheme("relation_ratio", ratio=10.0, low_noise_relations=(1,), normalize=False), ts)
    np.testing.assert_array_equal(w, [1, 10, 1, 10])
    w = compute_weights(WeightScheme("relation_ratio", ratio=10.0, low_noise_relations=(1,)), ts)
    assert w.mean() == pytest.approx(1.0, abs=1e-12)
    assert w[1] / w[0] == pytest.approx(10.0)


def test_missing_sigma_is_config_error():
    ts = TripleSet([0], [0], [0], [1.0])
    for kind in ("inverse_variance", "capped"):
        with pytest.raises(ConfigError):
            compute_weights(WeightScheme(kind), ts)


def test_zero_sigma_inverse_variance_is_config_error():
    with pytest.raises(ConfigError):
        compute_weights(WeightScheme("inverse_variance"), sigma_set([0.0, 1.0]))


def test_bad_schemes_rejected():
    with pytest.raises(ConfigError):
        WeightScheme("magic")
    with pytest.raises(ConfigError):
        WeightScheme("capped", cap=0.0)
    with pytest.raises(ConfigError):
        WeightScheme("relation_ratio", ratio=-1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=50))
def test_inverse_variance_identities(sigmas):
    s = np.array(sigmas)
    w = compute_weights(WeightScheme("inverse_variance"), sigma_set(s))
    assert np.all(w > 0) and np.all(np.isfinite(w))
    assert abs(w.mean() - 1.0) < 1e-12
    prod = w * s ** 2
    np.testing.assert_allclose(prod, harmonic_mean_variance(s), rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=50), st.floats(0.01, 10.0))
def test_capped_weights_bounded_by_one(sigmas, B):
    w = compute_weights(WeightScheme("capped", cap=B), sigma_set(sigmas))
    assert np.all(w > 0) and np.max(w) <= 1.0


# ---------------------------------------------------------------- losses

def test_weighted_risk_examples():
    m = ConcatLinear([[1.0, 0.0]])  # score = z_h
    emb = EmbeddingTable([[2.0], [3.0]])
    ts = TripleSet([0, 1], [0, 0], [0, 0], [2.0, 3.0])
    assert weighted_risk(m, emb, ts, [1.0, 1.0]) == 0.0
    ts = TripleSet([0, 1], [0, 0], [0, 0], [3.0, 4.0])
    assert weighted_risk(m, emb, ts, [1.5, 0.5]) == pytest.approx(1.0, abs=1e-15)


def test_weighted_risk_matches_loop():
    r = np.random.default_rng(0)
    m = CNkg.create(3, 4, (5,), rng=r)
    emb = EmbeddingTable(r.standard_normal((8, 4)))
    ts = TripleSet(r.integers(0, 8, 60), r.integers(0, 3, 60), r.integers(0, 8, 60), r.standard_normal(60))
    w = r.uniform(0.1, 3.0, 60)
    total = 0.0
    for i, x in enumerate(ts):
        f = batch_score(m, emb, [x])[0]
        total += w[i] * (x.label - f) ** 2
    assert weighted_risk(m, emb, ts, w) == pytest.approx(total / 60, rel=1e-12, abs=1e-12)


def test_weighted_risk_requires_labels():
    m = ConcatLinear([[1.0, 0.0]])
    with pytest.raises(ConfigError):
        weighted_risk(m, EmbeddingTable([[1.0]]), TripleSet([0], [0], [0]), [1.0])


def _scalar_scores(values):
    # ConcatLinear with v = (1, 0) scores a triple by z_h
    return ConcatLinear([[1.0, 0.0]]), EmbeddingTable(np.array(values, dtype=float)[:, None])


def test_contrastive_examples():
    m, emb = _scalar_scores([2.0, 0.0, 0.5, -1.0])
    assert contrastive_loss(m, emb, Triple(0, 0, 0), [Triple(1, 0, 0)], 1.0) == 0.0
    assert contrastive_loss(m, emb, Triple(0, 0, 0), [Triple(0, 0, 1)], 1.0) == 1.0
    assert contrastive_loss(m, emb, Triple(2, 0, 0), [Triple(2, 0, 1), Triple(3, 0, 0)], 1.0) == 0.5


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(0.01, 100.0))
def test_weight_scaling(seed, c):
    r = np.random.default_rng(seed)
    emb = EmbeddingTable(r.standard_normal((6, 2)))
    ts = TripleSet(r.integers(0, 6, 30), r.integers(0, 2, 30), r.integers(0, 6, 30), r.standard_normal(30))
    w = r.uniform(0.1, 2.0, 30)
    m1, m2 = CNkg.create(2, 2, (4,), rng=r), CNkg.create(2, 2, (4,), rng=r)
    a1, a2 = weighted_risk(m1, emb, ts, w), weighted_risk(m2, emb, ts, w)
    b1, b2 = weighted_risk(m1, emb, ts, c * w), weighted_risk(m2, emb, ts, c * w)
    assert b1 == pytest.approx(c * a1, rel=1e-12)
    assert (a1 < a2) == (b1 < b2)


# ---------------------------------------------------------------- optimizers

def test_adam_first_step():
    p = np.array([1.0, -2.0])
    g = np.array([0.5, -0.25])
    opt = Adam(0.1)
    opt.update([p], [g])
    # after one step the bias-corrected ratio m/sqrt(v) is sign(g)
    np.testing.assert_allclose(p, [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), -2.0 + 0.1 * 0.25 / (0.25 + 1e-8)])


def test_sgd_momentum():
    p = np.array([0.0])
    opt = Sgd(0.1, momentum=0.5)
    opt.update([p], [np.array([1.0])])
    opt.update([p], [np.array([1.0])])
    np.testing.assert_allclose(p, [-0.1 - 0.15])


def test_masked_update_leaves_entries_bitwise():
    p = np.array([[1.0, 2.0], [3.0, 4.0]])
    before = p.copy()
    Adam(0.5).update([p], [np.ones_like(p)], [np.array([[True], [False]])])
    assert p[1].tobytes() == before[1].tobytes()
    assert not np.array_equal(p[0], before[0])


def test_optimizer_validation():
    with pytest.raises(ConfigError):
        Sgd(0.0)
    with pytest.raises(ConfigError):
        Adam(1e-3, beta1=1.0)


# ---------------------------------------------------------------- train

def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(margin=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(loss="l1")


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.optimizer.step, cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.eps) == (1e-3, 0.9, 0.999, 1e-8)
    assert cfg.negatives_per_positive == 1
    assert WeightScheme().normalize_to_unit_mean


def test_noiseless_concat_linear_fit():
    spec = GeneratorSpec("concat_linear", N=20, d=3, K=2, noise_stds=(0.0,), seed=0)
    ds = sample_regression(spec, 400)
    m = ConcatLinear.create(2, 3, rng=1)
    emb = EmbeddingTable(ds.truth.embeddings)
    rep = train(m, emb, ds.triples, TrainConfig(optimizer=Adam(0.05), epochs=100, batch_size=50))
    assert rep.final_loss < 1e-3
    assert rep.final_loss <= rep.initial_loss
    assert len(rep.loss_trace) == 101
    assert rep.delta_opt >= 0


def test_frozen_embeddings_unchanged_and_relations_move():
    spec = GeneratorSpec("concat_linear", N=15, d=3, K=2, seed=2)
    ds = sample_regression(spec, 200)
    emb = init_embeddings(InitStrategy("external_frozen", source=ds.truth.embeddings), 15, 3)
    before = emb.vectors.copy()
    m = CNkg.create(2, 3, (8,), rng=0)
    params_before = m.get_state()
    train(m, emb, ds.triples, TrainConfig(epochs=3))
    assert emb.vectors.tobytes() == before.tobytes()
    assert any(not np.array_equal(a, b) for a, b in zip(params_before, m.parameters()))


def test_partially_frozen_rows():
    spec = GeneratorSpec("concat_linear", N=10, d=2, K=1, seed=3)
    ds = sample_regression(spec, 200)
    frozen = np.zeros(10, bool)
    frozen[:5] = True
    emb = EmbeddingTable(np.random.default_rng(0).standard_normal((10, 2)), frozen=frozen)
    before = emb.vectors.copy()
    train(CNkg.create(1, 2, (4,), rng=0), emb, ds.triples, TrainConfig(epochs=2))
    assert emb.vectors[:5].tobytes() == before[:5].tobytes()
    assert not np.array_equal(emb.vectors[5:], before[5:])


def test_training_is_deterministic():
    spec = GeneratorSpec("concat_linear", N=12, d=2, K=2, seed=4)
    ds = sample_regression(spec, 150)
    runs = []
    for _ in range(2):
        m = CNkg.create(2, 2, (6,), rng=5)
        emb = init_embeddings(InitStrategy(), 12, 2, seed=6)
        rep = train(m, emb, ds.triples, TrainConfig(epochs=4, seed=7))
        runs.append((np.array(rep.loss_trace).tobytes(), emb.vectors.tobytes()))
    assert runs[0] == runs[1]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    spec = GeneratorSpec("concat_linear", N=10, d=3, K=1, seed=0)
    ds = sample_regression(spec, 100)
    m = ConcatLinear.create(1, 3, rng=0)
    emb = init_embeddings(InitStrategy(), 10, 3, seed=0)
    with pytest.raises(TrainingDivergedError) as err:
        train(m, emb, ds.triples, TrainConfig(optimizer=Sgd(50.0), epochs=200, batch_size=100))
    assert err.value.epoch >= 1


def test_contrastive_training_reduces_loss():
    r = np.random.default_rng(0)
    pos = TripleSet(r.integers(0, 20, 100), r.integers(0, 2, 100), r.integers(0, 20, 100), np.ones(100))
    m = CNkg.create(2, 4, (8,), rng=0)
    emb = init_embeddings(InitStrategy(scale=0.1), 20, 4, seed=1)
    rep = train(m, emb, pos, TrainConfig(loss="margin_contrastive", negatives_per_positive=3, epochs=20))
    assert rep.final_loss < rep.initial_loss


def test_monotone_full_batch_descent():
    ok = 0
    for seed in range(100):
        spec = GeneratorSpec("concat_linear", N=8, d=2, K=2, seed=seed)
        ds = sample_regression(spec, 40)
        m = CNkg.create(2, 2, (4,), rng=seed)
        emb = init_embeddings(InitStrategy(), 8, 2, seed=seed)
        rep = train(m, emb, ds.triples, TrainConfig(optimizer=Sgd(1e-3), epochs=15, batch_size=40,
                                                     weighting=WeightScheme("inverse_variance")))
        ok += bool(np.all(np.diff(rep.loss_trace) <= 0))
    assert ok >= 95


# ---------------------------------------------------------------- init

def test_init_random_scale():
    emb = init_embeddings(InitStrategy("random", scale=0.0), 5, 3, seed=0)
    assert not np.any(emb.vectors)


def test_external_frozen_exact_copy(tmp_path):
    F = np.random.default_rng(0).standard_normal((4, 3))
    path = tmp_path / "emb.txt"
    kio.save_embeddings(path, F, ["a", "b", "c", "d"])
    emb = init_embeddings(InitStrategy("external_frozen", source=path), 4, 3)
    np.testing.assert_array_equal(emb.vectors, F)
    assert emb.frozen.all()
    # reordered by vocabulary
    emb = init_embeddings(InitStrategy("external", source=path), 2, 3, vocabulary=["c", "a"])
    np.testing.assert_array_equal(emb.vectors, F[[2, 0]])
    assert not emb.frozen.any()


def test_external_noisy_zero_std_is_external():
    F = np.arange(6.0).reshape(3, 2)
    a = init_embeddings(InitStrategy("external", source=F), 3, 2)
    b = init_embeddings(InitStrategy("external_noisy", source=F, noise_std=0.0), 3, 2, seed=1)
    np.testing.assert_array_equal(a.vectors, b.vectors)


def test_external_noisy_variance():
    F = np.zeros((10000, 20))
    emb = init_embeddings(InitStrategy("external_noisy", source=F, noise_std=1.0), 10000, 20, seed=3)
    var = emb.vectors.var(axis=0)
    assert np.all((var > 0.94) & (var < 1.06))


def test_external_shape_and_coverage_errors(tmp_path):
    with pytest.raises(ShapeError):
        init_embeddings(InitStrategy("external", source=np.zeros((3, 2))), 3, 4)
    path = tmp_path / "emb.txt"
    kio.save_embeddings(path, np.zeros((2, 2)), ["a", "b"])
    with pytest.raises(ShapeError):
        init_embeddings(InitStrategy("external", source=path), 3, 2, vocabulary=["a", "b", "z"])
    with pytest.raises(ConfigError):
        InitStrategy("external")
