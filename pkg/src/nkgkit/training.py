"""Weighted least squares and margin-contrastive training.

The training loop is plain mini-batch gradient descent with either SGD
(momentum) or Adam. Entity embeddings are trained alongside the relation
parameters unless their rows are frozen.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDivergedError
from .models import (
    EmbeddingTable,
    ScoreModel,
    TripleSet,
    _check_indices,
    as_triple_set,
    batch_score,
)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# sample weights


WEIGHT_KINDS = ("uniform", "inverse_variance", "capped", "relation_ratio")


@dataclass(frozen=True)
class WeightScheme:
    """Rule producing one positive weight per sample.

    uniform           w = 1
    inverse_variance  w_i = sigma_H^2 / sigma_i^2, sigma_H^2 the harmonic mean
    capped            w(x) = B^2 / max(sigma(x)^2, B^2)
    relation_ratio    w = ratio on ``low_noise_relations``, 1 elsewhere

    ``normalize`` rescales to unit mean. ``None`` means: on for everything
    except ``capped``, whose raw values keep ``max w <= 1``.
    """

    kind: str = "uniform"
    cap: float = 1.0
    ratio: float = 1.0
    low_noise_relations: tuple[int, ...] = ()
    normalize: bool | None = None

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ConfigError(f"unknown weight scheme {self.kind!r}; choose from {WEIGHT_KINDS}")
        if self.kind == "capped" and not self.cap > 0:
            raise ConfigError("capped weights need B > 0")
        if self.kind == "relation_ratio" and not (self.ratio > 0 and math.isfinite(self.ratio)):
            raise ConfigError("relation weight ratio must be positive and finite")
        object.__setattr__(self, "low_noise_relations", tuple(int(r) for r in self.low_noise_relations))

    @property
    def normalize_to_unit_mean(self) -> bool:
        if self.normalize is None:
            return self.kind != "capped"
        return bool(self.normalize)


def harmonic_mean_variance(sigmas) -> float:
    s2 = np.asarray(sigmas, dtype=np.float64) ** 2
    return float(1.0 / np.mean(1.0 / s2))


def compute_weights(scheme: WeightScheme, triples) -> np.ndarray:
    ts = as_triple_set(triples)
    n = len(ts)
    if scheme.kind == "uniform":
        w = np.ones(n)
    elif scheme.kind in ("inverse_variance", "capped"):
        if ts.noise_scales is None or np.any(np.isnan(ts.noise_scales)):
            raise ConfigError(f"{scheme.kind} weights need a noise scale on every triple")
        s2 = ts.noise_scales ** 2
        if scheme.kind == "inverse_variance":
            if np.any(s2 == 0):
                raise ConfigError("inverse-variance weights are undefined for sigma = 0")
            w = harmonic_mean_variance(ts.noise_scales) / s2
        else:
            B2 = scheme.cap ** 2
            w = B2 / np.maximum(s2, B2)
    else:
        w = np.where(np.isin(ts.relations, scheme.low_noise_relations), scheme.ratio, 1.0)
    if scheme.normalize_to_unit_mean and n:
        w = w / np.mean(w)
    return w


# --------------------------------------------------------------------------
# losses


def weighted_risk(model: ScoreModel, emb: EmbeddingTable, triples, weights) -> float:
    """``(1/n) sum_i w_i (y_i - f(x_i))^2``."""
    ts = as_triple_set(triples)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(ts),):
        raise ShapeError(f"{w.shape[0] if w.ndim else 'scalar'} weights for {len(ts)} triples")
    if ts.labels is None or np.any(np.isnan(ts.labels)):
        raise ConfigError("weighted risk needs a label on every triple")
    if len(ts) == 0:
        return 0.0
    r = ts.labels - batch_score(model, emb, ts)
    return float(np.mean(w * r * r))


def hinge(margin, pos_scores, neg_scores):
    return np.maximum(0.0, margin - pos_scores + neg_scores)


def contrastive_loss(model: ScoreModel, emb: EmbeddingTable, positive, negatives,
                     margin: float = 1.0) -> float:
    """Mean over negatives of ``max(0, margin - f(pos) + f(neg))``."""
    negs = as_triple_set(negatives)
    if len(negs) == 0:
        raise ValueError("need at least one negative")
    s_pos = batch_score(model, emb, as_triple_set(positive))[0]
    s_neg = batch_score(model, emb, negs)
    return float(np.mean(hinge(margin, s_pos, s_neg)))


# --------------------------------------------------------------------------
# optimizers


@dataclass
class Sgd:
    step: float = 1e-2
    momentum: float = 0.0
    _velocity: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError("step must be > 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")

    def reset(self):
        self._velocity = []

    def update(self, params, grads, masks=None):
        if not self._velocity:
            self._velocity = [np.zeros_like(p) for p in params]
        masks = masks or [None] * len(params)
        for p, g, v, m in zip(params, grads, self._velocity, masks):
            v *= self.momentum
            v += g
            delta = self.step * v
            if m is not None:
                delta = delta * m
            p -= delta


@dataclass
class Adam:
    step: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: list = field(default_factory=list, repr=False)
    _v: list = field(default_factory=list, repr=False)
    _t: int = field(default=0, repr=False)

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError("step must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or not self.eps > 0:
            raise ConfigError("Adam needs beta1, beta2 in [0, 1) and eps > 0")

    def reset(self):
        self._m, self._v, self._t = [], [], 0

    def update(self, params, grads, masks=None):
        if not self._m:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        c1 = 1.0 - self.beta1 ** self._t
        c2 = 1.0 - self.beta2 ** self._t
        masks = masks or [None] * len(params)
        for p, g, m, v, mask in zip(params, grads, self._m, self._v, masks):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            delta = self.step * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if mask is not None:
                delta = delta * mask
            p -= delta


# --------------------------------------------------------------------------
# initialisation


INIT_KINDS = ("random", "external", "external_frozen", "external_noisy")


@dataclass
class InitStrategy:
    """How the embedding table is filled before training.

    ``source`` is an ``N x D`` array or a path to an embedding file.
    """

    kind: str = "random"
    scale: float = 1.0
    source: object = None
    noise_std: float = 0.0

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ConfigError(f"unknown init strategy {self.kind!r}; choose from {INIT_KINDS}")
        if self.kind != "random" and self.source is None:
            raise ConfigError(f"init strategy {self.kind!r} needs external vectors")
        if self.noise_std < 0 or self.scale < 0:
            raise ConfigError("scale and noise_std must be nonnegative")


def _external_vectors(source, N, D, vocabulary=None) -> np.ndarray:
    if isinstance(source, (str, Path)):
        from .io import load_embeddings

        ids, vectors = load_embeddings(source)
        if vocabulary is not None:
            row = {e: i for i, e in enumerate(ids)}
            missing = [e for e in vocabulary if e not in row]
            if missing:
                raise ShapeError(
                    f"embedding file lacks {len(missing)} entities, e.g. {missing[:3]}"
                )
            vectors = vectors[[row[e] for e in vocabulary]]
    else:
        vectors = np.array(source, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape != (N, D):
        raise ShapeError(f"external vectors have shape {vectors.shape}, expected {(N, D)}")
    return vectors.copy()


def init_embeddings(strategy: InitStrategy, N: int, D: int, seed=None,
                    vocabulary: Sequence[str] | None = None, categories=None) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    if strategy.kind == "random":
        return EmbeddingTable(strategy.scale * rng.standard_normal((N, D)), categories=categories)
    vectors = _external_vectors(strategy.source, N, D, vocabulary)
    if strategy.kind == "external_frozen":
        return EmbeddingTable(vectors, frozen=True, categories=categories)
    if strategy.kind == "external_noisy" and strategy.noise_std > 0:
        vectors = vectors + strategy.noise_std * rng.standard_normal((N, D))
    return EmbeddingTable(vectors, categories=categories)


# --------------------------------------------------------------------------
# training loop


LOSS_KINDS = ("weighted_square", "margin_contrastive")


@dataclass
class TrainConfig:
    loss: str = "weighted_square"
    margin: float = 1.0
    negatives_per_positive: int = 1
    optimizer: object = field(default_factory=Adam)
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    weighting: WeightScheme = field(default_factory=WeightScheme)

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss!r}; choose from {LOSS_KINDS}")
        if not self.margin > 0:
            raise ConfigError("margin must be > 0")
        if int(self.epochs) < 1:
            raise ConfigError("epochs must be >= 1")
        if int(self.batch_size) < 1:
            raise ConfigError("batch size must be >= 1")
        if int(self.negatives_per_positive) < 1:
            raise ConfigError("need at least one negative per positive")
        if not isinstance(self.optimizer, (Sgd, Adam)):
            raise ConfigError("optimizer must be Sgd or Adam")


@dataclass
class TrainReport:
    model: ScoreModel
    embeddings: EmbeddingTable
    loss_trace: list[float]
    weights: np.ndarray

    @property
    def initial_loss(self) -> float:
        return self.loss_trace[0]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]

    @property
    def delta_opt(self) -> float:
        """Final loss minus the best loss seen; a computable surrogate for the
        optimisation slack (the true infimum is unknown)."""
        return self.final_loss - min(self.loss_trace)


def uniform_corruptions(ts: TripleSet, n_entities: int, rng, per_positive: int = 1,
                        categories=None) -> TripleSet:
    """Replace head or tail (fair coin) by a uniform entity.

    With ``categories`` the replacement is drawn from the same category. No
    filtering against known positives; this is the cheap training sampler.
    """
    reps = np.repeat(np.arange(len(ts)), per_positive)
    heads = ts.heads[reps].copy()
    tails = ts.tails[reps].copy()
    side_head = rng.random(reps.shape[0]) < 0.5
    if categories is None:
        repl = rng.integers(0, n_entities, size=reps.shape[0])
    else:
        pools = _category_pools(categories)
        anchor = np.where(side_head, heads, tails)
        repl = np.empty_like(anchor)
        cat_ids = pools.codes[anchor]
        for c, members in enumerate(pools.members):
            sel = np.flatnonzero(cat_ids == c)
            if sel.size:
                repl[sel] = members[rng.integers(0, members.size, size=sel.size)]
    heads[side_head] = repl[side_head]
    tails[~side_head] = repl[~side_head]
    return TripleSet(heads, ts.relations[reps], tails)


@dataclass
class _Pools:
    codes: np.ndarray
    members: list[np.ndarray]


def _category_pools(categories) -> _Pools:
    names = {}
    codes = np.array([names.setdefault(c, len(names)) for c in categories], dtype=np.int64)
    members = [np.flatnonzero(codes == i) for i in range(len(names))]
    return _Pools(codes, members)


def _square_step(model, V, ts, y, w, scale):
    scores, cache = model.forward(V[ts.heads], V[ts.tails], ts.relations)
    r = y - scores
    loss = float(np.sum(w * r * r) * scale)
    grads = model.backward(cache, -2.0 * scale * w * r)
    return loss, grads


def _contrastive_step(model, V, pos, neg, w, margin, m, scale):
    n = len(pos)
    heads = np.concatenate([pos.heads, neg.heads])
    tails = np.concatenate([pos.tails, neg.tails])
    rels = np.concatenate([pos.relations, neg.relations])
    scores, cache = model.forward(V[heads], V[tails], rels)
    s_pos = np.repeat(scores[:n], m)
    s_neg = scores[n:]
    wr = np.repeat(w, m)
    h = hinge(margin, s_pos, s_neg)
    loss = float(np.sum(wr * h) * scale)
    active = (h > 0) * wr * scale
    up = np.concatenate([-active.reshape(n, m).sum(axis=1), active])
    return loss, model.backward(cache, up), heads, tails


def training_loss(model, emb, ts, weights, config: TrainConfig, eval_negatives=None) -> float:
    """Objective value on the full data set, as tracked per epoch."""
    if config.loss == "weighted_square":
        return weighted_risk(model, emb, ts, weights)
    m = config.negatives_per_positive
    s_pos = np.repeat(batch_score(model, emb, ts), m)
    s_neg = batch_score(model, emb, eval_negatives)
    return float(np.mean(np.repeat(weights, m) * hinge(config.margin, s_pos, s_neg)))


def train(model: ScoreModel, emb: EmbeddingTable, triples, config: TrainConfig,
          weights=None) -> TrainReport:
    """Fit ``model`` and the trainable rows of ``emb`` in place.

    ``weights`` overrides ``config.weighting`` when given. Raises
    :class:`TrainingDivergedError` as soon as the loss is non-finite.
    """
    ts = as_triple_set(triples)
    n = len(ts)
    if n == 0:
        raise ConfigError("cannot train on an empty data set")
    _check_indices(model, emb, ts)
    if weights is None:
        weights = compute_weights(config.weighting, ts)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n,) or np.any(~np.isfinite(weights)) or np.any(weights <= 0):
        raise ConfigError("weights must be positive, finite, one per triple")
    if config.loss == "weighted_square" and (ts.labels is None or np.any(np.isnan(ts.labels))):
        raise ConfigError("weighted square loss needs labels on every triple")

    rng = np.random.default_rng(config.seed)
    opt = config.optimizer
    opt.reset()
    N = emb.n_entities
    train_emb = not np.all(emb.frozen)
    params = list(model.parameters())
    masks = list(model.parameter_masks())
    if train_emb:
        params.append(emb.vectors)
        masks.append(emb.trainable_mask() if np.any(emb.frozen) else None)

    m = config.negatives_per_positive
    eval_negs = None
    if config.loss == "margin_contrastive":
        eval_negs = uniform_corruptions(ts, N, np.random.default_rng([config.seed, 1]), m,
                                        emb.categories)

    trace = [training_loss(model, emb, ts, weights, config, eval_negs)]
    if not math.isfinite(trace[0]):
        raise TrainingDivergedError(0, trace[0])
    bs = min(int(config.batch_size), n)
    for epoch in range(1, int(config.epochs) + 1):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            batch = ts.subset(idx)
            w = weights[idx]
            if config.loss == "weighted_square":
                _, g = _square_step(model, emb.vectors, batch, batch.labels, w, 1.0 / idx.size)
                heads, tails = batch.heads, batch.tails
            else:
                neg = uniform_corruptions(batch, N, rng, m, emb.categories)
                _, g, heads, tails = _contrastive_step(
                    model, emb.vectors, batch, neg, w, config.margin, m, 1.0 / (idx.size * m)
                )
            grads = list(g.params)
            if train_emb:
                grads.append(g.embedding_gradient(heads, tails, N))
            opt.update(params, grads, masks)
        loss = training_loss(model, emb, ts, weights, config, eval_negs)
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        trace.append(loss)
        log.debug("epoch %d loss %.6g", epoch, loss)
    if trace[-1] > trace[0]:
        log.warning("final training loss %.6g exceeds initial %.6g", trace[-1], trace[0])
    return TrainReport(model, emb, trace, weights)
