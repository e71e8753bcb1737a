"""Entity embeddings and relation-specific score functions ``f_r(z_h, z_t)``.

Variants
--------
``CNkg``          concatenate ``(z_h, z_t)`` and feed a per-relation ReLU net
``IpNkg``         ``<g_r(z_h), g'_r(z_t)>`` with two per-relation ReLU nets
``TransE``        ``-||z_h - z_t + v_r||^2``
``Mip``           ``logistic(z_h^T diag(lambda_r) z_t + b)``
``ConcatLinear``  ``(z_h, z_t) . v_r``

Higher scores mean more plausible. All models work on index arrays so that a
mini-batch is scored with one matrix product per relation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, InvalidTripleError, ShapeError
from .nn import DenseLayer, FeedForwardNet, ForwardCache


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int
    label: float | None = None
    noise_scale: float | None = None

    def __post_init__(self):
        if self.noise_scale is not None and not self.noise_scale >= 0:
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale}")


class TripleSet:
    """Columnar storage for many triples.

    Behaves like a read-only sequence of :class:`Triple`. ``labels`` and
    ``noise_scales`` are either ``None`` or float arrays aligned with the
    index columns.
    """

    def __init__(self, heads, relations, tails, labels=None, noise_scales=None):
        self.heads = np.asarray(heads, dtype=np.int64).reshape(-1)
        self.relations = np.asarray(relations, dtype=np.int64).reshape(-1)
        self.tails = np.asarray(tails, dtype=np.int64).reshape(-1)
        n = self.heads.shape[0]
        if self.relations.shape[0] != n or self.tails.shape[0] != n:
            raise ShapeError("head/relation/tail columns differ in length")
        self.labels = None if labels is None else np.asarray(labels, dtype=np.float64).reshape(-1)
        self.noise_scales = (
            None if noise_scales is None else np.asarray(noise_scales, dtype=np.float64).reshape(-1)
        )
        for name, col in (("labels", self.labels), ("noise_scales", self.noise_scales)):
            if col is not None and col.shape[0] != n:
                raise ShapeError(f"{name} length {col.shape[0]} != {n}")
        if self.noise_scales is not None and np.any(self.noise_scales < 0):
            raise ValueError("noise scales must be nonnegative")

    @classmethod
    def from_triples(cls, triples: Iterable[Triple]) -> "TripleSet":
        triples = list(triples)
        if not triples:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64))
        labels = None
        if all(t.label is not None for t in triples):
            labels = [t.label for t in triples]
        elif any(t.label is not None for t in triples):
            labels = [np.nan if t.label is None else t.label for t in triples]
        sigmas = None
        if all(t.noise_scale is not None for t in triples):
            sigmas = [t.noise_scale for t in triples]
        elif any(t.noise_scale is not None for t in triples):
            sigmas = [np.nan if t.noise_scale is None else t.noise_scale for t in triples]
        return cls(
            [t.head for t in triples],
            [t.relation for t in triples],
            [t.tail for t in triples],
            labels,
            sigmas,
        )

    def __len__(self) -> int:
        return self.heads.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            lab = None if self.labels is None or np.isnan(self.labels[idx]) else float(self.labels[idx])
            sig = (
                None
                if self.noise_scales is None or np.isnan(self.noise_scales[idx])
                else float(self.noise_scales[idx])
            )
            return Triple(int(self.heads[idx]), int(self.relations[idx]), int(self.tails[idx]), lab, sig)
        return self.subset(idx)

    def __iter__(self) -> Iterator[Triple]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, idx) -> "TripleSet":
        return TripleSet(
            self.heads[idx],
            self.relations[idx],
            self.tails[idx],
            None if self.labels is None else self.labels[idx],
            None if self.noise_scales is None else self.noise_scales[idx],
        )

    def with_labels(self, labels) -> "TripleSet":
        return TripleSet(self.heads, self.relations, self.tails, labels, self.noise_scales)

    def keys(self) -> list[tuple[int, int, int]]:
        return list(zip(self.heads.tolist(), self.relations.tolist(), self.tails.tolist()))

    def relation_counts(self) -> dict[int, int]:
        rels, counts = np.unique(self.relations, return_counts=True)
        return {int(r): int(c) for r, c in zip(rels, counts)}

    def __eq__(self, other):
        if not isinstance(other, TripleSet):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b, equal_nan=True)

        return (
            np.array_equal(self.heads, other.heads)
            and np.array_equal(self.relations, other.relations)
            and np.array_equal(self.tails, other.tails)
            and same(self.labels, other.labels)
            and same(self.noise_scales, other.noise_scales)
        )

    def __repr__(self):
        return f"TripleSet(n={len(self)})"


def as_triple_set(triples) -> TripleSet:
    if isinstance(triples, TripleSet):
        return triples
    if isinstance(triples, Triple):
        return TripleSet.from_triples([triples])
    return TripleSet.from_triples(triples)


class EmbeddingTable:
    """``N x D`` entity vectors with per-row freeze flags.

    ``categories`` is an optional per-entity tag used by negative sampling.
    """

    def __init__(self, vectors, frozen=None, categories=None):
        vectors = np.array(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ShapeError(f"embedding table must be N x D with N, D >= 1, got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        self.vectors = vectors
        if frozen is None:
            frozen = np.zeros(vectors.shape[0], dtype=bool)
        elif np.isscalar(frozen):
            frozen = np.full(vectors.shape[0], bool(frozen))
        self.frozen = np.asarray(frozen, dtype=bool).copy()
        if self.frozen.shape != (vectors.shape[0],):
            raise ShapeError("frozen flags must have one entry per row")
        self.categories = None if categories is None else list(categories)
        if self.categories is not None and len(self.categories) != vectors.shape[0]:
            raise ShapeError("categories must have one entry per entity")

    @property
    def n_entities(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.vectors.copy(), self.frozen.copy(), self.categories)

    def trainable_mask(self) -> np.ndarray:
        return (~self.frozen)[:, None].astype(np.float64)


# --------------------------------------------------------------------------
# monotone output transforms


class Rho:
    name = "identity"

    @staticmethod
    def value(x):
        return x

    @staticmethod
    def derivative(x, fx):
        return np.ones_like(x)


class LogisticRho(Rho):
    name = "logistic"

    @staticmethod
    def value(x):
        return expit(x)

    @staticmethod
    def derivative(x, fx):
        return fx * (1.0 - fx)


RHOS = {"identity": Rho, "logistic": LogisticRho}


def get_rho(name) -> type[Rho]:
    if isinstance(name, type) and issubclass(name, Rho):
        return name
    try:
        return RHOS[name]
    except KeyError:
        raise ConfigError(f"unknown output transform {name!r}; choose from {sorted(RHOS)}") from None


# --------------------------------------------------------------------------
# score models


@dataclass
class ScoreGradients:
    """Gradients of ``upstream * f`` for a batch.

    ``params`` is aligned with ``model.parameters()`` and summed over the
    batch; ``head`` / ``tail`` hold one row per sample.
    """

    params: list[np.ndarray]
    head: np.ndarray
    tail: np.ndarray

    def embedding_gradient(self, heads, tails, n_entities: int) -> np.ndarray:
        """Scatter the per-sample head/tail rows into an ``N x D`` array."""
        D = self.head.shape[1]
        out = np.zeros((n_entities, D))
        np.add.at(out, heads, self.head)
        np.add.at(out, tails, self.tail)
        return out


class ScoreModel:
    """Base class. Subclasses own all relation-specific parameters."""

    kind = "base"

    def __init__(self, n_relations: int, dim: int):
        if n_relations < 1 or dim < 1:
            raise ShapeError("need K >= 1 and D >= 1")
        self.n_relations = int(n_relations)
        self.dim = int(dim)

    def parameters(self) -> list[np.ndarray]:
        raise NotImplementedError

    def parameter_masks(self) -> list[np.ndarray | None]:
        return [None] * len(self.parameters())

    def n_params(self) -> int:
        total = 0
        for p, m in zip(self.parameters(), self.parameter_masks()):
            total += p.size if m is None else int(np.sum(m))
        return total

    def forward(self, zh, zt, rel):
        """Scores for a batch; returns ``(scores, cache)``."""
        raise NotImplementedError

    def backward(self, cache, upstream) -> ScoreGradients:
        raise NotImplementedError

    def copy(self) -> "ScoreModel":
        raise NotImplementedError

    def get_state(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def set_state(self, state: Sequence[np.ndarray]) -> None:
        for p, s in zip(self.parameters(), state):
            p[...] = s


def _group(rel: np.ndarray, K: int):
    for k in range(K):
        idx = np.flatnonzero(rel == k)
        if idx.size:
            yield k, idx


class CNkg(ScoreModel):
    """Per-relation net on the concatenation ``(z_h, z_t)`` (input 2D, output 1)."""

    kind = "cnkg"

    def __init__(self, nets: Sequence[FeedForwardNet], rho="identity"):
        nets = list(nets)
        if not nets:
            raise ShapeError("need at least one relation network")
        dim2 = nets[0].input_dim
        if dim2 % 2:
            raise ShapeError("C-NKG network input width must be 2D")
        super().__init__(len(nets), dim2 // 2)
        for net in nets:
            if net.input_dim != dim2 or net.output_dim != 1:
                raise ShapeError("every C-NKG net must map 2D -> 1")
        self.nets = nets
        self.rho = get_rho(rho)

    @classmethod
    def create(cls, n_relations, dim, hidden=(32,), rng=None, rho="identity"):
        rng = np.random.default_rng(rng)
        widths = [2 * dim, *hidden, 1]
        return cls([FeedForwardNet.random(widths, rng) for _ in range(n_relations)], rho)

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(self.nets[0].widths[1:-1])

    def parameters(self):
        return [p for net in self.nets for p in net.parameters()]

    def parameter_masks(self):
        return [m for net in self.nets for m in net.masks()]

    def copy(self):
        return CNkg([net.copy() for net in self.nets], self.rho)

    def forward(self, zh, zt, rel):
        X = np.concatenate([zh, zt], axis=1)
        raw = np.zeros(X.shape[0])
        caches = []
        for k, idx in _group(rel, self.n_relations):
            cache = ForwardCache()
            raw[idx] = self.nets[k].forward(X[idx], cache)[:, 0]
            caches.append((k, idx, cache))
        out = self.rho.value(raw)
        return out, (caches, raw, out, X.shape[0])

    def backward(self, cache, upstream):
        caches, raw, out, n = cache
        up = np.asarray(upstream, dtype=np.float64) * self.rho.derivative(raw, out)
        grads = [np.zeros_like(p) for p in self.parameters()]
        dX = np.zeros((n, 2 * self.dim))
        offsets = np.cumsum([0] + [len(net.parameters()) for net in self.nets])
        for k, idx, c in caches:
            tape = self.nets[k].backward(c, up[idx][:, None])
            for j, g in enumerate(tape.flat()):
                grads[offsets[k] + j] = g
            dX[idx] = tape.input
        return ScoreGradients(grads, dX[:, : self.dim], dX[:, self.dim :])


class IpNkg(ScoreModel):
    """``rho(<g_r(z_h), g'_r(z_t)>)`` with two nets per relation (input D, output D')."""

    kind = "ipnkg"

    def __init__(self, head_nets, tail_nets, rho="identity"):
        head_nets, tail_nets = list(head_nets), list(tail_nets)
        if len(head_nets) != len(tail_nets) or not head_nets:
            raise ShapeError("need one (g, g') pair per relation")
        D, Dp = head_nets[0].input_dim, head_nets[0].output_dim
        for g, gp in zip(head_nets, tail_nets):
            if (g.input_dim, g.output_dim, gp.input_dim, gp.output_dim) != (D, Dp, D, Dp):
                raise ShapeError("IP-NKG nets must all map D -> D'")
        super().__init__(len(head_nets), D)
        self.head_nets = head_nets
        self.tail_nets = tail_nets
        self.out_dim = Dp
        self.rho = get_rho(rho)

    @classmethod
    def create(cls, n_relations, dim, hidden=(32,), out_dim=None, rng=None, rho="identity",
               shared=False):
        """``shared=True`` uses the same network object for g and g' (symmetric scores)."""
        rng = np.random.default_rng(rng)
        widths = [dim, *hidden, out_dim or dim]
        g = [FeedForwardNet.random(widths, rng) for _ in range(n_relations)]
        gp = g if shared else [FeedForwardNet.random(widths, rng) for _ in range(n_relations)]
        return cls(g, gp, rho)

    def _nets(self):
        out = []
        for g, gp in zip(self.head_nets, self.tail_nets):
            out.append(g)
            if gp is not g:
                out.append(gp)
        return out

    def parameters(self):
        return [p for net in self._nets() for p in net.parameters()]

    def parameter_masks(self):
        return [m for net in self._nets() for m in net.masks()]

    def copy(self):
        g, gp = [], []
        for a, b in zip(self.head_nets, self.tail_nets):
            ca = a.copy()
            g.append(ca)
            gp.append(ca if b is a else b.copy())
        return IpNkg(g, gp, self.rho)

    def forward(self, zh, zt, rel):
        raw = np.zeros(zh.shape[0])
        caches = []
        for k, idx in _group(rel, self.n_relations):
            ch, ct = ForwardCache(), ForwardCache()
            a = self.head_nets[k].forward(zh[idx], ch)
            b = self.tail_nets[k].forward(zt[idx], ct)
            raw[idx] = np.sum(a * b, axis=1)
            caches.append((k, idx, ch, ct, a, b))
        out = self.rho.value(raw)
        return out, (caches, raw, out, zh.shape[0])

    def _offsets(self):
        offsets, pos = [], 0
        for g, gp in zip(self.head_nets, self.tail_nets):
            og = pos
            pos += len(g.parameters())
            if gp is g:
                ogp = og
            else:
                ogp = pos
                pos += len(gp.parameters())
            offsets.append((og, ogp))
        return offsets

    def backward(self, cache, upstream):
        caches, raw, out, n = cache
        up = np.asarray(upstream, dtype=np.float64) * self.rho.derivative(raw, out)
        grads = [np.zeros_like(p) for p in self.parameters()]
        dzh = np.zeros((n, self.dim))
        dzt = np.zeros((n, self.dim))
        offsets = self._offsets()
        for k, idx, ch, ct, a, b in caches:
            u = up[idx][:, None]
            th = self.head_nets[k].backward(ch, u * b)
            tt = self.tail_nets[k].backward(ct, u * a)
            og, ogp = offsets[k]
            for j, g in enumerate(th.flat()):
                grads[og + j] += g
            for j, g in enumerate(tt.flat()):
                grads[ogp + j] += g
            dzh[idx] = th.input
            dzt[idx] = tt.input
        return ScoreGradients(grads, dzh, dzt)


class TransE(ScoreModel):
    """``-||z_h - z_t + v_r||^2``; one offset vector per relation."""

    kind = "transe"

    def __init__(self, offsets):
        offsets = np.array(offsets, dtype=np.float64, ndmin=2)
        super().__init__(*offsets.shape)
        self.offsets = offsets

    @classmethod
    def create(cls, n_relations, dim, rng=None, scale=0.1):
        rng = np.random.default_rng(rng)
        return cls(rng.normal(0.0, scale, size=(n_relations, dim)))

    def parameters(self):
        return [self.offsets]

    def copy(self):
        return TransE(self.offsets.copy())

    def forward(self, zh, zt, rel):
        u = zh - zt + self.offsets[rel]
        return -np.sum(u * u, axis=1), (u, rel)

    def backward(self, cache, upstream):
        u, rel = cache
        g = -2.0 * u * np.asarray(upstream, dtype=np.float64)[:, None]
        gv = np.zeros_like(self.offsets)
        np.add.at(gv, rel, g)
        return ScoreGradients([gv], g, -g)


class Mip(ScoreModel):
    """``logistic(z_h^T diag(lambda_r) z_t + b)`` with a shared scalar bias."""

    kind = "mip"

    def __init__(self, diagonals, bias=0.0):
        diagonals = np.array(diagonals, dtype=np.float64, ndmin=2)
        super().__init__(*diagonals.shape)
        self.diagonals = diagonals
        self.bias = np.array([float(bias)])

    @classmethod
    def create(cls, n_relations, dim, rng=None, scale=0.1):
        rng = np.random.default_rng(rng)
        return cls(rng.normal(0.0, scale, size=(n_relations, dim)), 0.0)

    def parameters(self):
        return [self.diagonals, self.bias]

    def copy(self):
        return Mip(self.diagonals.copy(), self.bias[0])

    def forward(self, zh, zt, rel):
        lam = self.diagonals[rel]
        raw = np.sum(zh * lam * zt, axis=1) + self.bias[0]
        out = expit(raw)
        return out, (zh, zt, lam, rel, out)

    def backward(self, cache, upstream):
        zh, zt, lam, rel, out = cache
        u = (np.asarray(upstream, dtype=np.float64) * out * (1.0 - out))[:, None]
        gl = np.zeros_like(self.diagonals)
        np.add.at(gl, rel, u * zh * zt)
        gb = np.array([u.sum()])
        return ScoreGradients([gl, gb], u * lam * zt, u * lam * zh)


class ConcatLinear(ScoreModel):
    """``(z_h, z_t) . v_r`` with ``v_r`` in R^{2D}."""

    kind = "concat_linear"

    def __init__(self, vectors):
        vectors = np.array(vectors, dtype=np.float64, ndmin=2)
        if vectors.shape[1] % 2:
            raise ShapeError("ConcatLinear relation vectors must have even length 2D")
        super().__init__(vectors.shape[0], vectors.shape[1] // 2)
        self.vectors = vectors

    @classmethod
    def create(cls, n_relations, dim, rng=None, scale=0.1):
        rng = np.random.default_rng(rng)
        return cls(rng.normal(0.0, scale, size=(n_relations, 2 * dim)))

    def parameters(self):
        return [self.vectors]

    def copy(self):
        return ConcatLinear(self.vectors.copy())

    def forward(self, zh, zt, rel):
        v = self.vectors[rel]
        D = self.dim
        out = np.sum(zh * v[:, :D], axis=1) + np.sum(zt * v[:, D:], axis=1)
        return out, (zh, zt, v, rel)

    def backward(self, cache, upstream):
        zh, zt, v, rel = cache
        u = np.asarray(upstream, dtype=np.float64)[:, None]
        gv = np.zeros_like(self.vectors)
        np.add.at(gv, rel, u * np.concatenate([zh, zt], axis=1))
        D = self.dim
        return ScoreGradients([gv], u * v[:, :D], u * v[:, D:])


MODEL_KINDS = {
    cls.kind: cls for cls in (CNkg, IpNkg, TransE, Mip, ConcatLinear)
}


def build_model(kind: str, n_relations: int, dim: int, hidden=(32,), rng=None,
                rho="identity") -> ScoreModel:
    """Factory used by the experiment runner and CLI."""
    kind = kind.replace("-", "_").lower()
    if kind == "cnkg":
        return CNkg.create(n_relations, dim, hidden, rng=rng, rho=rho)
    if kind == "ipnkg":
        return IpNkg.create(n_relations, dim, hidden, rng=rng, rho=rho)
    if kind in MODEL_KINDS:
        return MODEL_KINDS[kind].create(n_relations, dim, rng=rng)
    raise ConfigError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS)}")


def cnkg_from_concat_linear(model: ConcatLinear) -> CNkg:
    """Exact C-NKG copy of a ConcatLinear model.

    Uses ``x = relu(x) - relu(-x)`` with a hidden layer of width ``4D``.
    """
    D2 = 2 * model.dim
    eye = np.eye(D2)
    nets = []
    for v in model.vectors:
        hidden = DenseLayer(np.hstack([eye, -eye]), np.zeros(2 * D2), True)
        out = DenseLayer(np.concatenate([v, -v])[:, None], np.zeros(1), False)
        nets.append(FeedForwardNet([hidden, out]))
    return CNkg(nets)


# --------------------------------------------------------------------------
# public scoring API


def _check_indices(model: ScoreModel, emb: EmbeddingTable, ts: TripleSet) -> None:
    N, K = emb.n_entities, model.n_relations
    if emb.dim != model.dim:
        raise ShapeError(f"embedding dim {emb.dim} != model dim {model.dim}")
    bad = (
        (ts.heads < 0) | (ts.heads >= N) | (ts.tails < 0) | (ts.tails >= N)
        | (ts.relations < 0) | (ts.relations >= K)
    )
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise InvalidTripleError(
            f"triple #{i} ({ts.heads[i]}, {ts.relations[i]}, {ts.tails[i]}) "
            f"out of bounds for N={N}, K={K}"
        )


def forward_triples(model: ScoreModel, emb: EmbeddingTable, ts: TripleSet):
    return model.forward(emb.vectors[ts.heads], emb.vectors[ts.tails], ts.relations)


def score(model: ScoreModel, emb: EmbeddingTable, x: Triple) -> float:
    ts = as_triple_set(x)
    _check_indices(model, emb, ts)
    return float(forward_triples(model, emb, ts)[0][0])


def batch_score(model: ScoreModel, emb: EmbeddingTable, triples) -> np.ndarray:
    ts = as_triple_set(triples)
    if len(ts) == 0:
        return np.zeros(0)
    _check_indices(model, emb, ts)
    return forward_triples(model, emb, ts)[0]


def score_gradients(model: ScoreModel, emb: EmbeddingTable, x, upstream=1.0) -> ScoreGradients:
    """Gradients of ``upstream * score`` w.r.t. model parameters and ``z_h``, ``z_t``.

    For a single :class:`Triple` the head/tail gradients are returned as
    length-D vectors. Frozen rows still get their gradient reported; the
    optimizer is responsible for not applying it.
    """
    single = isinstance(x, Triple)
    ts = as_triple_set(x)
    _check_indices(model, emb, ts)
    up = np.broadcast_to(np.asarray(upstream, dtype=np.float64), (len(ts),))
    _, cache = forward_triples(model, emb, ts)
    grads = model.backward(cache, up)
    if single:
        grads = ScoreGradients(grads.params, grads.head[0], grads.tail[0])
    return grads
