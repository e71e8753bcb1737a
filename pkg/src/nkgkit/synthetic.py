"""Synthetic knowledge graphs with a known score function ``gamma``.

Regression designs draw ``y = gamma(x) + eps`` with per-sample Gaussian noise;
binary designs draw ``y ~ Bernoulli(gamma(x))`` over every candidate triple
and keep only the positives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .models import Triple, TripleSet, as_triple_set

GENERATOR_KINDS = ("concat_linear", "vector_offset", "logistic", "mip")
REGRESSION_KINDS = ("concat_linear", "vector_offset")
BINARY_KINDS = ("logistic", "mip")


@dataclass(frozen=True)
class GeneratorSpec:
    """``relation_noise_stds`` (one per relation) overrides the per-sample
    draw from ``noise_stds``; it produces graphs with relation noise tiers."""

    kind: str = "concat_linear"
    N: int = 100
    d: int = 10
    K: int = 5
    noise_stds: tuple[float, ...] = (1.0, 5.0)
    bias: float = -3.0
    seed: int = 0
    relation_noise_stds: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ConfigError(f"unknown generator {self.kind!r}; choose from {GENERATOR_KINDS}")
        if min(self.N, self.d, self.K) < 1:
            raise ConfigError("N, d and K must be >= 1")
        object.__setattr__(self, "noise_stds", tuple(float(s) for s in self.noise_stds))
        if not self.noise_stds or any(s < 0 for s in self.noise_stds):
            raise ConfigError("noise_stds must be a nonempty set of values >= 0")
        if self.relation_noise_stds is not None:
            rn = tuple(float(s) for s in self.relation_noise_stds)
            if len(rn) != self.K or any(s < 0 for s in rn):
                raise ConfigError("relation_noise_stds needs K values >= 0")
            object.__setattr__(self, "relation_noise_stds", rn)


@dataclass
class GroundTruth:
    """Generating parameters and the score oracle ``gamma``."""

    kind: str
    embeddings: np.ndarray
    relations: np.ndarray
    bias: float = 0.0

    @property
    def N(self) -> int:
        return self.embeddings.shape[0]

    @property
    def K(self) -> int:
        return self.relations.shape[0]

    def batch(self, triples) -> np.ndarray:
        ts = as_triple_set(triples)
        uh = self.embeddings[ts.heads]
        ut = self.embeddings[ts.tails]
        v = self.relations[ts.relations]
        if self.kind in ("concat_linear", "logistic"):
            d = uh.shape[1]
            raw = np.sum(uh * v[:, :d], axis=1) + np.sum(ut * v[:, d:], axis=1)
            return raw if self.kind == "concat_linear" else expit(raw + self.bias)
        if self.kind == "vector_offset":
            u = uh - ut + v
            return -np.sum(u * u, axis=1)
        return expit(np.sum(uh * v * ut, axis=1) + self.bias)

    def __call__(self, x) -> float | np.ndarray:
        if isinstance(x, Triple):
            return float(self.batch(TripleSet.from_triples([x]))[0])
        return self.batch(x)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bias": float(self.bias),
            "embeddings": self.embeddings.tolist(),
            "relations": self.relations.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            d["kind"],
            np.asarray(d["embeddings"], dtype=np.float64),
            np.asarray(d["relations"], dtype=np.float64),
            float(d.get("bias", 0.0)),
        )


@dataclass
class SyntheticDataset:
    triples: TripleSet
    truth: GroundTruth
    spec: GeneratorSpec
    # realised 0/1 graph over all candidates, shape (K, N, N); binary designs only
    graph: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.triples)


def build_truth(spec: GeneratorSpec, rng=None) -> GroundTruth:
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    u = rng.standard_normal((spec.N, spec.d))
    width = 2 * spec.d if spec.kind in ("concat_linear", "logistic") else spec.d
    v = rng.standard_normal((spec.K, width))
    bias = spec.bias if spec.kind in BINARY_KINDS else 0.0
    return GroundTruth(spec.kind, u, v, bias)


def sample_uniform_triples(N: int, K: int, n: int, rng) -> TripleSet:
    return TripleSet(
        rng.integers(0, N, size=n), rng.integers(0, K, size=n), rng.integers(0, N, size=n)
    )


def sample_regression(spec: GeneratorSpec, n: int, truth: GroundTruth | None = None,
                      rng=None) -> SyntheticDataset:
    """``n`` i.i.d. uniform triples with ``y = gamma(x) + N(0, sigma^2)``."""
    if spec.kind not in REGRESSION_KINDS:
        raise ConfigError(f"{spec.kind!r} is not a regression design")
    rng = np.random.default_rng([spec.seed, 1] if rng is None else rng)
    truth = truth or build_truth(spec)
    ts = sample_uniform_triples(spec.N, spec.K, n, rng)
    if spec.relation_noise_stds is not None:
        sigma = np.asarray(spec.relation_noise_stds)[ts.relations]
    else:
        sigma = np.asarray(spec.noise_stds)[rng.integers(0, len(spec.noise_stds), size=n)]
    y = truth.batch(ts) + sigma * rng.standard_normal(n)
    return SyntheticDataset(TripleSet(ts.heads, ts.relations, ts.tails, y, sigma), truth, spec)


def all_triples(N: int, K: int) -> TripleSet:
    """Every (h, r, t), ordered by relation, then head, then tail."""
    r, h, t = np.meshgrid(np.arange(K), np.arange(N), np.arange(N), indexing="ij")
    return TripleSet(h.ravel(), r.ravel(), t.ravel())


def sample_binary_positive_only(spec: GeneratorSpec, max_n: int | None = None,
                                truth: GroundTruth | None = None, rng=None) -> SyntheticDataset:
    """Bernoulli draw over all ``N^2 K`` candidates; keep at most ``max_n`` positives."""
    if spec.kind not in BINARY_KINDS:
        raise ConfigError(f"{spec.kind!r} is not a binary design")
    rng = np.random.default_rng([spec.seed, 2] if rng is None else rng)
    truth = truth or build_truth(spec)
    cand = all_triples(spec.N, spec.K)
    p = truth.batch(cand)
    y = rng.random(len(cand)) < p
    graph = y.reshape(spec.K, spec.N, spec.N)
    pos = np.flatnonzero(y)
    if max_n is not None and pos.size > max_n:
        pos = np.sort(rng.choice(pos, size=max_n, replace=False))
    kept = cand.subset(pos).with_labels(np.ones(pos.size))
    return SyntheticDataset(kept, truth, spec, graph)
