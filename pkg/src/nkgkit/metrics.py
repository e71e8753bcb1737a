"""Evaluation: weighted MSE against ``gamma``, AUC, classification error and
same-category negative sampling."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ShapeError, UncorruptableError
from .models import EmbeddingTable, ScoreModel, TripleSet, as_triple_set, batch_score

log = logging.getLogger(__name__)


def _oracle_values(truth, ts: TripleSet) -> np.ndarray:
    if hasattr(truth, "batch"):
        return np.asarray(truth.batch(ts), dtype=np.float64)
    return np.array([truth(x) for x in ts], dtype=np.float64)


def weighted_mse(model: ScoreModel, emb: EmbeddingTable, triples, weights, truth) -> float:
    """``(1/n) sum_i w_i (f(x_i) - gamma(x_i))^2``.

    ``truth`` is any callable on a :class:`Triple`; objects with a vectorised
    ``batch`` method are used directly.
    """
    ts = as_triple_set(triples)
    if len(ts) == 0:
        return 0.0
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), (len(ts),))
    diff = batch_score(model, emb, ts) - _oracle_values(truth, ts)
    return float(np.mean(w * diff * diff))


def auc(positive_scores, negative_scores) -> float:
    """``P(s+ > s-) + P(s+ = s-)/2`` via midranks (Mann-Whitney U)."""
    pos = np.asarray(positive_scores, dtype=np.float64).ravel()
    neg = np.asarray(negative_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one positive and one negative score")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def classification_error(scores, labels, threshold: float = 0.0) -> float:
    """Fraction of samples where ``score > threshold`` disagrees with ``label > 0``.

    Labels may be 0/1, -1/+1 or booleans.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores vs {y.size} labels")
    if s.size == 0:
        return 0.0
    return float(np.mean((s > threshold) != (y.astype(np.float64) > 0)))


def best_threshold(positive_scores, negative_scores) -> float:
    """Threshold minimising the error on a labelled calibration set."""
    pos = np.asarray(positive_scores, dtype=np.float64)
    neg = np.asarray(negative_scores, dtype=np.float64)
    cand = np.unique(np.concatenate([pos, neg]))
    # midpoints between consecutive distinct scores, plus both outer sides
    mids = np.concatenate([[cand[0] - 1.0], (cand[:-1] + cand[1:]) / 2.0, [cand[-1] + 1.0]])
    pos_s, neg_s = np.sort(pos), np.sort(neg)
    fn = np.searchsorted(pos_s, mids, side="right")         # pos <= t
    fp = neg_s.size - np.searchsorted(neg_s, mids, side="right")  # neg > t
    return float(mids[int(np.argmin(fn + fp))])


def corrupt_negatives(triples, entity_categories, seed=None, positives=None,
                      max_retries: int = 100, return_sides: bool = False):
    """One same-category corruption per positive triple.

    A fair coin picks the side; the replacement is uniform over the other
    members of that entity's category. If the chosen side's category has a
    single member the other side is used; if both are singletons the triple
    is uncorruptable. Candidates that are themselves in ``positives`` (default:
    the input triples) are resampled up to ``max_retries`` times.
    """
    ts = as_triple_set(triples)
    cats = list(entity_categories)
    codes_of = {}
    codes = np.array([codes_of.setdefault(c, len(codes_of)) for c in cats], dtype=np.int64)
    members = [np.flatnonzero(codes == i) for i in range(len(codes_of))]
    known = set(ts.keys() if positives is None else as_triple_set(positives).keys())
    rng = np.random.default_rng(seed)
    heads = ts.heads.copy()
    tails = ts.tails.copy()
    sides = np.zeros(len(ts), dtype=bool)
    exhausted = 0
    for i in range(len(ts)):
        h, r, t = int(ts.heads[i]), int(ts.relations[i]), int(ts.tails[i])
        if max(h, t) >= codes.size:
            raise UncorruptableError(f"entity index in triple #{i} has no category")
        pool_h = members[codes[h]]
        pool_t = members[codes[t]]
        use_head = rng.random() < 0.5
        if use_head and pool_h.size < 2:
            use_head = False
        elif not use_head and pool_t.size < 2:
            use_head = True
        if (use_head and pool_h.size < 2) or (not use_head and pool_t.size < 2):
            raise UncorruptableError(
                f"triple #{i} ({h}, {r}, {t}): both entities are alone in their category"
            )
        pool, orig = (pool_h, h) if use_head else (pool_t, t)
        at = int(np.searchsorted(pool, orig))
        for _ in range(max_retries + 1):
            # uniform over pool minus the original: skip over its slot
            k = int(rng.integers(0, pool.size - 1))
            new = int(pool[k if k < at else k + 1])
            cand = (new, r, t) if use_head else (h, r, new)
            if cand not in known:
                break
        else:
            exhausted += 1
        heads[i], tails[i] = cand[0], cand[2]
        sides[i] = use_head
    if exhausted:
        log.warning("%d negatives still collide with positives after %d retries",
                    exhausted, max_retries)
    neg = TripleSet(heads, ts.relations.copy(), tails)
    return (neg, sides) if return_sides else neg


@dataclass
class EvalReport:
    weighted_mse_in: float = float("nan")
    weighted_mse_out: float = float("nan")
    mse_out: float = float("nan")
    mse_out_vs_labels: float = float("nan")
    auc_per_relation: dict[int, float] = field(default_factory=dict)
    weighted_auc_avg: float = float("nan")
    classification_error: float = float("nan")
    n_eval: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for k, a in self.auc_per_relation.items():
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"AUC for relation {k} outside [0, 1]: {a}")
        if not np.isnan(self.classification_error) and not 0 <= self.classification_error <= 1:
            raise ValueError("classification error outside [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["auc_per_relation"] = {str(k): v for k, v in sorted(self.auc_per_relation.items())}
        return d

    def flat(self) -> dict[str, float]:
        """Scalar metrics only, with per-relation AUCs as ``auc_r<k>``."""
        out = {
            "weighted_mse_in": self.weighted_mse_in,
            "weighted_mse_out": self.weighted_mse_out,
            "mse_out": self.mse_out,
            "mse_out_vs_labels": self.mse_out_vs_labels,
            "weighted_auc_avg": self.weighted_auc_avg,
            "classification_error": self.classification_error,
        }
        for k, v in sorted(self.auc_per_relation.items()):
            out[f"auc_r{k}"] = v
        return out


def per_relation_auc(pos_scores, pos_rel, neg_scores, neg_rel):
    """AUC per relation and its average weighted by evaluation size."""
    pos_scores, neg_scores = np.asarray(pos_scores), np.asarray(neg_scores)
    pos_rel, neg_rel = np.asarray(pos_rel), np.asarray(neg_rel)
    out, sizes = {}, {}
    for k in np.unique(np.concatenate([pos_rel, neg_rel])):
        p = pos_scores[pos_rel == k]
        q = neg_scores[neg_rel == k]
        if p.size and q.size:
            out[int(k)] = auc(p, q)
            sizes[int(k)] = p.size + q.size
    if not out:
        return out, float("nan")
    total = sum(sizes.values())
    avg = sum(out[k] * sizes[k] for k in out) / total
    return out, float(avg)
