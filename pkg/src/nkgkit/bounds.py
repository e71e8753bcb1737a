"""Closed-form capacity bounds and a brute-force shattering oracle.

Order bounds written with an unspecified constant are evaluated with the
constant set to 1 and natural logarithms; they are growth functions, not
certified upper bounds. The partition-count VC bound carries explicit
constants and is a genuine upper bound.

Any logarithm whose argument would drop below its floor is clamped, and the
clamp is reported on the returned :class:`Bound`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetExceededError, ConfigError

# Out-of-sample oracle-inequality constant for capped weights; kept exactly,
# not re-derived here.
CAPPED_ORACLE_CONSTANT = 22132


@dataclass(frozen=True)
class Bound:
    name: str
    value: float
    clamped: bool = False
    kind: str = "growth"  # "growth" (constant 1) or "upper" (explicit constants)
    note: str = ""

    def __float__(self):
        return float(self.value)


def _log_floor(x: float, floor: float) -> tuple[float, bool]:
    if x < floor:
        return math.log(floor), True
    return math.log(x), False


def _log0(x: float) -> tuple[float, bool]:
    """``log x`` clamped at 0 (i.e. ``x`` floored at 1)."""
    if x < 1.0:
        return 0.0, True
    return math.log(x), False


# --------------------------------------------------------------------------
# shape bookkeeping


FAMILIES = ("cnkg", "ipnkg")


@dataclass
class BoundInputs:
    """Sizes feeding every bound.

    ``hidden`` lists the hidden widths of each relation network (one tuple per
    relation, or a single tuple shared by all). Input and output widths follow
    from ``family``: C-NKG nets map 2D -> 1, IP-NKG nets map D -> D' and come
    in pairs. ``S`` / ``Q`` describe a piecewise-polynomial activation (ReLU:
    S=2, Q=1).
    """

    N: int
    D: int
    K: int
    hidden: Sequence = (32,)
    family: str = "cnkg"
    out_dim: int | None = None
    S: int = 2
    Q: int = 1
    B: float = 1.0
    sigma_h2: float = 1.0
    n: int = 1
    delta_opt: float = 0.0
    per_relation_hidden: list[tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        if min(self.N, self.D, self.K) < 1:
            raise ConfigError("N, D, K must be positive")
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}")
        if self.S < 1 or self.Q < 0:
            raise ConfigError("need S >= 1 and Q >= 0")
        h = list(self.hidden)
        if h and isinstance(h[0], (list, tuple)):
            if len(h) != self.K:
                raise ConfigError(f"got hidden widths for {len(h)} relations, K={self.K}")
            per = [tuple(int(x) for x in hk) for hk in h]
        else:
            per = [tuple(int(x) for x in h)] * self.K
        if any(w < 1 for hk in per for w in hk):
            raise ConfigError("hidden widths must be positive")
        self.per_relation_hidden = per

    def widths(self, k: int) -> list[int]:
        """Full layer sizes ``(H0, ..., HL)`` of one network of relation ``k``."""
        if self.family == "cnkg":
            return [2 * self.D, *self.per_relation_hidden[k], 1]
        return [self.D, *self.per_relation_hidden[k], self.out_dim or self.D]

    def layer_params(self, k: int) -> list[int]:
        """``W_k^(i)`` for i = 1..L_k (weights + biases; IP-NKG counts both nets)."""
        w = self.widths(k)
        per = [(a + 1) * b for a, b in zip(w[:-1], w[1:])]
        if self.family == "ipnkg":
            per = [2 * p for p in per]
        return per

    def W_k(self, k: int) -> int:
        return sum(self.layer_params(k))

    @property
    def W_list(self) -> list[int]:
        return [self.W_k(k) for k in range(self.K)]

    @property
    def L_list(self) -> list[int]:
        return [len(self.per_relation_hidden[k]) + 1 for k in range(self.K)]

    @property
    def W(self) -> float:
        return sum(self.W_list) / self.K

    @property
    def L(self) -> int:
        return max(self.L_list)

    def unit_counts(self) -> list[int]:
        """``H_l`` for l = 1..L: hidden units summed over relations, ``H_L = 1``."""
        out = []
        for ell in range(self.L - 1):
            out.append(sum(h[ell] for h in self.per_relation_hidden if len(h) > ell))
        out.append(1)
        return out

    def L_bar(self) -> float:
        """``(1/(K W)) sum_k sum_l sum_{i<=l} W_k^(i)`` (cumulative layer counts)."""
        total = 0
        for k in range(self.K):
            total += sum(np.cumsum(self.layer_params(k)))
        return total / (self.K * self.W)


# --------------------------------------------------------------------------
# calculators


def moe_vc_bound(vc_dims: Sequence[int]) -> int:
    """VC dimension of a designated-expert mixture is at most ``4 * sum``."""
    dims = [int(v) for v in vc_dims]
    if not dims:
        raise ValueError("need at least one expert")
    if any(v < 0 for v in dims):
        raise ValueError("VC dimensions are nonnegative")
    return 4 * sum(dims)


def pdim_fixed_embedding(L: Sequence[int], W: Sequence[int]) -> Bound:
    """``sum_k L_k W_k log W_k`` with ``log`` floored at ``log 2``."""
    L, W = list(L), list(W)
    if len(L) != len(W) or not L:
        raise ValueError("need aligned, nonempty per-relation lists")
    total, clamped = 0.0, False
    for lk, wk in zip(L, W):
        lg, c = _log_floor(wk, 2.0)
        clamped |= c
        total += lk * wk * lg
    return Bound("pdim_fixed_embedding", total, clamped)


def pdim_trainable_embedding(N: int, D: int, K: int, W_avg: float, L: int) -> Bound:
    """``(N D + K W) L log(K W)`` with ``log`` floored at ``log 2``."""
    if min(N, D, K, W_avg, L) <= 0:
        raise ValueError("all arguments must be positive")
    lg, clamped = _log_floor(K * W_avg, 2.0)
    return Bound("pdim_trainable_embedding", (N * D + K * W_avg) * L * lg, clamped)


def partition_growth_U(inputs: BoundInputs, family: str | None = None) -> int:
    """``U`` of the partition-count argument.

    Concatenation: ``S sum_l (l+1) H_l`` if Q = 1, ``3 S sum_l H_l Q^l`` if Q >= 2.
    Inner product doubles either value. ``Q = 0`` (piecewise constant) is
    treated like ``Q = 1``.
    """
    family = family or inputs.family
    H = inputs.unit_counts()
    S, Q = inputs.S, inputs.Q
    if Q <= 1:
        U = S * sum((ell + 1) * h for ell, h in enumerate(H, start=1))
    else:
        U = 3 * S * sum(h * Q ** ell for ell, h in enumerate(H, start=1))
    return 2 * U if family == "ipnkg" else U


def vc_partition_bound(inputs: BoundInputs, family: str | None = None) -> Bound:
    """``3 (L N D + Lbar K W) log(8 e U)``; explicit constants."""
    family = family or inputs.family
    if family != inputs.family:
        inputs = BoundInputs(**{**_fields(inputs), "family": family})
    U = partition_growth_U(inputs, family)
    KW = inputs.K * inputs.W
    value = 3.0 * (inputs.L * inputs.N * inputs.D + inputs.L_bar() * KW) * math.log(8 * math.e * U)
    return Bound("vc_partition", value, False, kind="upper",
                 note=f"U={U}, Lbar={inputs.L_bar():.6g}")


def _fields(inputs: BoundInputs) -> dict:
    return {
        "N": inputs.N, "D": inputs.D, "K": inputs.K, "hidden": inputs.per_relation_hidden,
        "family": inputs.family, "out_dim": inputs.out_dim, "S": inputs.S, "Q": inputs.Q,
        "B": inputs.B, "sigma_h2": inputs.sigma_h2, "n": inputs.n, "delta_opt": inputs.delta_opt,
    }


def delta_stat(inputs: BoundInputs, regime: str = "in_sample") -> Bound:
    """Statistical error term of the knowledge-graph oracle inequalities.

    in_sample:      (sigma_H^2 + B^2) P log(K W) / n * log(n / P)
    out_of_sample:  B^2 P log(K W) / n * log(n / P),   P = (N D + K W) L

    The outer ``log(n/P)`` is clamped at 0 for ``n < P``.
    """
    if inputs.n <= 0:
        raise ValueError("n must be positive")
    if regime not in ("in_sample", "out_of_sample"):
        raise ValueError("regime is 'in_sample' or 'out_of_sample'")
    KW = inputs.K * inputs.W
    P = (inputs.N * inputs.D + KW) * inputs.L
    lkw, c1 = _log_floor(KW, 2.0)
    lnp, c2 = _log0(inputs.n / P)
    scale = inputs.B ** 2 + (inputs.sigma_h2 if regime == "in_sample" else 0.0)
    return Bound(f"delta_stat_{regime}", scale * P * lkw / inputs.n * lnp, c1 or c2)


def oracle_terms(inputs: BoundInputs, p: float | None = None) -> list[Bound]:
    """Explicit-constant variance terms of the general oracle inequalities with
    the recommended weights, evaluated at pseudo-dimension ``p``."""
    if p is None:
        p = pdim_trainable_embedding(inputs.N, inputs.D, inputs.K, inputs.W, inputs.L).value
    n = inputs.n
    lg, c = _log0(math.e * n / p)
    ins = 4 * (27 * inputs.sigma_h2 + inputs.B ** 2) * p / n * lg
    outs = CAPPED_ORACLE_CONSTANT * inputs.B ** 2 * p / n * lg
    return [
        Bound("oracle_in_sample_inverse_variance", ins, c, kind="upper",
              note="4(27 sigma_H^2 + B^2) p/n log(en/p) + 3 approx + 2 delta_opt"),
        Bound("oracle_out_of_sample_capped", outs, c, kind="upper",
              note=f"{CAPPED_ORACLE_CONSTANT} B^2 p/n log(en/p) + 27 approx + 6 delta_opt"),
    ]


# --------------------------------------------------------------------------
# brute-force oracle


def sign_matrix(functions: Sequence[Callable], domain: Sequence) -> np.ndarray:
    """Evaluate a finite class on a finite domain; rows = functions, 0/1 entries."""
    return np.array([[1 if f(x) > 0 else 0 for x in domain] for f in functions], dtype=np.uint8)


def brute_force_vc(patterns, max_points: int | None = None, budget: int = 10**7) -> int:
    """Largest ``m`` such that some ``m``-subset of the domain is shattered.

    ``patterns`` is a (functions x points) 0/1 matrix, e.g. from
    :func:`sign_matrix`. Raises :class:`BudgetExceededError` once the search
    would inspect more than ``budget`` (subset, function) pairs.
    """
    P = np.unique(np.asarray(patterns, dtype=np.uint8), axis=0)
    n_funcs, n_points = P.shape
    if max_points is None:
        max_points = n_points
    max_points = min(max_points, n_points)
    work = 0
    best = 0
    for m in range(1, max_points + 1):
        if 2 ** m > n_funcs:
            break
        weights = (1 << np.arange(m, dtype=np.int64))
        found = False
        for subset in itertools.combinations(range(n_points), m):
            work += n_funcs
            if work > budget:
                raise BudgetExceededError(
                    f"shattering search exceeded {budget} evaluations at m={m}"
                )
            codes = P[:, subset].astype(np.int64) @ weights
            if np.unique(codes).size == 2 ** m:
                found = True
                break
        if not found:
            break
        best = m
    return best


def threshold_class(points: Sequence[float]):
    """Functions ``x -> [x > t]`` for every distinct cut of ``points``."""
    xs = sorted(set(points))
    cuts = [xs[0] - 1.0] + [(a + b) / 2 for a, b in zip(xs[:-1], xs[1:])] + [xs[-1] + 1.0]
    return [(lambda x, t=t: float(x > t)) for t in cuts]


def interval_class(points: Sequence[float]):
    """Indicators of ``[a, b]`` for all cut pairs, plus the empty set."""
    xs = sorted(set(points))
    cuts = [xs[0] - 1.0] + [(a + b) / 2 for a, b in zip(xs[:-1], xs[1:])] + [xs[-1] + 1.0]
    funcs = [lambda x: 0.0]
    for i, a in enumerate(cuts):
        for b in cuts[i + 1 :]:
            funcs.append(lambda x, a=a, b=b: float(a < x < b))
    return funcs


def moe_class(expert_classes: Sequence[Sequence[Callable]]):
    """Designated-expert mixture over domain points ``(x, k)``."""
    return [
        (lambda xk, combo=combo: combo[xk[1]](xk[0]))
        for combo in itertools.product(*expert_classes)
    ]
