"""Replicated experiments, sweeps and the desk-scale presets.

Seeding: replication ``r`` of an experiment with base seed ``b`` uses
``seed_r = SeedSequence([b, r]).generate_state(1)[0]`` (a 32-bit integer).
Within a replication independent streams are ``default_rng([seed_r, j])``:

    j = 1 training sample / positive graph    j = 2 fresh test sample
    j = 3 model parameters                    j = 4 embedding table
    j = 5 train/test split                    j = 6, 7 train/test negatives

The ground truth itself is built from ``seed_r``. Two configs that differ only
in modelling choices therefore see identical data for the same replication,
which is what paired comparisons rely on.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as kio
from .errors import ConfigError, NkgError
from .metrics import (
    EvalReport,
    auc,
    batch_score,
    best_threshold,
    classification_error,
    corrupt_negatives,
    per_relation_auc,
    weighted_mse,
)
from .models import TripleSet, build_model
from .synthetic import (
    BINARY_KINDS,
    GENERATOR_KINDS,
    REGRESSION_KINDS,
    GeneratorSpec,
    build_truth,
    sample_binary_positive_only,
    sample_regression,
)
from .training import (
    INIT_KINDS,
    LOSS_KINDS,
    WEIGHT_KINDS,
    Adam,
    InitStrategy,
    Sgd,
    TrainConfig,
    WeightScheme,
    compute_weights,
    init_embeddings,
    train,
)

log = logging.getLogger(__name__)

EVAL_PROTOCOLS = ("fresh_mse", "negative_auc")
SPLITS = ("relation", "global")
DEFAULT_LAMBDAS = (0.1, 1.0, 10.0, 100.0, 1000.0)


def _tuple(cast):
    def parse(v):
        if isinstance(v, str):
            v = [p for p in v.replace(" ", "").split(",") if p]
        return tuple(cast(x) for x in v)
    return parse


def _opt(cast):
    def parse(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
            return None
        return cast(v)
    return parse


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


@dataclass
class ExperimentConfig:
    """Everything one replicated experiment needs; flat ``key = value`` schema.

    ``generator`` is a synthetic design or ``file`` (then ``data_path`` holds
    positive triples and ``vocab_path`` an optional entity vocabulary with
    categories). ``init_source`` is ``truth`` (synthetic ground-truth
    embeddings) or an embedding file.
    """

    # data
    generator: str = "concat_linear"
    N: int = 100
    d: int = 10
    K: int = 5
    noise_stds: tuple = (1.0, 5.0)
    relation_noise_stds: tuple | None = None
    bias: float = -3.0
    n_train: int = 10000
    n_test: int = 10000
    max_positives: int | None = None
    data_path: str | None = None
    vocab_path: str | None = None
    # model
    model: str = "cnkg"
    hidden: tuple = (32,)
    rho: str = "identity"
    dim: int | None = None
    # sample weights
    weighting: str = "uniform"
    cap: float = 1.0
    ratio: float = 1.0
    low_noise_relations: tuple = ()
    # embedding initialisation
    init: str = "random"
    init_scale: float = 1.0
    init_source: str | None = None
    init_noise_std: float = 0.0
    # training
    loss: str = "weighted_square"
    margin: float = 1.0
    negatives: int = 1
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    # evaluation
    eval: str = "fresh_mse"
    split: str = "relation"
    test_fraction: float = 0.2
    # replication
    replications: int = 10
    base_seed: int = 0
    workers: int = 1
    output_dir: str | None = None

    _PARSERS = {
        "noise_stds": _tuple(float), "relation_noise_stds": _opt(_tuple(float)),
        "hidden": _tuple(int), "low_noise_relations": _tuple(int),
        "max_positives": _opt(int), "dim": _opt(int), "data_path": _opt(str),
        "vocab_path": _opt(str), "init_source": _opt(str), "output_dir": _opt(str),
    }

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        names = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = cls._coerce(key, raw, names[key])
        return cls(**kwargs)

    @classmethod
    def _coerce(cls, key, raw, f):
        if not isinstance(raw, str):
            return raw
        parser = cls._PARSERS.get(key)
        if parser is None:
            default = f.default
            parser = {bool: _bool, int: int, float: float}.get(type(default), str)
        try:
            return parser(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        values = kio.load_config(path)
        values.update(overrides or {})
        return cls.from_mapping(values)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self) -> str:
        return kio.format_config(self.to_mapping())

    def validate(self) -> None:
        for key in ("noise_stds", "hidden", "low_noise_relations", "relation_noise_stds"):
            v = getattr(self, key)
            if v is not None:
                setattr(self, key, tuple(v))
        choices = {
            "generator": GENERATOR_KINDS + ("file",), "weighting": WEIGHT_KINDS,
            "init": INIT_KINDS, "loss": LOSS_KINDS, "optimizer": ("adam", "sgd"),
            "eval": EVAL_PROTOCOLS, "split": SPLITS, "rho": ("identity", "logistic"),
            "model": ("cnkg", "ipnkg", "transe", "mip", "concat_linear"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        positive = ("N", "d", "K", "n_train", "n_test", "epochs", "batch_size",
                    "replications", "workers", "negatives")
        for key in positive:
            if int(getattr(self, key)) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.dim is not None and self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be >= 1")
        if self.generator == "file":
            if not self.data_path:
                raise ConfigError("generator=file needs data_path")
            if self.eval != "negative_auc":
                raise ConfigError("file data supports only eval=negative_auc")
        elif self.eval == "fresh_mse" and self.generator not in REGRESSION_KINDS:
            raise ConfigError(f"eval=fresh_mse needs a regression generator {REGRESSION_KINDS}")
        elif self.eval == "negative_auc" and self.generator not in BINARY_KINDS:
            raise ConfigError(f"eval=negative_auc needs a binary generator {BINARY_KINDS}")
        if self.init != "random" and not self.init_source:
            raise ConfigError(f"init={self.init} needs init_source")
        if any(r < 0 or r >= self.K for r in self.low_noise_relations) and self.generator != "file":
            raise ConfigError("low_noise_relations must index relations in [0, K)")
        # builds (and validates) the component configs
        self.weight_scheme()
        self.train_config(0)
        if self.generator != "file":
            self.generator_spec(0)

    # -- component configs -------------------------------------------------

    def generator_spec(self, seed: int) -> GeneratorSpec:
        return GeneratorSpec(self.generator, N=self.N, d=self.d, K=self.K,
                             noise_stds=self.noise_stds, bias=self.bias, seed=seed,
                             relation_noise_stds=self.relation_noise_stds)

    def weight_scheme(self) -> WeightScheme:
        return WeightScheme(self.weighting, cap=self.cap, ratio=self.ratio,
                            low_noise_relations=self.low_noise_relations)

    def make_optimizer(self):
        if self.optimizer == "adam":
            return Adam(self.lr, self.beta1, self.beta2, self.eps)
        return Sgd(self.lr, self.momentum)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(loss=self.loss, margin=self.margin,
                           negatives_per_positive=self.negatives,
                           optimizer=self.make_optimizer(), epochs=self.epochs,
                           batch_size=self.batch_size, seed=seed,
                           weighting=self.weight_scheme())


def derive_seed(base_seed: int, replication: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(replication)]).generate_state(1)[0])


# --------------------------------------------------------------------------
# one replication


@dataclass
class ReplicationResult:
    replication: int
    seed: int
    status: str = "ok"
    error: str = ""
    metrics: dict = field(default_factory=dict)
    loss_trace: list = field(default_factory=list)

    def row(self) -> dict:
        return {"replication": self.replication, "seed": self.seed, "status": self.status,
                "error": self.error, **self.metrics}


def split_indices(ts: TripleSet, test_fraction: float, rng, by_relation: bool = True):
    """Train/test index arrays; per-relation stratified unless ``by_relation`` is False."""
    groups = ([np.flatnonzero(ts.relations == k) for k in np.unique(ts.relations)]
              if by_relation else [np.arange(len(ts))])
    tr, te = [], []
    for g in groups:
        perm = g[rng.permutation(g.size)]
        n_te = int(round(test_fraction * g.size))
        te.append(perm[:n_te])
        tr.append(perm[n_te:])
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.array([], dtype=np.int64)
    return cat(tr), cat(te)


def _init_strategy(cfg: ExperimentConfig, truth):
    if cfg.init == "random":
        return InitStrategy("random", scale=cfg.init_scale)
    if cfg.init_source == "truth":
        if truth is None:
            raise ConfigError("init_source=truth needs a synthetic generator")
        source = truth.embeddings
    else:
        source = cfg.init_source
    return InitStrategy(cfg.init, scale=cfg.init_scale, source=source,
                        noise_std=cfg.init_noise_std)


def _edge_auc(scores, truth_values, relations):
    """AUC of scores against the sign of gamma (edges: gamma > 0)."""
    edge = truth_values > 0
    if edge.all() or not edge.any():
        return {}, float("nan")
    return per_relation_auc(scores[edge], relations[edge], scores[~edge], relations[~edge])


def _run_fresh_mse(cfg: ExperimentConfig, seed: int):
    spec = cfg.generator_spec(seed)
    truth = build_truth(spec)
    tr = sample_regression(spec, cfg.n_train, truth, rng=[seed, 1]).triples
    te = sample_regression(spec, cfg.n_test, truth, rng=[seed, 2]).triples
    D = cfg.dim or cfg.d
    model = build_model(cfg.model, cfg.K, D, cfg.hidden, rng=[seed, 3], rho=cfg.rho)
    emb = init_embeddings(_init_strategy(cfg, truth), cfg.N, D, seed=[seed, 4])
    rep = train(model, emb, tr, cfg.train_config(seed))
    s_te = batch_score(model, emb, te)
    g_te = truth.batch(te)
    per_rel, avg = _edge_auc(s_te, g_te, te.relations)
    report = EvalReport(
        weighted_mse_in=weighted_mse(model, emb, tr, rep.weights, truth),
        weighted_mse_out=weighted_mse(model, emb, te, compute_weights(cfg.weight_scheme(), te),
                                      truth),
        mse_out=float(np.mean((s_te - g_te) ** 2)),
        mse_out_vs_labels=float(np.mean((s_te - te.labels) ** 2)),
        auc_per_relation=per_rel,
        weighted_auc_avg=avg,
        classification_error=classification_error(s_te, g_te > 0, 0.0),
        n_eval={"train": len(tr), "test": len(te)},
    )
    return report, rep, model


def _load_file_data(cfg: ExperimentConfig):
    vocab = kio.load_vocabulary(cfg.vocab_path) if cfg.vocab_path else None
    ts, vocab = kio.load_triples(cfg.data_path, vocab)
    return ts, vocab


def _run_negative_auc(cfg: ExperimentConfig, seed: int):
    truth = None
    if cfg.generator == "file":
        positives, vocab = _load_file_data(cfg)
        N, K = vocab.n_entities, max(vocab.n_relations, 1)
        cats = vocab.categories or ["all"] * N
        names = vocab.entities
    else:
        spec = cfg.generator_spec(seed)
        truth = build_truth(spec)
        positives = sample_binary_positive_only(spec, cfg.max_positives, truth, rng=[seed, 1]).triples
        N, K, cats, names = cfg.N, cfg.K, ["all"] * cfg.N, None
    if len(positives) < 2:
        raise ConfigError(f"only {len(positives)} positive triples; cannot split")
    tr_idx, te_idx = split_indices(positives, cfg.test_fraction, np.random.default_rng([seed, 5]),
                                   by_relation=cfg.split == "relation")
    tr, te = positives.subset(tr_idx), positives.subset(te_idx)
    tr_neg = corrupt_negatives(tr, cats, [seed, 6], positives=positives)
    te_neg = corrupt_negatives(te, cats, [seed, 7], positives=positives)

    D = cfg.dim or cfg.d
    model = build_model(cfg.model, K, D, cfg.hidden, rng=[seed, 3], rho=cfg.rho)
    strategy = _init_strategy(cfg, truth)
    # embedding files are matched to entities by id when ids are known
    by_id = names if cfg.init_source not in (None, "truth") else None
    emb = init_embeddings(strategy, N, D, seed=[seed, 4], vocabulary=by_id,
                          categories=cats if cfg.generator == "file" else None)
    if cfg.loss == "weighted_square":
        # positives labelled 1, their corruptions labelled 0
        fit = TripleSet(np.r_[tr.heads, tr_neg.heads], np.r_[tr.relations, tr_neg.relations],
                        np.r_[tr.tails, tr_neg.tails], np.r_[np.ones(len(tr)), np.zeros(len(tr_neg))])
    else:
        fit = tr
    rep = train(model, emb, fit, cfg.train_config(seed))

    thr = best_threshold(batch_score(model, emb, tr), batch_score(model, emb, tr_neg))
    sp, sn = batch_score(model, emb, te), batch_score(model, emb, te_neg)
    per_rel, avg = per_relation_auc(sp, te.relations, sn, te_neg.relations)
    err = classification_error(np.r_[sp, sn], np.r_[np.ones(sp.size), np.zeros(sn.size)], thr)
    report = EvalReport(
        auc_per_relation=per_rel,
        weighted_auc_avg=avg,
        classification_error=err,
        n_eval={"train": len(tr), "test": len(te), "test_negatives": len(te_neg)},
    )
    report.auc_pooled = auc(sp, sn)
    return report, rep, model


def run_replication(cfg: ExperimentConfig, replication: int) -> ReplicationResult:
    """One replication; failures are caught and recorded, never raised."""
    seed = derive_seed(cfg.base_seed, replication)
    res = ReplicationResult(replication, seed)
    try:
        runner = _run_fresh_mse if cfg.eval == "fresh_mse" else _run_negative_auc
        report, rep, model = runner(cfg, seed)
    except (NkgError, FloatingPointError, ValueError) as exc:
        res.status = "failed"
        res.error = f"{getattr(exc, 'category', type(exc).__name__)}: {exc}"
        log.warning("replication %d failed: %s", replication, res.error)
        return res
    metrics = report.flat()
    if hasattr(report, "auc_pooled"):
        metrics["auc_pooled"] = report.auc_pooled
    metrics.update(initial_loss=rep.initial_loss, final_loss=rep.final_loss,
                   delta_opt=rep.delta_opt, n_params=model.n_params(),
                   n_fit=report.n_eval.get("train", 0))
    res.metrics = metrics
    res.loss_trace = list(rep.loss_trace)
    return res


# --------------------------------------------------------------------------
# replicated experiment


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    replications: list[ReplicationResult]
    summary: dict[str, dict[str, float]]
    files: dict[str, Path] = field(default_factory=dict)

    @property
    def ok(self) -> list[ReplicationResult]:
        return [r for r in self.replications if r.status == "ok"]

    def values(self, metric: str) -> np.ndarray:
        """Per-replication values of ``metric`` (NaN for failed replications)."""
        return np.array([r.metrics.get(metric, np.nan) if r.status == "ok" else np.nan
                         for r in self.replications], dtype=np.float64)


def summarize(results: Sequence[ReplicationResult]) -> dict[str, dict[str, float]]:
    """Mean and population standard deviation (ddof=0) over successful replications."""
    ok = [r for r in results if r.status == "ok"]
    keys = []
    for r in ok:
        keys.extend(k for k in r.metrics if k not in keys)
    out = {}
    for k in keys:
        vals = np.array([r.metrics[k] for r in ok if k in r.metrics], dtype=np.float64)
        vals = vals[~np.isnan(vals)]
        if vals.size:  # metrics the protocol does not produce are dropped
            out[k] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)),
                      "n": int(vals.size)}
    return out


def run_experiment(cfg: ExperimentConfig, output_dir=None, figures: bool = True,
                   progress=None) -> ExperimentResult:
    """Run every replication, then write the result bundle if a directory is given.

    Bundle: ``config.txt``, ``per_seed.csv``, ``summary.csv``, ``summary.json``,
    ``loss_trace.csv`` and, with ``figures``, ``loss_trace.png``.
    """
    reps = range(cfg.replications)
    if cfg.workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_replication, [cfg] * cfg.replications, reps))
    else:
        results = []
        for r in reps:
            results.append(run_replication(cfg, r))
            if progress:
                progress(results[-1])
    result = ExperimentResult(cfg, results, summarize(results))
    out = output_dir or cfg.output_dir
    if out is not None:
        result.files = write_bundle(result, Path(out), figures)
    return result


def write_bundle(result: ExperimentResult, out: Path, figures: bool = True) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "config": out / "config.txt", "per_seed": out / "per_seed.csv",
        "summary_csv": out / "summary.csv", "summary_json": out / "summary.json",
        "loss_trace": out / "loss_trace.csv",
    }
    # the bundle location is not part of the recorded config
    files["config"].write_text(result.config.replace(output_dir=None).to_text(), encoding="utf-8")
    rows = [r.row() for r in result.replications]
    cols = ["replication", "seed", "status", "error"]
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    kio.write_csv(files["per_seed"], rows, cols)
    kio.write_csv(files["summary_csv"],
                  [{"metric": k, **v} for k, v in result.summary.items()],
                  ["metric", "mean", "std", "n"])
    kio.write_json(files["summary_json"], {
        "summary": result.summary,
        "replications": len(result.replications),
        "failed": [r.row() for r in result.replications if r.status != "ok"],
    })
    traces = trace_rows(result.replications)
    kio.write_csv(files["loss_trace"], traces)
    if figures and traces:
        from .plotting import plot_loss_traces

        files["loss_trace_png"] = plot_loss_traces(result.replications, out / "loss_trace.png")
    return files


def trace_rows(results: Sequence[ReplicationResult]) -> list[dict]:
    ok = [r for r in results if r.status == "ok" and r.loss_trace]
    if not ok:
        return []
    length = max(len(r.loss_trace) for r in ok)
    rows = []
    for e in range(length):
        row = {"epoch": e}
        for r in ok:
            row[f"rep{r.replication}"] = r.loss_trace[e] if e < len(r.loss_trace) else ""
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# sweeps


SERIES_METRICS = ("mse_out", "weighted_mse_out", "weighted_mse_in", "weighted_auc_avg",
                  "classification_error", "final_loss")


@dataclass
class SweepResult:
    key: str
    values: list
    results: list[ExperimentResult]
    series: list[dict]
    files: dict[str, Path] = field(default_factory=dict)

    def matrix(self, metric: str) -> np.ndarray:
        """(replications x sweep values) array of ``metric``."""
        return np.column_stack([r.values(metric) for r in self.results])


def sweep(cfg: ExperimentConfig, key: str, values: Sequence, output_dir=None,
          figures: bool = True, progress=None) -> SweepResult:
    """Re-run ``cfg`` with ``key`` set to each value; one series row per value."""
    if key not in {f.name for f in fields(cfg)}:
        raise ConfigError(f"cannot sweep unknown key {key!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    f = next(f for f in fields(cfg) if f.name == key)
    values = [ExperimentConfig._coerce(key, v, f) for v in values]
    results, series = [], []
    out = output_dir or cfg.output_dir
    for v in values:
        sub = cfg.replace(**{key: v}, output_dir=None)
        sub_dir = None if out is None else Path(out) / f"{key}={v}"
        res = run_experiment(sub, sub_dir, figures=False, progress=progress)
        results.append(res)
        row = {key: v, "n_ok": len(res.ok)}
        for m in SERIES_METRICS:
            s = res.summary.get(m)
            if s is not None:
                row[f"{m}_mean"], row[f"{m}_std"] = s["mean"], s["std"]
        series.append(row)
    sw = SweepResult(key, list(values), results, series)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        sw.files["series"] = out / f"series_{key}.csv"
        kio.write_csv(sw.files["series"], series)
        if figures:
            from .plotting import plot_series

            for m in SERIES_METRICS:
                if f"{m}_mean" in series[0] and not all(
                        math.isnan(r.get(f"{m}_mean", float("nan"))) for r in series):
                    sw.files[f"series_{m}_png"] = plot_series(
                        series, key, m, out / f"series_{key}_{m}.png",
                        logx=key in ("ratio", "n_train"), logy=key == "n_train" and "mse" in m)
    return sw


def sweep_lambda(cfg: ExperimentConfig, values: Sequence[float] = DEFAULT_LAMBDAS,
                 output_dir=None, figures: bool = True, progress=None) -> SweepResult:
    """Relation-ratio sweep; forces ``weighting = relation_ratio``."""
    if not cfg.low_noise_relations:
        raise ConfigError("a lambda sweep needs low_noise_relations")
    return sweep(cfg.replace(weighting="relation_ratio"), "ratio", list(values), output_dir,
                 figures, progress)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("need at least two positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def interior_argmax(row) -> bool:
    row = np.asarray(row, dtype=np.float64)
    i = int(np.nanargmax(row))
    return 0 < i < row.size - 1


# --------------------------------------------------------------------------
# desk-scale presets (small analogues of the synthetic studies)


_REGRESSION = dict(generator="concat_linear", N=100, d=10, K=5, noise_stds=(1.0, 5.0),
                   model="cnkg", hidden=(32,), lr=3e-3, batch_size=128)

PRESETS: dict[str, dict] = {
    # weighting effect: compare weighting=uniform against inverse_variance
    "weighting": dict(_REGRESSION, n_train=10000, n_test=10000, epochs=60,
                      weighting="inverse_variance"),
    # rate: sweep n_train over 5k..40k
    "rate": dict(_REGRESSION, n_train=10000, n_test=10000, epochs=60,
                 weighting="inverse_variance", replications=5),
    # initialisation, overparametrised: n below half the parameter count
    "init_small": dict(_REGRESSION, n_train=2000, n_test=10000, epochs=150,
                       weighting="inverse_variance", init="external", init_source="truth"),
    "init_large": dict(_REGRESSION, n_train=10000, n_test=10000, epochs=40,
                       weighting="inverse_variance", init="external_frozen", init_source="truth"),
    # method comparison on positive-only MIP graphs; swap model=transe to compare
    "method": dict(generator="mip", N=100, d=10, K=3, bias=-3.0, eval="negative_auc",
                   model="cnkg", hidden=(64, 32), loss="margin_contrastive", margin=1.0,
                   negatives=4, lr=1e-3, batch_size=128, epochs=50, init_scale=0.1),
    # lambda sweep on a two-tier noise graph scored by edge AUC
    "lambda": dict(generator="concat_linear", N=100, d=10, K=4,
                   relation_noise_stds=(1.0, 1.0, 3.16, 3.16), low_noise_relations=(0, 1),
                   weighting="relation_ratio", n_train=4000, n_test=10000, model="cnkg",
                   hidden=(32,), lr=3e-3, batch_size=128, epochs=40),
    # realizable recovery with the default training budget; a small graph, since
    # mini-batch Adam(1e-3) plateaus near 1e-3 at N=30 within 200 epochs
    "recovery": dict(generator="concat_linear", N=10, d=4, K=2, noise_stds=(0.0,),
                     n_train=1000, n_test=1000, model="cnkg", hidden=(128,)),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    base.update(overrides)
    return ExperimentConfig.from_mapping(base)
