"""Command line entry point: ``nkgkit <subcommand> ...``.

Errors are reported on stderr as one JSON object
``{"error": <category>, "message": ...}`` and mapped to exit codes:

    1 internal   2 config / usage   3 shape, index, format, uncorruptable
    4 diverged   5 budget           6 io
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as kio
from .bounds import BoundInputs
from .errors import ConfigError, NkgError
from .experiments import (
    DEFAULT_LAMBDAS,
    PRESETS,
    ExperimentConfig,
    preset,
    run_experiment,
    sweep,
    sweep_lambda,
)
from .metrics import (
    EvalReport,
    best_threshold,
    classification_error,
    corrupt_negatives,
    per_relation_auc,
    weighted_mse,
)
from .models import TripleSet, batch_score, build_model
from .synthetic import BINARY_KINDS, GENERATOR_KINDS, GeneratorSpec, build_truth
from .synthetic import sample_binary_positive_only, sample_regression
from .training import (
    INIT_KINDS,
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


class UsageError(NkgError):
    category = "usage"
    exit_code = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def _hidden(s):
    """``32,16`` for all relations, or ``32;64,8`` per relation."""
    if ";" in s:
        return [_ints(part) for part in s.split(";")]
    return _ints(s)


def _kv(s):
    if "=" not in s:
        raise argparse.ArgumentTypeError(f"expected key=value, got {s!r}")
    k, v = s.split("=", 1)
    return k.strip(), v.strip()


# --------------------------------------------------------------------------
# generate


def cmd_generate(a) -> int:
    spec = GeneratorSpec(a.kind, N=a.N, d=a.d, K=a.K, noise_stds=a.noise_stds, bias=a.bias,
                         seed=a.seed, relation_noise_stds=a.relation_noise_stds)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = build_truth(spec)
    vocab = kio.Vocabulary([f"e{i}" for i in range(a.N)], [f"r{k}" for k in range(a.K)],
                           ["all"] * a.N)
    header = f"generator={a.kind} N={a.N} d={a.d} K={a.K} seed={a.seed}"
    written = {}
    if a.kind in BINARY_KINDS:
        ds = sample_binary_positive_only(spec, a.max_positives, truth)
        kio.save_triples(ds.triples, out / "triples.tsv", vocab, header)
        written["triples"] = len(ds.triples)
    else:
        tr = sample_regression(spec, a.n, truth)
        kio.save_triples(tr.triples, out / "train.tsv", vocab, header)
        written["train"] = len(tr.triples)
        if a.n_test:
            te = sample_regression(spec, a.n_test, truth, rng=[a.seed, 2])
            kio.save_triples(te.triples, out / "test.tsv", vocab, header)
            written["test"] = len(te.triples)
    kio.save_vocabulary(vocab, out / "entities.tsv", out / "relations.tsv")
    kio.save_truth(truth, out / "truth.json", {"kind": a.kind, "seed": a.seed})
    kio.save_embeddings(out / "truth_embeddings.txt", truth.embeddings, vocab.entities)
    print(" ".join(f"{k}={v}" for k, v in written.items()), f"dir={out}")
    return 0


# --------------------------------------------------------------------------
# train / eval


def _load_vocab(a):
    if a.vocab:
        return kio.load_vocabulary(a.vocab, a.relations)
    return None


def _weight_scheme(a) -> WeightScheme:
    return WeightScheme(a.weighting, cap=a.cap, ratio=a.ratio,
                        low_noise_relations=a.low_noise_relations)


def cmd_train(a) -> int:
    vocab = _load_vocab(a)
    ts, vocab = kio.load_triples(a.triples, vocab)
    N, K = vocab.n_entities, max(vocab.n_relations, 1)
    model = build_model(a.model, K, a.dim, a.hidden, rng=[a.seed, 3], rho=a.rho)
    if a.init == "random":
        strategy = InitStrategy("random", scale=a.init_scale)
    else:
        if not a.init_source:
            raise ConfigError(f"--init {a.init} needs --init-source")
        strategy = InitStrategy(a.init, scale=a.init_scale, source=a.init_source,
                                noise_std=a.init_noise_std)
    emb = init_embeddings(strategy, N, a.dim, seed=[a.seed, 4],
                          vocabulary=vocab.entities if a.init != "random" else None,
                          categories=vocab.categories)
    opt = Adam(a.lr) if a.optimizer == "adam" else Sgd(a.lr, a.momentum)
    cfg = TrainConfig(loss=a.loss, margin=a.margin, negatives_per_positive=a.negatives,
                      optimizer=opt, epochs=a.epochs, batch_size=a.batch_size, seed=a.seed,
                      weighting=_weight_scheme(a))
    rep = train(model, emb, ts, cfg)
    kio.save_model(a.out, model, emb, vocab)
    if a.trace:
        kio.write_csv(a.trace, [{"epoch": i, "loss": v} for i, v in enumerate(rep.loss_trace)])
    print(f"n={len(ts)} params={model.n_params()} initial_loss={rep.initial_loss!r} "
          f"final_loss={rep.final_loss!r} delta_opt={rep.delta_opt!r} model={a.out}")
    return 0


def cmd_eval(a) -> int:
    model, emb, vocab = kio.load_model(a.model)
    vocab = vocab or kio.Vocabulary.numeric(emb.n_entities, model.n_relations)
    ts, _ = kio.load_triples(a.triples, vocab, grow_relations=False)
    protocol = a.protocol
    if protocol == "auto":
        protocol = "fresh_mse" if a.truth else "negative_auc"
    scores = batch_score(model, emb, ts)
    if protocol == "fresh_mse":
        if not a.truth:
            raise ConfigError("fresh_mse evaluation needs --truth")
        truth = kio.load_truth(a.truth)
        g = truth.batch(ts)
        per_rel, avg = per_relation_auc(scores[g > 0], ts.relations[g > 0],
                                        scores[g <= 0], ts.relations[g <= 0])
        w = compute_weights(_weight_scheme(a), ts)
        report = EvalReport(
            weighted_mse_out=weighted_mse(model, emb, ts, w, truth),
            mse_out=float(np.mean((scores - g) ** 2)),
            mse_out_vs_labels=(float(np.mean((scores - ts.labels) ** 2))
                               if ts.labels is not None else float("nan")),
            auc_per_relation=per_rel, weighted_auc_avg=avg,
            classification_error=classification_error(scores, g > 0, a.threshold or 0.0),
            n_eval={"test": len(ts)},
        )
    else:
        cats = vocab.categories or ["all"] * emb.n_entities
        known = ts
        if a.known:
            extra, _ = kio.load_triples(a.known, vocab, grow_relations=False)
            known = TripleSet(np.r_[ts.heads, extra.heads], np.r_[ts.relations, extra.relations],
                                  np.r_[ts.tails, extra.tails])
        neg = corrupt_negatives(ts, cats, [a.seed, 7], positives=known)
        sn = batch_score(model, emb, neg)
        thr = a.threshold
        if thr is None and a.calibrate:
            cal, _ = kio.load_triples(a.calibrate, vocab, grow_relations=False)
            cneg = corrupt_negatives(cal, cats, [a.seed, 6], positives=known)
            thr = best_threshold(batch_score(model, emb, cal), batch_score(model, emb, cneg))
        per_rel, avg = per_relation_auc(scores, ts.relations, sn, neg.relations)
        report = EvalReport(
            auc_per_relation=per_rel, weighted_auc_avg=avg,
            classification_error=classification_error(
                np.r_[scores, sn], np.r_[np.ones(scores.size), np.zeros(sn.size)],
                0.0 if thr is None else thr),
            n_eval={"test": len(ts), "test_negatives": len(neg)},
        )
    if a.out:
        kio.write_eval_report(report, a.out)
    sys.stdout.write(kio.rows_to_csv([{"metric": k, "value": v} for k, v in report.flat().items()],
                                     ["metric", "value"]))
    return 0


# --------------------------------------------------------------------------
# bounds


def cmd_bounds(a) -> int:
    inputs = BoundInputs(N=a.N, D=a.D, K=a.K, hidden=a.hidden, family=a.family,
                         out_dim=a.out_dim, S=a.S, Q=a.Q, B=a.B, sigma_h2=a.sigma_h2, n=a.n)
    table = kio.emit_bound_table(inputs, a.format)
    if a.out:
        Path(a.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


# --------------------------------------------------------------------------
# experiments


def _experiment_config(a, **extra) -> ExperimentConfig:
    overrides = dict(a.set or [])
    overrides.update(extra)
    if a.out:
        overrides["output_dir"] = a.out
    if a.config and a.preset:
        raise UsageError("give either --config or --preset, not both")
    if a.config:
        return ExperimentConfig.from_file(a.config, overrides)
    if a.preset:
        return preset(a.preset, **overrides)
    return ExperimentConfig.from_mapping(overrides)


def _progress(res):
    logging.getLogger("nkgkit.cli").info("replication %d (seed %d): %s", res.replication,
                                         res.seed, res.status)


def cmd_experiment(a) -> int:
    cfg = _experiment_config(a)
    if a.sweep:
        key, values = a.sweep
        sw = sweep(cfg, key, [v for v in values.split(",") if v], figures=not a.no_figures,
                   progress=_progress)
        sys.stdout.write(kio.rows_to_csv(sw.series))
        failed = sum(len(r.replications) - len(r.ok) for r in sw.results)
    else:
        res = run_experiment(cfg, figures=not a.no_figures, progress=_progress)
        sys.stdout.write(kio.rows_to_csv([{"metric": k, **v} for k, v in res.summary.items()],
                                         ["metric", "mean", "std", "n"]))
        failed = len(res.replications) - len(res.ok)
    if failed:
        print(json.dumps({"warning": "replications_failed", "count": failed}), file=sys.stderr)
    return 0


def cmd_sweep_lambda(a) -> int:
    cfg = _experiment_config(a)
    sw = sweep_lambda(cfg, a.values, figures=not a.no_figures, progress=_progress)
    sys.stdout.write(kio.rows_to_csv(sw.series))
    return 0


# --------------------------------------------------------------------------
# parser


def _add_weighting(p):
    p.add_argument("--weighting", choices=WEIGHT_KINDS, default="uniform")
    p.add_argument("--cap", type=float, default=1.0, help="B for capped weights")
    p.add_argument("--ratio", type=float, default=1.0, help="lambda for relation_ratio")
    p.add_argument("--low-noise-relations", type=_ints, default=())


def _add_experiment_source(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--set", type=_kv, action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--out", help="result bundle directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nkgkit", description="Neural knowledge-graph toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic data set")
    g.add_argument("--kind", choices=GENERATOR_KINDS, default="concat_linear")
    g.add_argument("--N", type=int, default=100)
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--K", type=int, default=5)
    g.add_argument("--noise-stds", type=_floats, default=(1.0, 5.0))
    g.add_argument("--relation-noise-stds", type=_floats, default=None)
    g.add_argument("--bias", type=float, default=-3.0)
    g.add_argument("--n", type=int, default=10000, help="training samples (regression)")
    g.add_argument("--n-test", type=int, default=0, help="fresh test samples (regression)")
    g.add_argument("--max-positives", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a model to a triple file")
    t.add_argument("--triples", required=True)
    t.add_argument("--vocab", help="entity vocabulary (id[<TAB>category])")
    t.add_argument("--relations", help="relation vocabulary")
    t.add_argument("--model", choices=["cnkg", "ipnkg", "transe", "mip", "concat_linear"],
                   default="cnkg")
    t.add_argument("--hidden", type=_ints, default=(32,))
    t.add_argument("--dim", type=int, default=10)
    t.add_argument("--rho", choices=["identity", "logistic"], default="identity")
    t.add_argument("--loss", choices=["weighted_square", "margin_contrastive"],
                   default="weighted_square")
    t.add_argument("--margin", type=float, default=1.0)
    t.add_argument("--negatives", type=int, default=1)
    t.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--momentum", type=float, default=0.0)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--seed", type=int, default=0)
    _add_weighting(t)
    t.add_argument("--init", choices=INIT_KINDS, default="random")
    t.add_argument("--init-scale", type=float, default=1.0)
    t.add_argument("--init-source", help="embedding file for external initialisation")
    t.add_argument("--init-noise-std", type=float, default=0.0)
    t.add_argument("--out", required=True, help="model archive (.npz)")
    t.add_argument("--trace", help="per-epoch loss CSV")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model")
    e.add_argument("--model", required=True)
    e.add_argument("--triples", required=True)
    e.add_argument("--truth", help="truth sidecar for MSE against gamma")
    e.add_argument("--protocol", choices=["auto", "fresh_mse", "negative_auc"], default="auto")
    e.add_argument("--known", help="extra positives excluded from negatives")
    e.add_argument("--calibrate", help="positives used to pick the decision threshold")
    e.add_argument("--threshold", type=float, default=None)
    e.add_argument("--seed", type=int, default=0)
    _add_weighting(e)
    e.add_argument("--out", help="report path (.json or .csv)")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bounds", help="print the capacity bound table")
    b.add_argument("--N", type=int, required=True)
    b.add_argument("--D", type=int, required=True)
    b.add_argument("--K", type=int, required=True)
    b.add_argument("--hidden", type=_hidden, default=(32,),
                   help="'32,16' for all relations or '32;64,8' per relation")
    b.add_argument("--family", choices=["cnkg", "ipnkg"], default="cnkg")
    b.add_argument("--out-dim", type=int, default=None)
    b.add_argument("--S", type=int, default=2)
    b.add_argument("--Q", type=int, default=1)
    b.add_argument("--B", type=float, default=1.0)
    b.add_argument("--sigma-h2", type=float, default=1.0)
    b.add_argument("--n", type=int, default=10000)
    b.add_argument("--format", choices=["text", "csv"], default="text")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    x = sub.add_parser("experiment", help="replicated experiment or sweep")
    _add_experiment_source(x)
    x.add_argument("--sweep", type=_kv, metavar="KEY=V1,V2,...")
    x.set_defaults(func=cmd_experiment)

    s = sub.add_parser("sweep-lambda", help="relation weight ratio sweep")
    _add_experiment_source(s)
    s.add_argument("--values", type=_floats, default=DEFAULT_LAMBDAS)
    s.set_defaults(func=cmd_sweep_lambda)
    return p


def main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return a.func(a)
    except NkgError as exc:
        return _fail(exc.category, str(exc), exc.exit_code)
    except FileNotFoundError as exc:
        return _fail("io", f"{exc.filename}: not found", 6)
    except OSError as exc:
        return _fail("io", str(exc), 6)
    except Exception as exc:  # pragma: no cover - last resort
        return _fail("internal", f"{type(exc).__name__}: {exc}", 1)


def _fail(category, message, code) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
