"""File formats: triples, vocabularies, embeddings, truth sidecars, configs,
saved models and evaluation reports.

Triple files are tab-separated UTF-8::

    # comment
    head<TAB>relation<TAB>tail[<TAB>label[<TAB>sigma]]

Vocabulary files list one entity per line, optionally followed by a tab and
the entity's category. Embedding files start with ``D <dim>`` and then hold
``id v_1 ... v_D`` per line (whitespace separated).
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataFormatError, InvalidTripleError
from .models import (
    CNkg,
    ConcatLinear,
    EmbeddingTable,
    IpNkg,
    Mip,
    ScoreModel,
    TransE,
    TripleSet,
)
from .nn import DenseLayer, FeedForwardNet
from .synthetic import GroundTruth


# --------------------------------------------------------------------------
# vocabularies


@dataclass
class Vocabulary:
    """Entity and relation ids in index order; categories are optional."""

    entities: list[str] = field(default_factory=list)
    relations: list[str] = field(default_factory=list)
    categories: list[str] | None = None

    def __post_init__(self):
        self._e = {e: i for i, e in enumerate(self.entities)}
        self._r = {r: i for i, r in enumerate(self.relations)}
        if len(self._e) != len(self.entities):
            raise DataFormatError("duplicate entity ids in vocabulary")

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def entity_index(self, name: str, grow: bool = False) -> int | None:
        i = self._e.get(name)
        if i is None and grow:
            i = self._e[name] = len(self.entities)
            self.entities.append(name)
        return i

    def relation_index(self, name: str, grow: bool = False) -> int | None:
        i = self._r.get(name)
        if i is None and grow:
            i = self._r[name] = len(self.relations)
            self.relations.append(name)
        return i

    def to_dict(self) -> dict:
        return {"entities": self.entities, "relations": self.relations,
                "categories": self.categories}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(list(d["entities"]), list(d["relations"]), d.get("categories"))

    @classmethod
    def numeric(cls, N: int, K: int) -> "Vocabulary":
        return cls([str(i) for i in range(N)], [str(k) for k in range(K)])


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_vocabulary(path, relations_path=None) -> Vocabulary:
    """Entity list (``id[<TAB>category]``) plus an optional relation list."""
    ents, cats = [], []
    for lineno, line in _data_lines(path):
        cols = line.split("\t")
        if len(cols) > 2 or not cols[0]:
            raise DataFormatError("expected 'id' or 'id<TAB>category'", path, lineno)
        if cols[0] in ents:
            raise DataFormatError(f"duplicate entity id {cols[0]!r}", path, lineno)
        ents.append(cols[0])
        cats.append(cols[1] if len(cols) == 2 else None)
    has = [c is not None for c in cats]
    if any(has) and not all(has):
        raise DataFormatError("categories must be given for all entities or none", path)
    rels = []
    if relations_path is not None:
        rels = [line.split("\t")[0] for _, line in _data_lines(relations_path)]
    return Vocabulary(ents, rels, cats if ents and all(has) else None)


def save_vocabulary(vocab: Vocabulary, path, relations_path=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, e in enumerate(vocab.entities):
            fh.write(e if vocab.categories is None else f"{e}\t{vocab.categories[i]}")
            fh.write("\n")
    if relations_path is not None:
        with open(relations_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{r}\n" for r in vocab.relations)


# --------------------------------------------------------------------------
# triples


def _parse_float(text, what, path, lineno):
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"{what} {text!r} is not a number", path, lineno) from None
    if not math.isfinite(v):
        raise DataFormatError(f"{what} must be finite", path, lineno)
    return v


def load_triples(path, vocabulary: Vocabulary | None = None,
                 grow_relations: bool = True) -> tuple[TripleSet, Vocabulary]:
    """Parse a triple file.

    Without ``vocabulary`` ids get indices in first-seen order. With one,
    unknown entity ids are rejected; unknown relations are appended unless
    ``grow_relations`` is False. Label and sigma columns must be present on
    every line or on none.
    """
    vocab = vocabulary if vocabulary is not None else Vocabulary()
    closed = vocabulary is not None
    h, r, t, y, s = [], [], [], [], []
    ncols = None
    for lineno, line in _data_lines(path):
        cols = line.split("\t")
        if not 3 <= len(cols) <= 5 or not all(c.strip() for c in cols[:3]):
            raise DataFormatError(f"expected 3 to 5 tab-separated columns, got {len(cols)}",
                                  path, lineno)
        if ncols is None:
            ncols = len(cols)
        elif len(cols) != ncols:
            raise DataFormatError(f"column count {len(cols)} differs from earlier {ncols}",
                                  path, lineno)
        idx = []
        for name in (cols[0], cols[2]):
            i = vocab.entity_index(name, grow=not closed)
            if i is None:
                raise InvalidTripleError(f"{path}:{lineno}: unknown entity id {name!r}")
            idx.append(i)
        k = vocab.relation_index(cols[1], grow=not closed or grow_relations)
        if k is None:
            raise InvalidTripleError(f"{path}:{lineno}: unknown relation id {cols[1]!r}")
        h.append(idx[0]); r.append(k); t.append(idx[1])
        if ncols >= 4:
            y.append(_parse_float(cols[3], "label", path, lineno))
        if ncols == 5:
            sv = _parse_float(cols[4], "sigma", path, lineno)
            if sv < 0:
                raise DataFormatError("sigma must be >= 0", path, lineno)
            s.append(sv)
    ts = TripleSet(h, r, t, y if ncols and ncols >= 4 else None, s if ncols == 5 else None)
    return ts, vocab


def save_triples(triples: TripleSet, path, vocabulary: Vocabulary | None = None,
                 header: str | None = None) -> None:
    """Write ``triples``; floats use ``repr`` so a reload is exact."""
    ts = triples
    vocab = vocabulary or Vocabulary.numeric(
        int(max(ts.heads.max(initial=-1), ts.tails.max(initial=-1))) + 1,
        int(ts.relations.max(initial=-1)) + 1,
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for i in range(len(ts)):
            cols = [vocab.entities[ts.heads[i]], vocab.relations[ts.relations[i]],
                    vocab.entities[ts.tails[i]]]
            if ts.labels is not None:
                cols.append(repr(float(ts.labels[i])))
                if ts.noise_scales is not None:
                    cols.append(repr(float(ts.noise_scales[i])))
            fh.write("\t".join(cols) + "\n")


# --------------------------------------------------------------------------
# embeddings


def load_embeddings(path) -> tuple[list[str], np.ndarray]:
    ids, rows, dim = [], [], None
    for lineno, line in _data_lines(path):
        parts = line.split()
        if dim is None:
            if len(parts) != 2 or parts[0] != "D":
                raise DataFormatError("first line must be 'D <dim>'", path, lineno)
            try:
                dim = int(parts[1])
            except ValueError:
                raise DataFormatError(f"bad dimension {parts[1]!r}", path, lineno) from None
            if dim < 1:
                raise DataFormatError("dimension must be >= 1", path, lineno)
            continue
        if len(parts) != dim + 1:
            raise DataFormatError(f"expected id and {dim} values, got {len(parts) - 1} values",
                                  path, lineno)
        ids.append(parts[0])
        rows.append([_parse_float(v, "coordinate", path, lineno) for v in parts[1:]])
    if dim is None:
        raise DataFormatError("missing 'D <dim>' header", path)
    if len(set(ids)) != len(ids):
        raise DataFormatError("duplicate entity ids", path)
    return ids, np.array(rows, dtype=np.float64).reshape(len(rows), dim)


def save_embeddings(path, vectors, ids: Sequence[str] | None = None) -> None:
    V = np.asarray(vectors, dtype=np.float64)
    ids = [str(i) for i in range(V.shape[0])] if ids is None else list(ids)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"D {V.shape[1]}\n")
        for e, row in zip(ids, V):
            fh.write(e + " " + " ".join(repr(float(v)) for v in row) + "\n")


# --------------------------------------------------------------------------
# truth sidecar


def save_truth(truth: GroundTruth, path, extra: dict | None = None) -> None:
    d = truth.to_dict()
    if extra:
        d["generator"] = extra
    Path(path).write_text(json.dumps(d, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_truth(path) -> GroundTruth:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return GroundTruth.from_dict(d)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataFormatError(f"not a truth file: {exc}", path) from None


# --------------------------------------------------------------------------
# flat key=value config


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), str(path))


def format_config(values: dict) -> str:
    lines = []
    for k, v in values.items():
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        elif v is None:
            v = ""
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# models


def _nets_state(nets: Sequence[FeedForwardNet], prefix: str, arrays: dict) -> list[list[bool]]:
    acts = []
    for i, net in enumerate(nets):
        acts.append([layer.has_activation for layer in net.layers])
        for j, layer in enumerate(net.layers):
            arrays[f"{prefix}{i}_w{j}"] = layer.weights
            arrays[f"{prefix}{i}_b{j}"] = layer.bias
            if layer.mask is not None:
                arrays[f"{prefix}{i}_m{j}"] = layer.mask
    return acts


def _nets_from(arrays, prefix: str, acts) -> list[FeedForwardNet]:
    nets = []
    for i, a in enumerate(acts):
        layers = []
        for j, act in enumerate(a):
            m = arrays.get(f"{prefix}{i}_m{j}")
            layers.append(DenseLayer(arrays[f"{prefix}{i}_w{j}"].copy(),
                                     arrays[f"{prefix}{i}_b{j}"].copy(), bool(act),
                                     None if m is None else m.copy()))
        nets.append(FeedForwardNet(layers))
    return nets


def save_model(path, model: ScoreModel, emb: EmbeddingTable,
               vocabulary: Vocabulary | None = None) -> None:
    """Model, embeddings and vocabulary in one ``.npz`` archive."""
    arrays = {"embeddings": emb.vectors, "frozen": emb.frozen}
    meta = {"kind": model.kind, "K": model.n_relations, "D": model.dim}
    if isinstance(model, CNkg):
        meta["rho"] = model.rho.name
        meta["acts"] = _nets_state(model.nets, "g", arrays)
    elif isinstance(model, IpNkg):
        meta["rho"] = model.rho.name
        shared = all(a is b for a, b in zip(model.head_nets, model.tail_nets))
        meta["shared"] = shared
        meta["acts"] = _nets_state(model.head_nets, "g", arrays)
        if not shared:
            meta["acts_t"] = _nets_state(model.tail_nets, "gt", arrays)
    else:
        for i, p in enumerate(model.parameters()):
            arrays[f"p{i}"] = p
    if vocabulary is not None:
        meta["vocabulary"] = vocabulary.to_dict()
    elif emb.categories is not None:
        meta["categories"] = [str(c) for c in emb.categories]
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> tuple[ScoreModel, EmbeddingTable, Vocabulary | None]:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        meta = json.loads(str(arrays.pop("meta")))
    except (OSError, ValueError, KeyError) as exc:
        raise DataFormatError(f"not a saved model: {exc}", path) from None
    kind = meta["kind"]
    if kind == "cnkg":
        model = CNkg(_nets_from(arrays, "g", meta["acts"]), rho=meta["rho"])
    elif kind == "ipnkg":
        heads = _nets_from(arrays, "g", meta["acts"])
        tails = heads if meta["shared"] else _nets_from(arrays, "gt", meta["acts_t"])
        model = IpNkg(heads, tails, rho=meta["rho"])
    else:
        params = [arrays[f"p{i}"].copy() for i in range(sum(k.startswith("p") for k in arrays))]
        if kind == "transe":
            model = TransE(params[0])
        elif kind == "mip":
            model = Mip(params[0], float(params[1].ravel()[0]))
        elif kind == "concat_linear":
            model = ConcatLinear(params[0])
        else:
            raise DataFormatError(f"unknown model kind {kind!r}", path)
    vocab = Vocabulary.from_dict(meta["vocabulary"]) if "vocabulary" in meta else None
    cats = vocab.categories if vocab is not None else meta.get("categories")
    emb = EmbeddingTable(arrays["embeddings"].copy(), frozen=arrays["frozen"].copy(),
                         categories=cats)
    return model, emb, vocab


# --------------------------------------------------------------------------
# reports


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def to_json(obj) -> str:
    """Deterministic JSON (sorted keys; NaN written as null)."""
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, np.generic):
            return clean(x.item())
        return x
    return json.dumps(clean(obj), indent=1, sort_keys=True, default=_json_default) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(to_json(obj), encoding="utf-8")


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    Path(path).write_text(rows_to_csv(rows, columns), encoding="utf-8")


def read_csv(path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_eval_report(report, path) -> None:
    """JSON for ``.json`` paths, one ``metric,value`` row per scalar otherwise."""
    path = Path(path)
    if path.suffix == ".json":
        write_json(path, report.to_dict())
    else:
        rows = [{"metric": k, "value": v} for k, v in report.flat().items()]
        rows += [{"metric": f"n_{k}", "value": v} for k, v in sorted(report.n_eval.items())]
        write_csv(path, rows, ["metric", "value"])


# --------------------------------------------------------------------------
# bound table


BOUND_COLUMNS = ["bound", "value", "kind", "clamped", "note"]


def bound_table_rows(inputs) -> list[dict]:
    from . import bounds as B

    Ls, Ws = inputs.L_list, inputs.W_list
    entries = [
        B.pdim_fixed_embedding(Ls, Ws),
        B.pdim_trainable_embedding(inputs.N, inputs.D, inputs.K, inputs.W, inputs.L),
        B.vc_partition_bound(inputs),
        B.delta_stat(inputs, "in_sample"),
        B.delta_stat(inputs, "out_of_sample"),
        *B.oracle_terms(inputs),
    ]
    echo = (f"N={inputs.N} D={inputs.D} K={inputs.K} family={inputs.family} "
            f"W={inputs.W:.10g} L={inputs.L} S={inputs.S} Q={inputs.Q} B={inputs.B:g} "
            f"sigma_H2={inputs.sigma_h2:g} n={inputs.n}")
    rows = [{"bound": "inputs", "value": "", "kind": "echo", "clamped": "", "note": echo}]
    for b in entries:
        rows.append({"bound": b.name, "value": float(b.value), "kind": b.kind,
                     "clamped": str(bool(b.clamped)).lower(), "note": b.note})
    return rows


def emit_bound_table(inputs, fmt: str = "text") -> str:
    """All bounds for one configuration as CSV or an aligned text table."""
    rows = bound_table_rows(inputs)
    if fmt == "csv":
        return rows_to_csv(rows, BOUND_COLUMNS)
    if fmt != "text":
        raise ConfigError(f"unknown table format {fmt!r}")
    head = rows[0]["note"]
    body = [("bound", "value", "kind", "clamped", "note")]
    for r in rows[1:]:
        body.append((r["bound"], f"{r['value']:.6g}", r["kind"], r["clamped"], r["note"]))
    widths = [max(len(row[i]) for row in body) for i in range(4)]
    lines = [f"# {head}"]
    for row in body:
        cells = [c.ljust(w) for c, w in zip(row[:4], widths)] + [row[4]]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
