import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nkgkit import io as kio
from nkgkit.bounds import BoundInputs, delta_stat, vc_partition_bound
from nkgkit.errors import ConfigError, DataFormatError, InvalidTripleError
from nkgkit.models import EmbeddingTable, TripleSet, batch_score, build_model


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_empty_file(tmp_path):
    ts, vocab = kio.load_triples(_write(tmp_path, "e.tsv", ""))
    assert len(ts) == 0 and vocab.n_entities == 0


def test_comment_skipped(tmp_path):
    p = _write(tmp_path, "t.tsv", "# header\na\tr\tb\t1.5\nb\tr\tc\t-0.25\n")
    ts, vocab = kio.load_triples(p)
    assert len(ts) == 2
    assert vocab.entities == ["a", "b", "c"]
    np.testing.assert_array_equal(ts.heads, [0, 1])
    np.testing.assert_array_equal(ts.tails, [1, 2])
    np.testing.assert_array_equal(ts.labels, [1.5, -0.25])


def test_malformed_line_number(tmp_path):
    p = _write(tmp_path, "t.tsv", "a\tr\tb\n# c\nonly two\tcols\n")
    with pytest.raises(DataFormatError) as exc:
        kio.load_triples(p)
    assert exc.value.line == 3


def test_bad_number_and_mixed_columns(tmp_path):
    with pytest.raises(DataFormatError) as exc:
        kio.load_triples(_write(tmp_path, "a.tsv", "a\tr\tb\tx\n"))
    assert exc.value.line == 1
    with pytest.raises(DataFormatError):
        kio.load_triples(_write(tmp_path, "b.tsv", "a\tr\tb\t1\na\tr\tb\n"))
    with pytest.raises(DataFormatError):
        kio.load_triples(_write(tmp_path, "c.tsv", "a\tr\tb\t1\t-1\n"))


def test_unknown_entity_rejected(tmp_path):
    vocab = kio.Vocabulary(["a", "b"], ["r"])
    with pytest.raises(InvalidTripleError):
        kio.load_triples(_write(tmp_path, "t.tsv", "a\tr\tz\n"), vocab)
    with pytest.raises(InvalidTripleError):
        kio.load_triples(_write(tmp_path, "u.tsv", "a\ts\tb\n"), vocab, grow_relations=False)


def test_vocabulary_round_trip(tmp_path):
    v = kio.Vocabulary(["x", "y"], ["r0", "r1"], ["p", "q"])
    kio.save_vocabulary(v, tmp_path / "e.tsv", tmp_path / "r.tsv")
    w = kio.load_vocabulary(tmp_path / "e.tsv", tmp_path / "r.tsv")
    assert w.to_dict() == v.to_dict()
    assert kio.Vocabulary.from_dict(v.to_dict()).to_dict() == v.to_dict()
    with pytest.raises(DataFormatError):
        kio.load_vocabulary(_write(tmp_path, "d.tsv", "a\na\n"))


def test_embedding_file(tmp_path):
    V = np.array([[0.1, -2.0], [1e-300, 3.5]])
    kio.save_embeddings(tmp_path / "z.txt", V, ["a", "b"])
    ids, W = kio.load_embeddings(tmp_path / "z.txt")
    assert ids == ["a", "b"]
    np.testing.assert_array_equal(W, V)
    with pytest.raises(DataFormatError):
        kio.load_embeddings(_write(tmp_path, "bad.txt", "D 2\na 1.0\n"))
    with pytest.raises(DataFormatError):
        kio.load_embeddings(_write(tmp_path, "nohead.txt", "a 1.0 2.0\n"))


def test_config_parse():
    cfg = kio.parse_config_text("# c\nN = 10\nhidden = 32,16  # trailing\n\n")
    assert cfg == {"N": "10", "hidden": "32,16"}
    with pytest.raises(ConfigError):
        kio.parse_config_text("N = 1\nN = 2\n")
    with pytest.raises(ConfigError):
        kio.parse_config_text("just words\n")
    again = kio.parse_config_text(kio.format_config({"N": 10, "hidden": (32, 16)}))
    assert again == {"N": "10", "hidden": "32,16"}


@pytest.mark.parametrize("kind", ["cnkg", "ipnkg", "transe", "mip", "concat_linear"])
def test_model_round_trip(tmp_path, kind):
    rng = np.random.default_rng(3)
    model = build_model(kind, 2, 3, hidden=(5, 4), rng=rng)
    emb = EmbeddingTable(rng.normal(size=(6, 3)))
    vocab = kio.Vocabulary.numeric(6, 2)
    kio.save_model(tmp_path / "m.npz", model, emb, vocab)
    m2, e2, v2 = kio.load_model(tmp_path / "m.npz")
    ts = TripleSet(rng.integers(0, 6, 20), rng.integers(0, 2, 20), rng.integers(0, 6, 20))
    np.testing.assert_array_equal(batch_score(m2, e2, ts), batch_score(model, emb, ts))
    assert v2.to_dict() == vocab.to_dict()
    assert type(m2) is type(model)


def test_json_and_csv_helpers(tmp_path):
    s = kio.to_json({"b": float("nan"), "a": np.float64(1.5), "c": np.arange(2)})
    assert json.loads(s) == {"a": 1.5, "b": None, "c": [0, 1]}
    rows = [{"x": 1, "y": 0.1}, {"x": 2, "y": float("nan")}]
    kio.write_csv(tmp_path / "r.csv", rows)
    back = kio.read_csv(tmp_path / "r.csv")
    assert [r["x"] for r in back] == ["1", "2"]
    assert float(back[0]["y"]) == 0.1


def test_bound_table_deterministic_and_matches_calls():
    inp = BoundInputs(N=500, D=20, K=5, hidden=(32,), n=40000)
    a = kio.emit_bound_table(inp, "csv")
    assert a == kio.emit_bound_table(inp, "csv")
    assert kio.emit_bound_table(inp, "text") == kio.emit_bound_table(inp, "text")
    rows = {r["bound"]: r for r in kio.bound_table_rows(inp)}
    assert rows["inputs"]["kind"] == "echo"
    assert float(rows[vc_partition_bound(inp).name]["value"]) == float(vc_partition_bound(inp))
    ds = delta_stat(inp, "in_sample")
    assert float(rows[ds.name]["value"]) == float(ds)
    with pytest.raises(ConfigError):
        kio.emit_bound_table(inp, "html")


ids = st.text(alphabet=st.characters(max_codepoint=0x2FF, whitelist_categories=("L", "N", "P", "S"),
                                      blacklist_characters="#"), min_size=1, max_size=6)
finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(ids, ids, ids, finite, finite.map(abs)), min_size=1, max_size=12))
def test_triple_file_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("rt") / "t.tsv"
    text = "".join(f"{h}\t{r}\t{t}\t{y!r}\t{s!r}\n" for h, r, t, y, s in rows)
    path.write_text(text, encoding="utf-8")
    ts, vocab = kio.load_triples(path)
    out = path.with_name("u.tsv")
    kio.save_triples(ts, out, vocab)
    ts2, vocab2 = kio.load_triples(out)
    assert vocab2.entities == vocab.entities and vocab2.relations == vocab.relations
    np.testing.assert_array_equal(ts2.heads, ts.heads)
    np.testing.assert_array_equal(ts2.tails, ts.tails)
    np.testing.assert_array_equal(ts2.labels, ts.labels)
    np.testing.assert_array_equal(ts2.noise_scales, ts.noise_scales)
    assert all(math.isfinite(v) for v in ts2.labels)
