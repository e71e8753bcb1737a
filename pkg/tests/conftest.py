import numpy as np
import pytest


def central_diff(f, x, h=1e-6):
    """Central finite differences of scalar ``f`` w.r.t. every entry of ``x`` (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VARIANTS = ("cnkg", "ipnkg", "transe", "mip", "concat_linear")


def random_model_case(kind, seed, n_triples=3):
    """A random small (model, embeddings, triples, upstream) tuple."""
    from nkgkit.models import EmbeddingTable, TripleSet, build_model

    r = np.random.default_rng(seed)
    N, K, D = int(r.integers(2, 6)), int(r.integers(1, 4)), int(r.integers(1, 5))
    hidden = tuple(int(h) for h in r.integers(1, 6, size=int(r.integers(1, 3))))
    model = build_model(kind, K, D, hidden, rng=r)
    for p in model.parameters():
        p += 0.1 * r.standard_normal(p.shape)  # nonzero biases too
    emb = EmbeddingTable(r.standard_normal((N, D)))
    ts = TripleSet(r.integers(0, N, n_triples), r.integers(0, K, n_triples), r.integers(0, N, n_triples))
    return model, emb, ts, r.standard_normal(n_triples)


def model_fd_error(kind, seed, h=1e-6):
    """Max relative error of analytic score gradients vs central differences."""
    from nkgkit.models import batch_score, score_gradients

    model, emb, ts, up = random_model_case(kind, seed)
    g = score_gradients(model, emb, ts, up)
    f = lambda: float(np.dot(up, batch_score(model, emb, ts)))
    worst = 0.0
    for gp, p in zip(g.params, model.parameters()):
        worst = max(worst, rel_err(gp, central_diff(f, p, h)))
    ge = g.embedding_gradient(ts.heads, ts.tails, emb.n_entities)
    return max(worst, rel_err(ge, central_diff(f, emb.vectors, h)))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[str, str] = {}


def record_criterion(cid: str, title: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {cid} {title}: {detail}"
    ACCEPTANCE_LINES[cid] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(ACCEPTANCE_LINES, key=lambda c: int(c[1:])):
            terminalreporter.write_line(ACCEPTANCE_LINES[cid])
