import numpy as np
import pytest

from graphret import dataset, graph, model

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def numeric_grad(f, arr, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    """Largest entry-wise deviation relative to the tensor's largest gradient magnitude.

    Gradients below 1e-6 in magnitude are treated as zero, where central
    differences only see rounding noise.
    """
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-6)
    return float(np.abs(a - b).max() / scale)


@pytest.fixture(scope="session")
def clusters():
    ds = dataset.synth_clusters(30, 3, 8, 6.0, 1.0, seed=3)
    return dataset.assign_splits(ds, seed=3)


@pytest.fixture(scope="session")
def cluster_art(clusters):
    g = graph.symmetrize(graph.knn_graph(clusters, 5))
    return model.GraphArtifacts.build(clusters, g)


@pytest.fixture
def small_config():
    return model.ModelConfig(d_in=8, d_hidden=4, heads=2, d_latent=3, disc_hidden=6,
                             epochs=5, seed=11, lr=1e-2)


def random_graph_art(n=10, d=8, k=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    g = graph.symmetrize(graph.knn_graph(X, k))
    return model.GraphArtifacts.build(X, g)


def run_cli(*argv):
    from graphret.cli import main
    return main([str(a) for a in argv])


def run_pipeline(d, seed=42, epochs=20, classes=4, per_class=30, dim=16, k=15, variant="a-arvgae",
                 extra_train=()):
    """synth -> build-graph -> train -> embed -> evaluate inside directory ``d``."""
    paths = {name: d / f for name, f in [("data", "data.grfd"), ("graph", "g.grfg"), ("ckpt", "m.grfm"),
                                         ("index", "i.grfi"), ("report", "r.json"), ("csv", "r.csv")]}
    steps = [
        ("synth", "--classes", classes, "--per-class", per_class, "--dim", dim, "--sep", 10,
         "--sigma", 1, "--out", paths["data"]),
        ("build-graph", "--dataset", paths["data"], "--k", k, "--out", paths["graph"]),
        ("train", "--dataset", paths["data"], "--graph", paths["graph"], "--out", paths["ckpt"],
         "--epochs", epochs, "--variant", variant, *extra_train),
        ("embed", "--ckpt", paths["ckpt"], "--dataset", paths["data"], "--graph", paths["graph"],
         "--out", paths["index"]),
        ("evaluate", "--index", paths["index"], "--ckpt", paths["ckpt"], "--dataset", paths["data"],
         "--graph", paths["graph"], "--report", paths["report"], "--csv", paths["csv"]),
    ]
    for step in steps:
        code = run_cli(step[0], "--seed", seed, *step[1:])
        assert code == 0, step[0]
    paths["losses"] = d / "m.grfm.losses.csv"
    return paths
