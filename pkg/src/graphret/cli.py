"""Command-line workflow: ingest, synth, build-graph, train, embed, query, evaluate.

Exit codes: 0 success, 2 usage/parameter, 3 data/format, 4 numeric failure.
"""
import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import _accel
from . import dataset as dsmod
from . import graph as graphmod
from . import metrics, model, retrieval
from .errors import GraphretError, ParseError

log = logging.getLogger("graphret")

PRESETS = {"breakhis": {"k": 25}, "bach": {"k": 15}}
SUBSETS = {"train": ("train",), "train+val": ("train", "val"), "all": ("train", "val", "test")}


def read_config(path):
    """Flat ``key=value`` file; ``#`` starts a comment. Keys use underscores."""
    conf = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            conf[key.strip().replace("-", "_")] = value.strip()
    return conf


def _config_value(action, value):
    if isinstance(action, argparse._StoreTrueAction):
        return value.lower() in ("1", "true", "yes", "on")
    return value


def _ratios(text):
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split ratios {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("split ratios need three comma-separated values")
    return parts


def _need(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return path


class _Outputs:
    """Files a command has finished writing; removed if a later step fails."""

    def __init__(self):
        self.paths = []

    def add(self, path):
        if path:
            self.paths.append(path)
        return path

    def cleanup(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


def _write_text_atomic(path, writer):
    tmp = f"{path}.tmp{os.getpid()}"
    writer(tmp)
    os.replace(tmp, path)


def _load_artifacts(args):
    ds = dsmod.load_any(_need(args.dataset))
    g = graphmod.load_graph(_need(args.graph))
    return ds, model.GraphArtifacts.build(ds, g)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(args, out):
    ds = dsmod.load_csv(_need(args.csv))
    if args.split is not None or np.any(ds.splits == dsmod.UNASSIGNED):
        ds = dsmod.assign_splits(ds, args.split or dsmod.DEFAULT_RATIOS, args.seed)
    dsmod.save_binary(ds, args.out)
    out.add(args.out)
    print(f"ingested {args.csv}: {ds.summary()}")


def cmd_synth(args, out):
    ds = dsmod.synth_clusters(args.per_class, args.classes, args.dim, args.sep, args.sigma, args.seed)
    if args.split is not None:
        ds = dsmod.assign_splits(ds, args.split, args.seed)
    if args.out.lower().endswith(".csv"):
        _write_text_atomic(args.out, lambda p: dsmod.save_csv(ds, p))
    else:
        dsmod.save_binary(ds, args.out)
    out.add(args.out)
    print(f"synthesized {args.out}: {ds.summary()}")


def cmd_build_graph(args, out):
    ds = dsmod.load_any(_need(args.dataset))
    k = args.k if args.k is not None else PRESETS[args.preset]["k"]
    kw = {}
    if args.method == "kdtree":
        kw = dict(n_trees=args.trees, max_checks=args.checks)
    raw = graphmod.knn_graph(ds, k, method=args.method, seed=args.seed, **kw)
    g = graphmod.symmetrize(raw)
    graphmod.save_graph(g, args.out)
    out.add(args.out)
    if args.tsv:
        _write_text_atomic(args.tsv, lambda p: graphmod.export_tsv(g, p))
        out.add(args.tsv)
    deg = g.degrees()
    print(f"graph {args.out}: n={g.n} k={k} method={args.method} edges={g.nnz} "
          f"degree min={deg.min()} mean={deg.mean():.2f} max={deg.max()}")


def _model_config(args, d_in):
    return model.ModelConfig.for_variant(
        args.variant, d_in=d_in, d_hidden=args.hidden, heads=args.heads, d_latent=args.latent,
        dropout_p=args.dropout, disc_hidden=args.disc_hidden, lr=args.lr, epochs=args.epochs,
        disc_iters=args.disc_iters, seed=args.seed, recon_loss=args.recon)


def cmd_train(args, out):
    ds, art = _load_artifacts(args)
    cfg = _model_config(args, ds.d)
    losses = args.losses or f"{args.out}.losses.csv"

    def progress(epoch, row):
        if epoch == 1 or epoch % 25 == 0 or epoch == cfg.epochs:
            log.info("epoch %d total=%.6f", epoch, row[-1])

    ckpt = model.train(art, cfg, log=progress)
    model.save_checkpoint(ckpt, args.out)
    out.add(args.out)

    def write_losses(path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", *model.HISTORY_COLUMNS])
            for e, row in enumerate(ckpt.history, start=1):
                w.writerow([e, *map(repr, map(float, row))])
    _write_text_atomic(losses, write_losses)
    out.add(losses)
    h = ckpt.history
    first = h[0, -1] if len(h) else float("nan")
    last = h[-1, -1] if len(h) else float("nan")
    print(f"trained {cfg.variant} for {cfg.epochs} epochs: total loss {first:.6f} -> {last:.6f}")


def cmd_embed(args, out):
    ds, art = _load_artifacts(args)
    ckpt = model.load_checkpoint(_need(args.ckpt))
    index = retrieval.build_index(ckpt, ds, art, SUBSETS[args.subset])
    retrieval.save_index(index, args.out)
    out.add(args.out)
    print(f"index {args.out}: n={index.n} d_latent={index.d_latent} subset={args.subset}")


def _read_queries(path, d):
    if not path.lower().endswith(".csv"):
        q = dsmod.load_binary(path)
        return q.ids, q.features.astype(np.float64)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty query file")
    header = [h.strip() for h in rows[0]]
    fcols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
    if "id" not in header or len(fcols) != d:
        raise ParseError(f"{path}: need an id column and {d} feature columns f0..f{d - 1}")
    id_col = header.index("id")
    ids, vecs = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            vecs.append([float(row[i]) for i in fcols])
        except (ValueError, IndexError):
            raise ParseError(f"{path}: row {lineno}: bad feature values") from None
        ids.append(row[id_col])
    return ids, np.array(vecs, dtype=np.float32).astype(np.float64)


def cmd_query(args, out):
    ds, art = _load_artifacts(args)
    ckpt = model.load_checkpoint(_need(args.ckpt))
    index = retrieval.load_index(_need(args.index))
    ids, vecs = _read_queries(_need(args.queries), ds.d)
    results = retrieval.query_batch(index, ckpt, art, vecs, args.K, ids=ids, k=args.k_attach)
    failed = [r for r in results if not r.ok]
    for r in failed:
        print(f"query {r.query_id} failed: {r.error}", file=sys.stderr)
    if args.out:
        _write_text_atomic(args.out, lambda p: retrieval.write_results_csv(results, p))
        out.add(args.out)
    else:
        for r in results:
            for rank, h in enumerate(r.hits or [], start=1):
                print(f"{r.query_id}\t{rank}\t{h.id}\t{h.label}\t{h.distance:.6g}")
    if failed and len(failed) == len(results):
        raise failed[0].error


def cmd_evaluate(args, out):
    ds, art = _load_artifacts(args)
    ckpt = model.load_checkpoint(_need(args.ckpt))
    index = retrieval.load_index(_need(args.index))
    report = metrics.evaluate(index, ckpt, art, ds, k=args.k, split=args.split_name,
                              mode=args.mode, corpus_relevance=args.corpus_relevance)
    if args.report:
        _write_text_atomic(args.report, report.write_json)
        out.add(args.report)
    if args.csv:
        _write_text_atomic(args.csv, report.write_csv)
        out.add(args.csv)
    print(f"map({args.k})={report.map_k:.4f} mmv({args.k})={report.mmv_k:.4f} "
          f"queries={report.evaluated} skipped={report.skipped}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--config", help="key=value config file; flags override it")
    common.add_argument("--threads", type=int, default=None, help="numba worker threads")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    p = argparse.ArgumentParser(prog="graphret", description=__doc__, formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], formatter_class=fmt,
                       help="CSV features -> binary dataset with splits")
    s.add_argument("--csv", required=True, help="input CSV (id,label,split,f0..)")
    s.add_argument("--out", required=True, help="output binary dataset")
    s.add_argument("--split", type=_ratios, default=None,
                   help="train,val,test ratios (re-split); unassigned rows use 0.7,0.1,0.2")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", parents=[common], formatter_class=fmt,
                       help="synthetic Gaussian-cluster dataset")
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--per-class", type=int, default=100)
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--sep", type=float, default=10.0, help="centre separation")
    s.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    s.add_argument("--split", type=_ratios, default=dsmod.DEFAULT_RATIOS, help="train,val,test ratios")
    s.add_argument("--out", required=True, help="output dataset (.csv or binary)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("build-graph", parents=[common], formatter_class=fmt,
                       help="k-NN similarity graph (symmetrized)")
    s.add_argument("--dataset", required=True)
    s.add_argument("--k", type=int, default=None, help="neighbours per node (overrides --preset)")
    s.add_argument("--preset", choices=sorted(PRESETS), default="bach",
                   help="dataset preset: breakhis k=25, bach k=15")
    s.add_argument("--method", choices=("exact", "kdtree"), default="exact")
    s.add_argument("--trees", type=int, default=4, help="kd-trees in the forest")
    s.add_argument("--checks", type=int, default=None, help="leaf-visit budget (points examined)")
    s.add_argument("--tsv", default=None, help="also export an edge list")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_graph)

    s = sub.add_parser("train", parents=[common], formatter_class=fmt, help="train the autoencoder")
    s.add_argument("--dataset", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--losses", default=None, help="loss history CSV (default: <out>.losses.csv)")
    s.add_argument("--variant", choices=sorted(model.VARIANTS), default="a-arvgae")
    s.add_argument("--epochs", type=int, default=250)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--dropout", type=float, default=0.2)
    s.add_argument("--heads", type=int, default=2)
    s.add_argument("--hidden", type=int, default=64, help="attention output width per head")
    s.add_argument("--latent", type=int, default=32)
    s.add_argument("--disc-hidden", type=int, default=64)
    s.add_argument("--disc-iters", type=int, default=5)
    s.add_argument("--recon", choices=("bce", "mse"), default="bce")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("embed", parents=[common], formatter_class=fmt, help="build the retrieval index")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--subset", choices=sorted(SUBSETS), default="train")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("query", parents=[common], formatter_class=fmt, help="top-K retrieval")
    s.add_argument("--index", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--queries", required=True, help="CSV with id,f0.. columns, or a binary dataset")
    s.add_argument("--K", type=int, default=5)
    s.add_argument("--k-attach", type=int, default=None,
                   help="graph neighbours for the query node (default: graph min degree)")
    s.add_argument("--out", default=None, help="results CSV (default: print)")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("evaluate", parents=[common], formatter_class=fmt, help="mAP(k) and mMV(k)")
    s.add_argument("--index", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--split-name", choices=dsmod.SPLITS, default="test")
    s.add_argument("--mode", choices=("attach", "graph"), default="attach")
    s.add_argument("--corpus-relevance", action="store_true",
                   help="normalize AP by relevant items in the whole index")
    s.add_argument("--report", default=None, help="JSON report path")
    s.add_argument("--csv", default=None, help="CSV report path")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            conf = read_config(_need(known.config))
            for action in parser._subparsers._group_actions:
                for sp in action.choices.values():
                    acts = {a.dest: a for a in sp._actions}
                    sp.set_defaults(**{k: _config_value(acts[k], v)
                                       for k, v in conf.items() if k in acts})
    except FileNotFoundError as exc:
        print(f"graphret: error: no such file: {exc.args[0]}", file=sys.stderr)
        return 2
    except GraphretError as exc:
        print(f"graphret: error: {exc}", file=sys.stderr)
        return exc.exit_code
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads:
        _accel.set_threads(args.threads)
    out = _Outputs()
    try:
        args.func(args, out)
    except FileNotFoundError as exc:
        out.cleanup()
        print(f"graphret: error: no such file: {exc.filename or exc.args[0]}", file=sys.stderr)
        return 2
    except GraphretError as exc:
        out.cleanup()
        print(f"graphret: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except BaseException:
        out.cleanup()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
