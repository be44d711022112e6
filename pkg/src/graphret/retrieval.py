"""Latent-space retrieval index and top-K Euclidean queries."""
import csv
import hashlib
import io
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import graph as graphmod
from .dataset import Reader, write_atomic
from .errors import DimensionError, EmptyDatasetError, FormatError, GraphretError, ParameterError
from .model import Checkpoint, GraphArtifacts, encode

MAGIC = b"GRFI"
VERSION = 1


@dataclass(frozen=True, eq=False)
class RetrievalIndex:
    embeddings: np.ndarray  # float32 (n, d_latent)
    ids: list
    labels: np.ndarray  # uint32
    nodes: np.ndarray  # graph node index of every entry
    source_hash: bytes  # sha256 of the checkpoint bytes

    def __post_init__(self):
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", np.ascontiguousarray(self.labels, dtype=np.uint32))
        object.__setattr__(self, "nodes", np.ascontiguousarray(self.nodes, dtype=np.int64))
        object.__setattr__(self, "ids", list(self.ids))
        n = emb.shape[0]
        if len(self.ids) != n or self.labels.shape != (n,) or self.nodes.shape != (n,):
            raise DimensionError("index fields disagree on the number of entries")
        if len(set(self.ids)) != n:
            raise FormatError("index ids are not unique")
        if len(self.source_hash) != 32:
            raise FormatError("source hash must be 32 bytes")
        # rank of every id in sorted order, used to break distance ties
        object.__setattr__(self, "_id_rank", np.argsort(np.argsort(np.array(self.ids, dtype=object),
                                                                   kind="stable"), kind="stable"))

    @property
    def n(self):
        return self.embeddings.shape[0]

    @property
    def d_latent(self):
        return self.embeddings.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RetrievalIndex):
            return NotImplemented
        return index_to_bytes(self) == index_to_bytes(other)


@dataclass(frozen=True)
class Hit:
    id: str
    label: int
    distance: float


@dataclass
class QueryResult:
    query_id: str
    hits: list = None
    error: Exception = None

    @property
    def ok(self):
        return self.error is None


def _model(ckpt):
    return ckpt.to_model() if isinstance(ckpt, Checkpoint) else ckpt


def _digest(ckpt):
    return ckpt.digest() if isinstance(ckpt, Checkpoint) else Checkpoint.from_model(ckpt).digest()


def build_index(ckpt, ds, art, subset=("train",)):
    """Encode every node in eval mode and keep the latent means of ``subset``."""
    model = _model(ckpt)
    if ds.n != art.n or ds.d != model.config.d_in:
        raise DimensionError(f"dataset ({ds.n}x{ds.d}) does not match graph ({art.n} nodes) "
                             f"or model (d_in={model.config.d_in})")
    nodes = np.nonzero(ds.split_mask(*subset))[0]
    if nodes.size == 0:
        raise EmptyDatasetError(f"no items in subset {subset}")
    with ad.no_grad():
        mu = encode(model, art, training=False).mu.data
    return RetrievalIndex(mu[nodes].astype(np.float32), [ds.ids[i] for i in nodes],
                          ds.labels[nodes], nodes, _digest(ckpt))


def rank(index, vec, K):
    """Exhaustive ranking of index rows by Euclidean distance to ``vec``."""
    if not 1 <= K <= index.n:
        raise ParameterError(f"K={K} must satisfy 1 <= K <= {index.n}")
    q = np.asarray(vec, dtype=np.float32).astype(np.float64)
    diff = index.embeddings.astype(np.float64) - q
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.lexsort((index._id_rank, dist))[:K]
    return [Hit(index.ids[i], int(index.labels[i]), float(dist[i])) for i in order]


def embed_query(model, art, q, k=None, method="exact"):
    """Attach ``q`` to the graph and return its eval-mode latent mean."""
    k = art.k if k is None else k
    g2, node = graphmod.attach_query(art.graph, art.features, q, k, method=method)
    X2 = np.vstack([art.features, np.asarray(q, dtype=np.float64).reshape(1, -1)])
    art2 = GraphArtifacts.build(X2, g2)
    with ad.no_grad():
        return encode(model, art2, training=False).mu.data[node]


def query(index, ckpt, art, q, K, k=None, method="exact"):
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != art.features.shape[1]:
        raise DimensionError(f"query has dimension {q.shape[0]}, expected {art.features.shape[1]}")
    if not 1 <= K <= index.n:
        raise ParameterError(f"K={K} must satisfy 1 <= K <= {index.n}")
    return rank(index, embed_query(_model(ckpt), art, q, k, method), K)


def query_nodes(index, ckpt, art, nodes, K):
    """Rank for nodes already in the graph (transductive queries)."""
    with ad.no_grad():
        mu = encode(_model(ckpt), art, training=False).mu.data
    return [rank(index, mu[i], K) for i in nodes]


def query_batch(index, ckpt, art, queries, K, ids=None, k=None, method="exact"):
    """Independent :func:`query` per row; failures are recorded, not raised."""
    model = _model(ckpt)
    queries = list(queries)
    ids = [str(i) for i in range(len(queries))] if ids is None else list(ids)
    out = []
    for qid, q in zip(ids, queries):
        try:
            out.append(QueryResult(qid, query(index, model, art, q, K, k, method)))
        except GraphretError as exc:
            out.append(QueryResult(qid, error=exc))
    return out


def write_results_csv(results, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "rank", "id", "label", "distance"])
        for res in results:
            for r, h in enumerate(res.hits or [], start=1):
                w.writerow([res.query_id, r, h.id, h.label, repr(h.distance)])


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def index_to_bytes(index):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQQ", VERSION, index.n, index.d_latent))
    buf.write(index.source_hash)
    buf.write(index.embeddings.astype("<f4").tobytes())
    buf.write(index.labels.astype("<u4").tobytes())
    buf.write(index.nodes.astype("<u8").tobytes())
    for s in index.ids:
        b = s.encode("utf-8")
        buf.write(struct.pack("<I", len(b)))
        buf.write(b)
    return buf.getvalue()


def index_from_bytes(data, name="<bytes>"):
    r = Reader(data, name)
    r.header(MAGIC, VERSION)
    n, d = r.unpack("<QQ")
    if n == 0:
        raise EmptyDatasetError(f"{name}: empty index")
    if n * (4 * d + 12) > len(data):
        raise FormatError(f"{name}: truncated payload")
    digest = bytes(r.take(32))
    emb = r.array("<f4", n * d).reshape(n, d)
    labels = r.array("<u4", n)
    nodes = r.array("<u8", n).astype(np.int64)
    ids = [r.string() for _ in range(n)]
    r.finish()
    return RetrievalIndex(emb, ids, labels, nodes, digest)


def save_index(index, path):
    write_atomic(path, index_to_bytes(index))


def load_index(path):
    with open(path, "rb") as fh:
        return index_from_bytes(fh.read(), str(path))


def checkpoint_hash(ckpt):
    return hashlib.sha256(ckpt.to_bytes()).hexdigest()
