"""Retrieval quality: mean average precision and mean majority vote at k."""
import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import EmptyDatasetError, ParameterError
from .retrieval import query_batch, query_nodes


def average_precision_at_k(retrieved_labels, query_label, k, n_relevant=None):
    """AP over the top ``k`` results.

    The normalizer is the number of relevant items inside the top ``k``; pass
    ``n_relevant`` (relevant items in the whole corpus) to normalize by that
    instead. AP is 0 when nothing relevant was retrieved.
    """
    labels = list(retrieved_labels)
    if not labels:
        raise ParameterError("average_precision_at_k: empty result list")
    if not 1 <= k <= len(labels):
        raise ParameterError(f"k={k} must satisfy 1 <= k <= {len(labels)}")
    # exact rational arithmetic, rounded once
    total, hits = Fraction(0), 0
    for r, lab in enumerate(labels[:k], start=1):
        if lab == query_label:
            hits += 1
            total += Fraction(hits, r)
    if hits == 0:
        return 0.0
    return float(total / (hits if n_relevant is None else n_relevant))


def majority_vote_hit(retrieved_labels, query_label, k):
    """1 if ``query_label`` is among the most frequent labels of the top ``k``."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    counts = Counter(list(retrieved_labels)[:k])
    if not counts:
        return 0
    top = max(counts.values())
    return int(counts.get(query_label, 0) == top)


@dataclass
class QueryEval:
    query_id: str
    label: int
    ap: float
    mv_hit: int
    retrieved_ids: list
    retrieved_labels: list


@dataclass
class EvalReport:
    k: int
    map_k: float
    mmv_k: float
    per_query: list = field(default_factory=list)
    evaluated: int = 0
    skipped: int = 0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "k", "value"])
            w.writerow(["map", self.k, repr(self.map_k)])
            w.writerow(["mmv", self.k, repr(self.mmv_k)])
            w.writerow([])
            w.writerow(["query_id", "label", "ap", "mv_hit", "retrieved_ids", "retrieved_labels"])
            for q in self.per_query:
                w.writerow([q.query_id, q.label, repr(q.ap), q.mv_hit, " ".join(q.retrieved_ids),
                            " ".join(map(str, q.retrieved_labels))])


def aggregate(per_query, k, skipped=0):
    if not per_query:
        raise EmptyDatasetError("no queries were evaluated")
    return EvalReport(k, float(np.mean([q.ap for q in per_query])),
                      float(np.mean([q.mv_hit for q in per_query])), per_query, len(per_query), skipped)


def evaluate(index, ckpt, art, ds, k=5, split="test", mode="attach", corpus_relevance=False):
    """mAP(k) / mMV(k) over the items of ``split``.

    ``mode='attach'`` embeds each query through the query path (feature
    vector attached to the graph); ``mode='graph'`` uses the query node's
    own in-graph embedding.
    """
    nodes = np.nonzero(ds.split_mask(split))[0]
    if nodes.size == 0:
        raise EmptyDatasetError(f"split {split!r} is empty")
    if k > index.n:
        raise ParameterError(f"k={k} exceeds index size {index.n}")
    ids = [ds.ids[i] for i in nodes]
    if mode == "attach":
        results = query_batch(index, ckpt, art, art.features[nodes], k, ids=ids)
        ranked = [r.hits for r in results]
    elif mode == "graph":
        ranked = query_nodes(index, ckpt, art, nodes, k)
    else:
        raise ParameterError(f"unknown evaluation mode {mode!r}")
    per_query, skipped = [], 0
    for node, qid, hits in zip(nodes, ids, ranked):
        if hits is None:
            skipped += 1
            continue
        label = int(ds.labels[node])
        labels = [h.label for h in hits]
        n_rel = int(np.sum(index.labels == label)) if corpus_relevance else None
        per_query.append(QueryEval(qid, label, average_precision_at_k(labels, label, k, n_rel),
                                   majority_vote_hit(labels, label, k), [h.id for h in hits], labels))
    return aggregate(per_query, k, skipped)
