"""Filtered ranking metrics and relation-level breakdowns."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .data import SPLITS, FilterIndex, TripleStore, build_adjacency, build_filter_index, query_triples
from .model import ModelParams, bind, entity_points, graph_for, score_queries

log = logging.getLogger(__name__)

HITS_AT = (1, 3, 10)
CATEGORIES = ("1-1", "1-N", "N-1", "N-N")


@dataclass
class RankingReport:
    mrr: float
    hits: dict = field(default_factory=dict)
    n_queries: int = 0

    @classmethod
    def from_ranks(cls, ranks) -> "RankingReport":
        ranks = np.asarray(ranks, dtype=np.float64)
        if ranks.size == 0:
            raise ValueError("no queries to report on")
        return cls(
            mrr=float(np.mean(1.0 / ranks)),
            hits={k: float(np.mean(ranks <= k)) for k in HITS_AT},
            n_queries=int(ranks.size),
        )

    def to_dict(self) -> dict:
        d = {"mrr": self.mrr, "n_queries": self.n_queries}
        d.update({f"hits@{k}": v for k, v in self.hits.items()})
        return d


def filtered_rank(scores, true_tail: int, known: frozenset | set) -> int:
    """1 + entities scoring >= the true tail, skipping other known-true tails.

    Ties rank the true tail below every equal-scoring candidate.
    """
    if true_tail not in known:
        raise ValueError(f"true tail {true_tail} missing from the filter set")
    scores = np.asarray(scores, dtype=np.float64)
    s = scores[true_tail]
    ahead = scores >= s
    ahead[true_tail] = False
    others = [k for k in known if k != true_tail]
    if others:
        ahead[others] = False
    return 1 + int(np.count_nonzero(ahead))


def rank_queries(model: ModelParams, queries, filter_index: FilterIndex, adjacency=None, chunk=512):
    """Filtered rank of the tail of each (h, r, t) query row."""
    queries = np.asarray(queries, dtype=np.int64).reshape(-1, 3)
    p = bind(model)
    graph = graph_for(model, adjacency) if model.config.use_gcn else None
    ent = entity_points(p, model.config, graph)
    ranks = np.empty(len(queries), dtype=np.int64)
    for start in range(0, len(queries), chunk):
        q = queries[start : start + chunk]
        scores, _ = score_queries(p, model.config, ent, q[:, 0], q[:, 1])
        scores = np.asarray(scores)
        for row, (h, r, t) in enumerate(q):
            ranks[start + row] = filtered_rank(scores[row], int(t), filter_index.lookup(h, r))
    return ranks


def evaluate_split(
    model: ModelParams,
    store: TripleStore,
    split: str,
    adjacency=None,
    filter_index: FilterIndex | None = None,
    return_ranks: bool = False,
):
    """MRR and Hits@{1,3,10} over tail and (reversed) head queries of a split."""
    queries = query_triples(store, split)
    if len(queries) == 0:
        raise ValueError(f"split {split!r} is empty")
    if filter_index is None:
        filter_index = build_filter_index(store)
    if adjacency is None and model.config.use_gcn:
        adjacency = build_adjacency(store)
    ranks = rank_queries(model, queries, filter_index, adjacency)
    report = RankingReport.from_ranks(ranks)
    if return_ranks:
        return report, queries, ranks
    return report


# -- relation analyses -------------------------------------------------------------


def _relation_triples(store: TripleStore, splits=("train",)):
    nrel = store.num_base_relations
    parts = [store.split(s) for s in splits]
    trip = np.concatenate(parts, axis=0) if parts else np.zeros((0, 3), dtype=np.int64)
    return trip[trip[:, 1] < nrel]


def relation_categories(store: TripleStore, threshold: float = 1.5) -> dict:
    """1-1 / 1-N / N-1 / N-N label per base relation id.

    Uses mean tails per head and heads per tail on the train split; a side
    is "N" when its mean exceeds ``threshold``.
    """
    train = _relation_triples(store)
    everything = _relation_triples(store, SPLITS)
    out = {}
    for r in range(store.num_base_relations):
        rows = train[train[:, 1] == r]
        if len(rows) == 0:
            log.warning("relation %s has no train triples; using all splits", store.relations.token(r))
            rows = everything[everything[:, 1] == r]
        if len(rows) == 0:
            continue
        tails_per_head = len(rows) / len(np.unique(rows[:, 0]))
        heads_per_tail = len(rows) / len(np.unique(rows[:, 2]))
        head_side = "N" if heads_per_tail > threshold else "1"
        tail_side = "N" if tails_per_head > threshold else "1"
        out[r] = f"{head_side}-{tail_side}"
    return out


def khs(edges) -> float:
    """Krackhardt hierarchy score of a directed graph given as (u, v) pairs.

    Fraction of ordered reachable pairs (u, v), u != v, for which v does not
    reach u.
    """
    edges = [(u, v) for u, v in edges]
    if not edges:
        raise ValueError("empty relation graph")
    succ: dict = {}
    for u, v in edges:
        succ.setdefault(u, set()).add(v)
        succ.setdefault(v, set())
    reach = {}
    for s in succ:
        seen = {s}
        todo = deque([s])
        while todo:
            u = todo.popleft()
            for v in succ[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        seen.discard(s)
        reach[s] = seen
    total = sum(len(r) for r in reach.values())
    if total == 0:
        raise ValueError("relation graph has no reachable pairs")
    one_way = sum(1 for u, r in reach.items() for v in r if u not in reach[v])
    return one_way / total


def relation_khs(store: TripleStore) -> dict:
    trip = _relation_triples(store, SPLITS)
    out = {}
    for r in range(store.num_base_relations):
        rows = trip[trip[:, 1] == r]
        if len(rows):
            out[r] = khs(zip(rows[:, 0].tolist(), rows[:, 2].tolist()))
    return out


def per_relation(store: TripleStore, queries, ranks) -> list[dict]:
    """Hits@10 and MRR per base relation (both query directions pooled)."""
    nrel = store.num_base_relations
    base_rel = queries[:, 1] % nrel if store.reciprocal else queries[:, 1]
    scores = relation_khs(store)
    rows = []
    for r in range(nrel):
        sel = ranks[base_rel == r]
        if sel.size == 0:
            continue
        rows.append(
            {
                "relation": store.relations.token(r),
                "n_queries": int(sel.size),
                "mrr": float(np.mean(1.0 / sel)),
                "hits@10": float(np.mean(sel <= 10)),
                "khs": scores.get(r),
            }
        )
    return rows


def per_category(store: TripleStore, queries, ranks, threshold: float = 1.5) -> dict:
    """MRR and Hits@10 per relation category, split into head and tail prediction."""
    cats = relation_categories(store, threshold)
    nrel = store.num_base_relations
    table = {}
    for cat in CATEGORIES:
        rels = [r for r, c in cats.items() if c == cat]
        entry = {}
        for side, offset in (("tail", 0), ("head", nrel)):
            if side == "head" and not store.reciprocal:
                continue
            mask = np.isin(queries[:, 1], [r + offset for r in rels])
            sel = ranks[mask]
            entry[side] = {
                "n_queries": int(sel.size),
                "mrr": float(np.mean(1.0 / sel)) if sel.size else None,
                "hits@10": float(np.mean(sel <= 10)) if sel.size else None,
            }
        table[cat] = entry
    return table


def format_report(split: str, report: RankingReport, relations=None, categories=None) -> str:
    lines = [f"split {split}: {report.n_queries} queries"]
    lines.append(f"  MRR     {report.mrr:.4f}")
    for k, v in report.hits.items():
        lines.append(f"  Hits@{k:<3d}{v:.4f}")
    if relations:
        lines.append("")
        lines.append(f"  {'relation':<32s} {'n':>6s} {'H@10':>7s} {'Khs':>6s}")
        for row in relations:
            k = "-" if row["khs"] is None else f"{row['khs']:.2f}"
            lines.append(f"  {row['relation']:<32s} {row['n_queries']:>6d} {row['hits@10']:>7.3f} {k:>6s}")
    if categories:
        lines.append("")
        lines.append(f"  {'category':<9s} {'side':<5s} {'n':>6s} {'MRR':>7s} {'H@10':>7s}")
        for cat, sides in categories.items():
            for side, m in sides.items():
                if not m["n_queries"]:
                    continue
                lines.append(
                    f"  {cat:<9s} {side:<5s} {m['n_queries']:>6d} {m['mrr']:>7.3f} {m['hits@10']:>7.3f}"
                )
    return "\n".join(lines)
