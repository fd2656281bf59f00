"""Triple stores, vocabularies, reciprocal augmentation and synthetic trees."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class DataError(ValueError):
    pass


class Vocab:
    """String <-> id bijection with ids assigned in first-appearance order."""

    def __init__(self, tokens=()):
        self.tokens: list[str] = []
        self.ids: dict[str, int] = {}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        idx = self.ids.get(token)
        if idx is None:
            idx = len(self.tokens)
            self.ids[token] = idx
            self.tokens.append(token)
        return idx

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, token):
        return self.ids[token]

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def copy(self):
        return Vocab(self.tokens)


@dataclass
class TripleStore:
    entities: Vocab
    relations: Vocab
    splits: dict = field(default_factory=dict)
    reciprocal: bool = False

    def __post_init__(self):
        for name in SPLITS:
            arr = np.asarray(self.splits.get(name, np.zeros((0, 3))), dtype=np.int64)
            self.splits[name] = arr.reshape(-1, 3)

    @property
    def num_base_relations(self) -> int:
        """Relation count before reciprocal augmentation."""
        return len(self.relations) // 2 if self.reciprocal else len(self.relations)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @classmethod
    def from_triples(cls, train, valid=(), test=()) -> "TripleStore":
        """Build a store from (head, relation, tail) string triples."""
        entities, relations = Vocab(), Vocab()
        splits = {}
        for name, rows in zip(SPLITS, (train, valid, test)):
            rows = [(h, r, t, k) for k, (h, r, t) in enumerate(rows, 1)]
            splits[name] = _encode(rows, entities, relations, f"<{name}>")
        return cls(entities, relations, splits)

    def split(self, name: str) -> np.ndarray:
        if name not in self.splits:
            raise DataError(f"unknown split {name!r}")
        return self.splits[name]

    def vocab_hash(self) -> str:
        h = hashlib.sha256()
        for tok in self.entities.tokens:
            h.update(tok.encode("utf-8") + b"\0")
        h.update(b"\1")
        for tok in self.relations.tokens[: self.num_base_relations]:
            h.update(tok.encode("utf-8") + b"\0")
        return h.hexdigest()


# -- loading -------------------------------------------------------------------


def read_triples(path) -> list[tuple[str, str, str, int]]:
    """(head, relation, tail, line number) rows of a tab-separated file."""
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
            rows.append((fields[0], fields[1], fields[2], lineno))
    return rows


def _encode(rows, entities, relations, path):
    seen = {}
    out = np.zeros((len(rows), 3), dtype=np.int64)
    for k, (h, r, t, lineno) in enumerate(rows):
        key = (h, r, t)
        if key in seen:
            raise DataError(f"{path}:{lineno}: duplicate triple (first seen on line {seen[key]})")
        seen[key] = lineno
        out[k] = (entities.add(h), relations.add(r), entities.add(t))
    return out


def load_tsv(path, entities: Vocab | None = None, relations: Vocab | None = None) -> TripleStore:
    """Load one triple file as the train split of a new store."""
    rows = read_triples(path)
    if not rows:
        raise DataError(f"{path}: empty triple file")
    entities = entities if entities is not None else Vocab()
    relations = relations if relations is not None else Vocab()
    train = _encode(rows, entities, relations, path)
    return TripleStore(entities, relations, {"train": train})


def load_dataset(directory) -> TripleStore:
    """Load train/valid/test files from ``directory`` into one vocabulary.

    Accepts ``<split>``, ``<split>.txt`` or ``<split>.tsv`` file names.  The
    train file must be non-empty; missing or empty valid/test files give
    empty splits.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"dataset directory not found: {directory}")
    entities, relations = Vocab(), Vocab()
    splits = {}
    for name in SPLITS:
        path = next(
            (directory / f"{name}{ext}" for ext in (".txt", ".tsv", "") if (directory / f"{name}{ext}").is_file()),
            None,
        )
        if path is None:
            if name == "train":
                raise DataError(f"no train file in {directory}")
            log.warning("no %s split in %s", name, directory)
            continue
        rows = read_triples(path)
        if not rows and name == "train":
            raise DataError(f"{path}: empty triple file")
        splits[name] = _encode(rows, entities, relations, path)
    return TripleStore(entities, relations, splits)


def write_tsv(path, triples, store: TripleStore) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in np.asarray(triples):
            fh.write(f"{store.entities.token(h)}\t{store.relations.token(r)}\t{store.entities.token(t)}\n")


# -- augmentation and indices -----------------------------------------------------


def augment_reciprocal(store: TripleStore) -> TripleStore:
    """Add (t, r + |R|, h) for every train triple; r + |R| is named ``<r>_reverse``.

    Valid/test splits keep their original triples; evaluation turns head
    queries into tail queries under the reverse relation.
    """
    if store.reciprocal:
        raise DataError("store is already augmented")
    nrel = store.num_relations
    relations = store.relations.copy()
    for tok in store.relations.tokens:
        relations.add(f"{tok}_reverse")
    splits = dict(store.splits)
    train = store.splits["train"]
    rev = np.stack([train[:, 2], train[:, 1] + nrel, train[:, 0]], axis=1)
    splits["train"] = np.concatenate([train, rev], axis=0)
    return replace(store, relations=relations, splits=splits, reciprocal=True)


def drop_reciprocal(store: TripleStore) -> TripleStore:
    if not store.reciprocal:
        return store
    nrel = store.num_base_relations
    relations = Vocab(store.relations.tokens[:nrel])
    splits = {k: v[v[:, 1] < nrel] for k, v in store.splits.items()}
    return TripleStore(store.entities, relations, splits)


def query_triples(store: TripleStore, split: str) -> np.ndarray:
    """Tail queries for a split: originals plus the reversed head queries."""
    trip = store.split(split)
    nrel = store.num_base_relations
    base = trip[trip[:, 1] < nrel]
    if not store.reciprocal:
        return base
    rev = np.stack([base[:, 2], base[:, 1] + nrel, base[:, 0]], axis=1)
    return np.concatenate([base, rev], axis=0)


class FilterIndex(dict):
    """(head, relation) -> set of tails known true in any split."""

    def lookup(self, h, r) -> frozenset:
        return self.get((int(h), int(r)), frozenset())


def build_filter_index(store: TripleStore) -> FilterIndex:
    index = FilterIndex()
    for name in SPLITS:
        for h, r, t in query_triples(store, name):
            index.setdefault((int(h), int(r)), set()).add(int(t))
    for k in index:
        index[k] = frozenset(index[k])
    return index


def build_adjacency(store: TripleStore) -> list[list[tuple[int, int]]]:
    """Outgoing (relation, neighbour) edges per entity, from the train split only."""
    adjacency = [[] for _ in range(store.num_entities)]
    for h, r, t in store.split("train"):
        adjacency[int(h)].append((int(r), int(t)))
    return adjacency


# -- synthetic data ------------------------------------------------------------------


def generate_synthetic_tree(depth: int, branching: int, seed: int = 0) -> TripleStore:
    """Complete ``branching``-ary tree with ``depth`` levels; edges child_of parent.

    Splits are an 80/10/10 edge partition.  Held-out edges are drawn so that
    every entity keeps at least one train triple; edges into leaves never
    leave train.
    """
    if depth < 2 or branching < 2:
        raise DataError("need depth >= 2 and branching >= 2")
    entities = Vocab()
    relations = Vocab(["child_of"])
    entities.add("n0")
    edges = []
    level = [0]
    for _ in range(depth - 1):
        nxt = []
        for parent in level:
            for _ in range(branching):
                child = entities.add(f"n{len(entities)}")
                edges.append((child, 0, parent))
                nxt.append(child)
        level = nxt
    edges = np.asarray(edges, dtype=np.int64)
    leaves = set(level)
    eligible = np.array([k for k, (ch, _, _) in enumerate(edges) if ch not in leaves], dtype=np.int64)

    rng = np.random.default_rng(seed)
    n_hold = int(np.floor(0.1 * len(edges) + 0.5))
    n_hold = min(n_hold, len(eligible) // 2)
    # hold out edges in shuffled order, skipping any that would leave an
    # endpoint without a train edge
    degree = np.bincount(np.concatenate([edges[:, 0], edges[:, 2]]), minlength=len(entities))
    picked = []
    for k in rng.permutation(eligible):
        if len(picked) == 2 * n_hold:
            break
        ch, _, pa = edges[k]
        if degree[ch] > 1 and degree[pa] > 1:
            degree[ch] -= 1
            degree[pa] -= 1
            picked.append(k)
    n_hold = len(picked) // 2
    valid_idx = np.sort(np.asarray(picked[:n_hold], dtype=np.int64))
    test_idx = np.sort(np.asarray(picked[n_hold : 2 * n_hold], dtype=np.int64))
    train_mask = np.ones(len(edges), dtype=bool)
    train_mask[valid_idx] = False
    train_mask[test_idx] = False
    splits = {"train": edges[train_mask], "valid": edges[valid_idx], "test": edges[test_idx]}
    return TripleStore(entities, relations, splits)


def write_dataset(store: TripleStore, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in SPLITS:
        path = directory / f"{name}.txt"
        write_tsv(path, store.split(name), store)
        paths.append(path)
    return paths


def random_kg(num_entities: int, num_relations: int, num_triples: int, seed: int = 0) -> TripleStore:
    """Uniformly random distinct triples (no self-edges), all in train."""
    if num_triples > num_entities * (num_entities - 1) * num_relations:
        raise DataError("more triples requested than distinct (h, r, t) combinations")
    rng = np.random.default_rng(seed)
    picked = set()
    while len(picked) < num_triples:
        h, t = rng.integers(num_entities, size=2)
        if h != t:
            picked.add((int(h), int(rng.integers(num_relations)), int(t)))
    entities = Vocab(f"e{i}" for i in range(num_entities))
    relations = Vocab(f"r{i}" for i in range(num_relations))
    return TripleStore(entities, relations, {"train": np.array(sorted(picked), dtype=np.int64)})
