"""Immutable heterogeneous social graph: typed directed relations, labels, splits.

File formats:
  nodes: JSON Lines, one record per node with keys
         id, num, bool, desc_emb, tweet_emb, label, split
  edges: tab-separated `src<TAB>dst<TAB>relation`, no header

Edges are directed and ingestion never symmetrizes; an edge j -> i makes
j an in-neighbor of i, and message passing aggregates over in-neighbors.
Mutual ties must appear as two lines.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DataError, IntegrityError, ValidationError

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
DEFAULT_RELATIONS = ("follower", "friend")
UNKNOWN_LABEL = -1

_NODE_KEYS = {"id", "num", "bool", "desc_emb", "tweet_emb", "label", "split"}


@dataclass(frozen=True)
class HeteroGraph:
    """A loaded social graph; all arrays are read-only after construction.

    Node ids are exactly 0..n-1 and index every per-node array.  `labels`
    uses 0 for human, 1 for bot, -1 for unknown; unknown nodes are
    excluded from every loss and metric downstream.
    """

    num: np.ndarray        # (n, d_num) float64 raw numerical metadata
    bools: np.ndarray      # (n, d_bool) int8, entries in {0, 1}
    desc_emb: np.ndarray   # (n, d_des) float64 description embedding
    tweet_emb: np.ndarray  # (n, d_tweet) float64 tweet representation
    labels: np.ndarray     # (n,) int8 in {0, 1, -1}
    split: np.ndarray      # (n,) int8 index into SPLITS
    relations: tuple[str, ...]
    edges: dict[str, np.ndarray] = field(repr=False)  # relation -> (m_r, 2) int64

    def __post_init__(self):
        for arr in (self.num, self.bools, self.desc_emb, self.tweet_emb,
                    self.labels, self.split, *self.edges.values()):
            arr.setflags(write=False)

    @property
    def node_count(self) -> int:
        return self.labels.shape[0]

    @property
    def edge_count(self) -> int:
        return sum(e.shape[0] for e in self.edges.values())

    def split_mask(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ContractError(f"unknown split '{name}'; expected one of {SPLITS}")
        return self.split == SPLITS.index(name)

    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNKNOWN_LABEL


@dataclass(frozen=True)
class NeighborIndex:
    """Per-relation in-neighbor lists: `lists[r][i]` holds sources of edges j->i."""

    relations: tuple[str, ...]
    lists: dict[str, list[np.ndarray]] = field(repr=False)

    def neighbors(self, relation: str, node: int) -> np.ndarray:
        if relation not in self.lists:
            raise KeyError(f"unknown relation '{relation}'; graph has {self.relations}")
        return self.lists[relation][node]


def build_neighbor_index(g: HeteroGraph) -> NeighborIndex:
    n = g.node_count
    lists: dict[str, list[np.ndarray]] = {}
    for r in g.relations:
        buckets: list[list[int]] = [[] for _ in range(n)]
        for src, dst in g.edges[r]:
            buckets[dst].append(src)
        lists[r] = [np.asarray(b, dtype=np.int64) for b in buckets]
    return NeighborIndex(relations=g.relations, lists=lists)


def relation_neighbors(g: HeteroGraph, relation: str, node: int) -> list[int]:
    """In-neighbor ids of `node` under `relation`; empty list when none."""
    if relation not in g.edges:
        raise KeyError(f"unknown relation '{relation}'; graph has {g.relations}")
    if not 0 <= node < g.node_count:
        raise ContractError(f"node {node} out of range [0, {g.node_count})")
    e = g.edges[relation]
    return [int(s) for s, d in e if d == node]


def relation_operator(g: HeteroGraph, relation: str) -> sp.csr_matrix:
    """Sparse mean-aggregation operator A for one relation.

    A[i, j] = 1/|N_r(i)| when j is an in-neighbor of i, else 0, so that
    (A @ X)[i] is the mean of i's in-neighbor rows.  Rows with no
    in-neighbors are zero.
    """
    n = g.node_count
    if relation not in g.edges:
        raise KeyError(f"unknown relation '{relation}'; graph has {g.relations}")
    e = g.edges[relation]
    if e.shape[0] == 0:
        return sp.csr_matrix((n, n))
    deg = np.bincount(e[:, 1], minlength=n).astype(np.float64)
    weights = 1.0 / deg[e[:, 1]]
    return sp.csr_matrix((weights, (e[:, 1], e[:, 0])), shape=(n, n))


# ---------------------------------------------------------------------------
# ingestion


def _parse_node_line(line: str, lineno: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as e:
        raise ValidationError(f"nodes line {lineno}: invalid JSON ({e})") from e
    if not isinstance(rec, dict):
        raise ValidationError(f"nodes line {lineno}: expected an object")
    keys = set(rec)
    if keys != _NODE_KEYS:
        missing, extra = _NODE_KEYS - keys, keys - _NODE_KEYS
        raise ValidationError(
            f"nodes line {lineno}: missing keys {sorted(missing)}, unexpected {sorted(extra)}"
        )
    return rec


def load_graph(nodes_path, edges_path) -> HeteroGraph:
    """Read and validate a graph from a nodes JSONL file and an edges TSV file."""
    for path in (nodes_path, edges_path):
        if not os.path.exists(path):
            raise DataError(f"input file not found: {path}")
    records: dict[int, dict] = {}
    with open(nodes_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            rec = _parse_node_line(line, lineno)
            nid = rec["id"]
            if not isinstance(nid, int) or isinstance(nid, bool):
                raise ValidationError(f"nodes line {lineno}: id must be an integer")
            if nid in records:
                raise IntegrityError(f"duplicate node id {nid} (line {lineno})")
            records[nid] = rec

    n = len(records)
    if n == 0:
        raise DataError(f"nodes file {nodes_path} contains no records")
    if set(records) != set(range(n)):
        raise ValidationError(f"node ids must be exactly 0..{n - 1}")

    def block(key, dtype):
        dims = {len(records[i][key]) for i in range(n)}
        if len(dims) != 1:
            off = next(i for i in range(n) if len(records[i][key]) != len(records[0][key]))
            raise ValidationError(f"node {off}: '{key}' dimension differs across nodes")
        return np.asarray([records[i][key] for i in range(n)], dtype=dtype).reshape(n, -1)

    bools = block("bool", np.int8)
    if bools.size and not np.isin(bools, (0, 1)).all():
        bad = int(np.argwhere(~np.isin(bools, (0, 1)))[0][0])
        raise ValidationError(f"node {bad}: 'bool' entries must be 0 or 1")

    labels = np.empty(n, dtype=np.int8)
    split = np.empty(n, dtype=np.int8)
    for i in range(n):
        lab = records[i]["label"]
        if lab not in (0, 1, None):
            raise ValidationError(f"node {i}: label must be 0, 1, or null")
        labels[i] = UNKNOWN_LABEL if lab is None else lab
        sp_name = records[i]["split"]
        if sp_name not in SPLITS:
            raise ValidationError(f"node {i}: split must be one of {SPLITS}")
        split[i] = SPLITS.index(sp_name)

    edges: dict[str, list[list[int]]] = {}
    order: list[str] = []
    with open(edges_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValidationError(
                    f"edges line {lineno}: expected src<TAB>dst<TAB>relation, got {line!r}"
                )
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError as e:
                raise ValidationError(f"edges line {lineno}: non-integer endpoint") from e
            if not (0 <= src < n and 0 <= dst < n):
                raise IntegrityError(
                    f"edges line {lineno}: dangling endpoint in {line.strip()!r} "
                    f"(node count {n})"
                )
            rel = parts[2]
            if not rel:
                raise ValidationError(f"edges line {lineno}: empty relation id")
            if rel not in edges:
                edges[rel] = []
                order.append(rel)
            edges[rel].append([src, dst])

    relations = tuple(order) if order else DEFAULT_RELATIONS
    edge_arrays = {
        r: np.asarray(edges.get(r, []), dtype=np.int64).reshape(-1, 2) for r in relations
    }

    g = HeteroGraph(
        num=block("num", np.float64),
        bools=bools,
        desc_emb=block("desc_emb", np.float64),
        tweet_emb=block("tweet_emb", np.float64),
        labels=labels,
        split=split,
        relations=relations,
        edges=edge_arrays,
    )
    counts = {r: int(edge_arrays[r].shape[0]) for r in relations}
    log.info(
        "loaded graph: %d nodes, edges per relation %s, labels {human: %d, bot: %d, unknown: %d}",
        n, counts, int((labels == 0).sum()), int((labels == 1).sum()),
        int((labels == UNKNOWN_LABEL).sum()),
    )
    return g


def save_graph(g: HeteroGraph, nodes_path, edges_path) -> None:
    """Write a graph back out; load_graph(save_graph(g)) reproduces g exactly."""
    with open(nodes_path, "w", encoding="utf-8") as f:
        for i in range(g.node_count):
            rec = {
                "id": i,
                "num": [float(v) for v in g.num[i]],
                "bool": [int(v) for v in g.bools[i]],
                "desc_emb": [float(v) for v in g.desc_emb[i]],
                "tweet_emb": [float(v) for v in g.tweet_emb[i]],
                "label": None if g.labels[i] == UNKNOWN_LABEL else int(g.labels[i]),
                "split": SPLITS[g.split[i]],
            }
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")
    with open(edges_path, "w", encoding="utf-8") as f:
        for r in g.relations:
            for src, dst in g.edges[r]:
                f.write(f"{src}\t{dst}\t{r}\n")


def permute_graph(g: HeteroGraph, perm) -> HeteroGraph:
    """Relabel nodes so old node i becomes perm[i]; structure is preserved."""
    perm = np.asarray(perm, dtype=np.int64)
    n = g.node_count
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ContractError(f"perm must be a bijection on [0, {n})")

    def reorder(arr):
        out = np.empty_like(arr)
        out[perm] = arr
        return out

    return HeteroGraph(
        num=reorder(g.num),
        bools=reorder(g.bools),
        desc_emb=reorder(g.desc_emb),
        tweet_emb=reorder(g.tweet_emb),
        labels=reorder(g.labels),
        split=reorder(g.split),
        relations=g.relations,
        edges={r: perm[g.edges[r]] for r in g.relations},
    )


def graphs_equal(a: HeteroGraph, b: HeteroGraph) -> bool:
    """Exact structural equality, including edge order within each relation."""
    if a.relations != b.relations or a.node_count != b.node_count:
        return False
    dense = all(
        np.array_equal(getattr(a, f), getattr(b, f))
        for f in ("num", "bools", "desc_emb", "tweet_emb", "labels", "split")
    )
    return dense and all(np.array_equal(a.edges[r], b.edges[r]) for r in a.relations)
