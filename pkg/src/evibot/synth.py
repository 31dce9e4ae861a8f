"""Seeded generator for camouflaged social-bot graphs.

Humans and bots get Gaussian feature blocks around per-class means and
mutual ties inside their own class.  A camouflaged bot additionally
copies human-statistics features and forges mutual ties to humans, so
feature-only classifiers lose it while its in-neighborhood still leans
bot.  Identical spec and seed produce byte-identical output files.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .config import read_kv_file
from .errors import ConfigError, DegenerateDataError
from .graph import SPLITS, HeteroGraph, save_graph

# class-conditional probability that a boolean flag is set
BOOL_PROB_HUMAN = 0.1
BOOL_PROB_BOT = 0.6
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class SyntheticSpec:
    node_count: int = 1000
    bot_fraction: float = 0.3
    human_mean: float = 0.0
    bot_mean: float = 2.0
    human_spread: float = 1.0
    bot_spread: float = 1.0
    num_dim: int = 5
    desc_dim: int = 8
    tweet_dim: int = 8
    bool_count: int = 2
    intra_edge_prob: float = 0.01
    cross_edge_prob: float = 0.001
    camouflage_rate: float = 0.3
    camouflage_ties: int = 6
    relations: tuple = ("follower", "friend")

    def __post_init__(self):
        if self.node_count < 10:
            raise ConfigError(f"node_count must be >= 10, got {self.node_count}")
        for name in ("bot_fraction", "intra_edge_prob", "cross_edge_prob",
                     "camouflage_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.bot_fraction in (0.0, 1.0):
            raise DegenerateDataError(
                f"bot_fraction {self.bot_fraction} yields a single class"
            )
        for name in ("human_spread", "bot_spread"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("num_dim", "desc_dim", "tweet_dim", "bool_count",
                     "camouflage_ties"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.relations or len(set(self.relations)) != len(self.relations):
            raise ConfigError(f"relations must be nonempty and unique, got {self.relations}")
        object.__setattr__(self, "relations", tuple(self.relations))


@dataclass(frozen=True)
class SynthInfo:
    """Generation bookkeeping that the graph itself does not carry."""

    camouflaged_ids: np.ndarray  # sorted node ids of feature-copying bots


def _stratified_split(rng, members: np.ndarray) -> np.ndarray:
    """Assign one class's members to train/valid/test, each split nonempty."""
    if members.size < len(SPLITS):
        raise DegenerateDataError(
            f"class with {members.size} members cannot cover all {len(SPLITS)} splits"
        )
    want = np.asarray(SPLIT_FRACTIONS) * members.size
    counts = np.maximum(np.floor(want).astype(np.int64), 1)
    while counts.sum() < members.size:  # hand spares to the most underfull
        counts[np.argmax(want - counts)] += 1
    while counts.sum() > members.size:  # reclaim from the most overfull, keep >= 1
        counts[int(np.argmin(np.where(counts > 1, want - counts, np.inf)))] -= 1
    assignment = np.repeat(np.arange(len(SPLITS), dtype=np.int8), counts)
    return assignment[rng.permutation(members.size)]


def _mutual_intra_edges(rng, members: np.ndarray, prob: float) -> np.ndarray:
    """Sample undirected pairs inside one class; emit both directions."""
    m = members.size
    if m < 2 or prob == 0.0:
        return np.empty((0, 2), dtype=np.int64)
    iu, ju = np.triu_indices(m, k=1)
    hit = rng.random(iu.size) < prob
    a, b = members[iu[hit]], members[ju[hit]]
    return np.concatenate(
        [np.stack([a, b], axis=1), np.stack([b, a], axis=1)], axis=0
    )


def _background_cross_edges(rng, humans, bots, prob: float) -> np.ndarray:
    """One-way noise edges between classes, both orientations sampled."""
    if prob == 0.0:
        return np.empty((0, 2), dtype=np.int64)
    out = []
    for src_pool, dst_pool in ((humans, bots), (bots, humans)):
        hit = rng.random((src_pool.size, dst_pool.size)) < prob
        si, di = np.nonzero(hit)
        out.append(np.stack([src_pool[si], dst_pool[di]], axis=1))
    return np.concatenate(out, axis=0)


def synthesize(spec: SyntheticSpec, seed: int) -> tuple[HeteroGraph, SynthInfo]:
    """Build the graph in memory; `generate_synthetic` writes it to disk."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = spec.node_count
    n_bots = int(round(n * spec.bot_fraction))
    if n_bots < 1 or n_bots > n - 1:
        raise DegenerateDataError(
            f"bot_fraction {spec.bot_fraction} of {n} nodes leaves a single class"
        )
    labels = np.zeros(n, dtype=np.int8)
    labels[n - n_bots:] = 1
    humans = np.flatnonzero(labels == 0)
    bots = np.flatnonzero(labels == 1)

    camouflaged = bots[rng.random(n_bots) < spec.camouflage_rate]

    def feature_block(dim: int) -> np.ndarray:
        block = np.where(
            labels[:, None] == 1,
            rng.normal(spec.bot_mean, spec.bot_spread, size=(n, dim)),
            rng.normal(spec.human_mean, spec.human_spread, size=(n, dim)),
        )
        block[camouflaged] = rng.normal(
            spec.human_mean, spec.human_spread, size=(camouflaged.size, dim)
        )
        return block

    num = feature_block(spec.num_dim)
    desc_emb = feature_block(spec.desc_dim)
    tweet_emb = feature_block(spec.tweet_dim)

    bool_p = np.where(labels == 1, BOOL_PROB_BOT, BOOL_PROB_HUMAN)
    bool_p[camouflaged] = BOOL_PROB_HUMAN
    bools = (rng.random((n, spec.bool_count)) < bool_p[:, None]).astype(np.int8)

    edges: dict[str, list[np.ndarray]] = {r: [] for r in spec.relations}
    for rel in spec.relations:
        for members in (humans, bots):
            edges[rel].append(_mutual_intra_edges(rng, members, spec.intra_edge_prob))
        edges[rel].append(
            _background_cross_edges(rng, humans, bots, spec.cross_edge_prob)
        )

    # forged mutual ties from camouflaged bots into the human crowd
    for bot in camouflaged:
        ties = rng.choice(humans, size=min(spec.camouflage_ties, humans.size),
                          replace=False)
        rels = rng.integers(0, len(spec.relations), size=ties.size)
        for human, ri in zip(ties, rels):
            pair = np.array([[bot, human], [human, bot]], dtype=np.int64)
            edges[spec.relations[ri]].append(pair)

    merged = {}
    for rel, chunks in edges.items():
        stacked = np.concatenate(chunks, axis=0) if chunks else np.empty((0, 2), np.int64)
        merged[rel] = np.unique(stacked.astype(np.int64), axis=0)

    split = np.empty(n, dtype=np.int8)
    split[humans] = _stratified_split(rng, humans)
    split[bots] = _stratified_split(rng, bots)

    graph = HeteroGraph(
        num=num, bools=bools, desc_emb=desc_emb, tweet_emb=tweet_emb,
        labels=labels, split=split, relations=tuple(spec.relations), edges=merged,
    )
    return graph, SynthInfo(camouflaged_ids=np.sort(camouflaged))


def generate_synthetic(spec: SyntheticSpec, seed: int, nodes_path, edges_path) -> HeteroGraph:
    graph, _ = synthesize(spec, seed)
    save_graph(graph, nodes_path, edges_path)
    return graph


_SPEC_FIELDS = {f.name: f.type for f in fields(SyntheticSpec)}
_SPEC_INT_KEYS = {"node_count", "num_dim", "desc_dim", "tweet_dim", "bool_count",
                  "camouflage_ties"}


def parse_spec_file(path) -> SyntheticSpec:
    """Flat `key = value` spec file; `relations` is comma-separated."""
    raw = read_kv_file(path, _SPEC_FIELDS)
    kwargs: dict = {}
    for key, value in raw.items():
        try:
            if key == "relations":
                kwargs[key] = tuple(s.strip() for s in value.split(",") if s.strip())
            elif key in _SPEC_INT_KEYS:
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        except ValueError as e:
            raise ConfigError(f"{path}: bad value for '{key}': {value!r}") from e
    return SyntheticSpec(**kwargs)
