"""Shared fixtures: small trainable graphs and fast configs."""

import numpy as np
import pytest

from evibot.config import RunConfig
from evibot.graph import HeteroGraph


def make_blob_graph(seed=0, n=24, n_bots=10, d=4, shift=2.5,
                    relations=("follower", "friend")):
    """Two feature blobs with intra-class mutual edges; splits round-robin.

    Bots (label 1) occupy the last `n_bots` ids.  Every class member is
    chained to its class neighbor in both directions under alternating
    relations, so structure and features agree.
    """
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=np.int8)
    labels[n - n_bots:] = 1
    means = np.where(labels[:, None] == 1, shift, 0.0)

    edges = {r: [] for r in relations}
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        for a, b in zip(members, np.roll(members, -1)):
            r = relations[(a + b) % len(relations)]
            edges[r].append([a, b])
            edges[r].append([b, a])

    split = np.array([i % 3 for i in range(n)], dtype=np.int8)  # train/valid/test
    return HeteroGraph(
        num=rng.normal(means, 1.0, size=(n, d)),
        bools=(labels[:, None] == 1).astype(np.int8),
        desc_emb=rng.normal(means, 1.0, size=(n, d)),
        tweet_emb=rng.normal(means, 1.0, size=(n, d)),
        labels=labels,
        split=split,
        relations=tuple(relations),
        edges={r: np.asarray(e, dtype=np.int64).reshape(-1, 2) for r, e in edges.items()},
    )


def fast_config(**overrides) -> RunConfig:
    """Desk-speed config for unit tests; acceptance uses the real profiles."""
    base = dict(
        seed=0, profile="small", hidden_size=8, layers=2,
        lambda1=0.8, lambda2=0.7,
        stage1_lr=1e-2, stage1_dropout=0.0, stage1_epochs=30,
        stage2_lr=1e-3, stage2_dropout=0.0, stage2_epochs=20,
        tau=10.0,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture
def blob_graph():
    return make_blob_graph(seed=3)
