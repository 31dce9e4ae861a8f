"""Feature-only logistic-regression baseline.

Concatenates the raw node feature blocks, z-scores every column, and
fits a logistic regression on the train split.  No edges are consumed,
so camouflaged bots that copy human feature statistics are exactly the
nodes this baseline misses; the graph pipeline has to beat it.
"""

from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression

from .errors import DegenerateDataError
from .features import zscore_normalize
from .graph import HeteroGraph
from .metrics import Metrics, evaluate_metrics


def baseline_features(g: HeteroGraph) -> np.ndarray:
    raw = np.concatenate(
        [g.num, g.bools.astype(np.float64), g.desc_emb, g.tweet_emb], axis=1
    )
    return zscore_normalize(raw)


def logistic_baseline(g: HeteroGraph, seed: int = 0) -> Metrics:
    """Train on the train split, score accuracy/F1 on the test split."""
    x = baseline_features(g)
    train = g.split_mask("train") & (g.labels >= 0)
    test = g.split_mask("test") & (g.labels >= 0)
    if np.unique(g.labels[train]).size < 2:
        raise DegenerateDataError("baseline needs both classes in the train split")
    model = LogisticRegression(max_iter=1000, random_state=seed)
    model.fit(x[train], g.labels[train])
    return evaluate_metrics(g.labels[test], model.predict(x[test]))
