"""Four-block user feature assembly.

Each user contributes raw blocks from four sources: a description
embedding, a tweet-text representation, numerical metadata, and boolean
metadata.  Numericals are z-scored per column, booleans one-hot encoded,
and every block is passed through its own fixed seeded linear projection
(plus leaky ReLU) down to H/4 dimensions, so the concatenated vector has
the model width H regardless of raw dimensionalities.

The projections are initialized once from the run seed and never
trained; the graph layers downstream carry all learnable capacity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ValidationError
from .graph import HeteroGraph

BLOCK_ORDER = ("des", "concat", "num", "bl")

_LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class FeatureBlocks:
    """Projected per-user blocks and their concatenation (n x H)."""

    v_des: np.ndarray
    v_concat: np.ndarray
    v_num: np.ndarray
    v_bl: np.ndarray
    assembled: np.ndarray

    def block(self, name: str) -> np.ndarray:
        if name not in BLOCK_ORDER:
            raise ContractError(f"unknown block '{name}'; expected one of {BLOCK_ORDER}")
        return getattr(self, {"des": "v_des", "concat": "v_concat",
                              "num": "v_num", "bl": "v_bl"}[name])


@dataclass(frozen=True)
class ProjectionParams:
    """One fixed (weight, bias) pair per raw block, keyed by block name."""

    weights: dict[str, np.ndarray]
    biases: dict[str, np.ndarray]


def zscore_normalize(column, eps: float = 1e-8) -> np.ndarray:
    """Standardize one column: (x - mean) / (std + eps), population std."""
    column = np.asarray(column, dtype=np.float64)
    if column.size == 0:
        raise ContractError("zscore_normalize: empty column")
    if eps <= 0:
        raise ContractError(f"zscore_normalize: eps must be positive, got {eps}")
    return (column - column.mean()) / (column.std() + eps)


def encode_booleans(flags) -> np.ndarray:
    """Expand each 0/1 flag into a 2-entry one-hot; k flags become 2k values.

    Accepts a single user's vector or an (n, k) matrix.
    """
    arr = np.asarray(flags)
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"encode_booleans: entries must be 0 or 1, got {arr!r}")
    single = arr.ndim == 1
    mat = arr.reshape(1, -1) if single else arr
    n, k = mat.shape
    out = np.zeros((n, 2 * k), dtype=np.float64)
    cols = np.arange(k)
    out[np.arange(n)[:, None], 2 * cols + mat] = 1.0
    return out[0] if single else out


def init_projections(raw_dims: dict[str, int], hidden: int, seed: int) -> ProjectionParams:
    """Seeded uniform(+-1/sqrt(fan_in)) weights mapping each block to H/4 dims."""
    if hidden % 4 != 0:
        raise ContractError(f"hidden size must be divisible by 4, got {hidden}")
    missing = set(BLOCK_ORDER) - set(raw_dims)
    if missing:
        raise ContractError(f"init_projections: missing raw dims for {sorted(missing)}")
    out_dim = hidden // 4
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    weights, biases = {}, {}
    for name in BLOCK_ORDER:
        fan_in = raw_dims[name]
        if fan_in <= 0:
            raise ContractError(f"init_projections: block '{name}' has dimension {fan_in}")
        bound = 1.0 / np.sqrt(fan_in)
        weights[name] = rng.uniform(-bound, bound, size=(fan_in, out_dim))
        biases[name] = np.zeros(out_dim)
    return ProjectionParams(weights=weights, biases=biases)


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, _LEAKY_SLOPE * x)


def assemble_features(
    raw: dict[str, np.ndarray], params: ProjectionParams, hidden: int
) -> tuple[ad.Tensor, FeatureBlocks]:
    """Project the four raw blocks and concatenate them in the fixed order.

    `raw` maps block names (des, concat, num, bl) to (n, d_block) arrays.
    Non-finite entries are treated as missing data and rejected with the
    offending node id and block name.
    """
    missing = set(BLOCK_ORDER) - set(raw)
    if missing:
        raise ValidationError(f"assemble_features: missing blocks {sorted(missing)}")
    if hidden % 4 != 0:
        raise ContractError(f"hidden size must be divisible by 4, got {hidden}")
    n_rows = {np.asarray(raw[b]).shape[0] for b in BLOCK_ORDER}
    if len(n_rows) != 1:
        raise ValidationError(f"assemble_features: block row counts differ: {n_rows}")

    projected = {}
    for name in BLOCK_ORDER:
        block = np.asarray(raw[name], dtype=np.float64)
        bad = ~np.isfinite(block)
        if bad.any():
            node = int(np.argwhere(bad)[0][0])
            raise ValidationError(
                f"assemble_features: node {node} block '{name}' has a non-finite entry"
            )
        w, b = params.weights[name], params.biases[name]
        if block.shape[1] != w.shape[0]:
            raise ContractError(
                f"assemble_features: block '{name}' width {block.shape[1]} "
                f"does not match projection fan-in {w.shape[0]}"
            )
        projected[name] = _leaky(block @ w + b)

    assembled = np.concatenate([projected[b] for b in BLOCK_ORDER], axis=1)
    blocks = FeatureBlocks(
        v_des=projected["des"],
        v_concat=projected["concat"],
        v_num=projected["num"],
        v_bl=projected["bl"],
        assembled=assembled,
    )
    return ad.constant(assembled), blocks


def ingest_embeddings(nodes_path) -> tuple[np.ndarray, np.ndarray]:
    """Load per-user desc_emb and tweet_emb vectors verbatim from a nodes file."""
    des_rows, tweet_rows, ids = [], [], []
    with open(nodes_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"nodes line {lineno}: invalid JSON") from e
            nid = rec.get("id", lineno - 1)
            for key, rows in (("desc_emb", des_rows), ("tweet_emb", tweet_rows)):
                if key not in rec or rec[key] is None:
                    raise ValidationError(f"node {nid}: missing '{key}'")
                rows.append(rec[key])
            ids.append(nid)
    for key, rows in (("desc_emb", des_rows), ("tweet_emb", tweet_rows)):
        dims = {len(r) for r in rows}
        if len(dims) > 1:
            off = ids[[len(r) for r in rows].index(max(dims))]
            raise ValidationError(f"node {off}: '{key}' dimension differs from other nodes")
    return (
        np.asarray(des_rows, dtype=np.float64),
        np.asarray(tweet_rows, dtype=np.float64),
    )


def graph_raw_blocks(g: HeteroGraph, *, zero_tweets: bool = False) -> dict[str, np.ndarray]:
    """Raw feature blocks for a loaded graph, ready for assemble_features.

    Numerical columns are z-scored, booleans one-hot expanded, embeddings
    passed through.  `zero_tweets` blanks the tweet block (the ablation
    that removes extracted tweet knowledge from the model).
    """
    num = np.column_stack([zscore_normalize(g.num[:, j]) for j in range(g.num.shape[1])])
    tweet = np.zeros_like(g.tweet_emb) if zero_tweets else g.tweet_emb
    return {
        "des": g.desc_emb,
        "concat": tweet,
        "num": num,
        "bl": encode_booleans(g.bools),
    }


def encode_graph(
    g: HeteroGraph, hidden: int, seed: int, *, zero_tweets: bool = False
) -> tuple[ad.Tensor, FeatureBlocks, ProjectionParams]:
    """One-call path from graph to the n x H model input."""
    raw = graph_raw_blocks(g, zero_tweets=zero_tweets)
    params = init_projections(
        {name: raw[name].shape[1] for name in BLOCK_ORDER}, hidden, seed
    )
    x, blocks = assemble_features(raw, params, hidden)
    return x, blocks, params
