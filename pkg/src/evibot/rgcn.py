"""Dual-environment relational graph training.

One original graph is viewed through two independently initialized
relational GCNs ("environments").  A shared objective pushes their
per-node class distributions apart (a bounded symmetric divergence,
negated) while cross-entropy keeps both fitted to the labels; a bot
whose camouflage only survives in one environment ends up classified
differently across the two views, which the downstream uncertainty
stage can exploit.

Layer update for node i:

    x_i' = x_i W_self + sum_r mean_{j in N_r(i)} x_j W_r

with leaky ReLU between layers, a projection head producing the node
representation, and a 2-class linear classifier on top.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from . import checkpoint as ckpt
from .errors import (
    ConfigError,
    ContractError,
    DegenerateDataError,
    ShapeError,
    ValidationError,
)
from .graph import HeteroGraph, relation_operator

LEAKY_SLOPE = 0.01
N_CLASSES = 2


@dataclass
class EnvironmentModel:
    """All learnable parameters of one environment view."""

    env_id: int
    relations: tuple[str, ...]
    self_weights: list[ad.Tensor]             # one (H, H) per layer
    rel_weights: list[dict[str, ad.Tensor]]   # per layer, one (H, H) per relation
    head_w: ad.Tensor                          # (H, H)
    head_b: ad.Tensor                          # (H,)
    cls_w: ad.Tensor                           # (H, 2)
    cls_b: ad.Tensor                           # (2,)

    @property
    def hidden(self) -> int:
        return self.self_weights[0].data.shape[0]

    @property
    def layers(self) -> int:
        return len(self.self_weights)

    def parameters(self) -> list[ad.Tensor]:
        out = []
        for l in range(self.layers):
            out.append(self.self_weights[l])
            out.extend(self.rel_weights[l][r] for r in self.relations)
        out.extend([self.head_w, self.head_b, self.cls_w, self.cls_b])
        return out

    def parameter_count(self) -> dict[str, int]:
        """Sizes by group; the classifier is counted apart from the head."""
        h, nr = self.hidden, len(self.relations)
        return {
            "layers": self.layers * h * h * (1 + nr),
            "head": h * h + h,
            "classifier": h * N_CLASSES + N_CLASSES,
        }

    def named_params(self) -> dict[str, ad.Tensor]:
        out = {}
        for l in range(self.layers):
            out[f"layer{l}.self"] = self.self_weights[l]
            for r in self.relations:
                out[f"layer{l}.rel.{r}"] = self.rel_weights[l][r]
        out.update(head_w=self.head_w, head_b=self.head_b,
                   cls_w=self.cls_w, cls_b=self.cls_b)
        return out


@dataclass(frozen=True)
class ViewOutput:
    """One environment's outputs over all nodes, row-aligned with node ids."""

    representations: ad.Tensor  # (n, H)
    logits: ad.Tensor           # (n, 2)
    distribution: ad.Tensor     # (n, 2), rows sum to 1

    @property
    def node_count(self) -> int:
        return self.logits.data.shape[0]


def init_environment(
    env_id: int, relations: tuple[str, ...], hidden: int, layers: int,
    rng: np.random.Generator,
) -> EnvironmentModel:
    """Uniform(+-1/sqrt(H)) weights; biases start at zero."""
    if layers < 1:
        raise ConfigError(f"need at least one layer, got {layers}")
    bound = 1.0 / np.sqrt(hidden)

    def mat(rows, cols):
        return ad.Tensor(rng.uniform(-bound, bound, size=(rows, cols)))

    return EnvironmentModel(
        env_id=env_id,
        relations=tuple(relations),
        self_weights=[mat(hidden, hidden) for _ in range(layers)],
        rel_weights=[{r: mat(hidden, hidden) for r in relations} for _ in range(layers)],
        head_w=mat(hidden, hidden),
        head_b=ad.Tensor(np.zeros(hidden)),
        cls_w=mat(hidden, N_CLASSES),
        cls_b=ad.Tensor(np.zeros(N_CLASSES)),
    )


def build_operators(g: HeteroGraph) -> dict[str, sp.csr_matrix]:
    return {r: relation_operator(g, r) for r in g.relations}


def rgcn_forward(
    g: HeteroGraph,
    x: ad.Tensor,
    env: EnvironmentModel,
    *,
    operators: dict[str, sp.csr_matrix] | None = None,
    dropout: float = 0.0,
    dropout_rng: np.random.Generator | None = None,
) -> ViewOutput:
    """Run one environment over every node.

    `operators` lets callers reuse the per-relation aggregation matrices
    across epochs.  Dropout (training only) is applied to the node
    representations, never inside the graph layers.
    """
    if tuple(env.relations) != tuple(g.relations):
        raise ContractError(
            f"environment relations {env.relations} do not match graph {g.relations}"
        )
    n, h = x.data.shape if x.data.ndim == 2 else (None, None)
    if n != g.node_count or h != env.hidden:
        raise ShapeError(
            f"features shape {x.data.shape} does not match "
            f"(node_count={g.node_count}, hidden={env.hidden})"
        )
    if dropout > 0.0 and dropout_rng is None:
        raise ContractError("dropout requires an rng")
    ops = build_operators(g) if operators is None else operators

    hcur = x
    for l in range(env.layers):
        if l > 0:
            hcur = ad.leaky_relu(hcur, LEAKY_SLOPE)
        out = ad.matmul(hcur, env.self_weights[l])
        for r in env.relations:
            agg = ad.sparse_matmul(ops[r], hcur)
            out = ad.add(out, ad.matmul(agg, env.rel_weights[l][r]))
        hcur = out

    rep = ad.leaky_relu(ad.linear(hcur, env.head_w, env.head_b), LEAKY_SLOPE)
    if dropout > 0.0:
        rep = ad.dropout(rep, dropout, dropout_rng)
    logits = ad.linear(rep, env.cls_w, env.cls_b)
    return ViewOutput(
        representations=rep, logits=logits, distribution=ad.softmax_rows(logits)
    )


# ---------------------------------------------------------------------------
# losses


def environment_divergence_loss(
    v1: ViewOutput, v2: ViewOutput, tau: float = 10.0, mask: np.ndarray | None = None
) -> ad.Tensor:
    """Negated, clamped symmetric divergence between the two views.

    Per node: min(KL(p1||p2) + KL(p2||p1), tau), averaged over the masked
    nodes and negated, so the value lies in [-tau, 0] and minimizing it
    pushes the views apart.  Clamping the per-node symmetric sum (rather
    than each direction) is what keeps label fitting viable at high
    divergence weight: a node saturates its divergence bonus with both
    views on the correct side, one confident and one mild, which is far
    cheaper in cross-entropy than predicting opposite classes.
    """
    if v1.node_count != v2.node_count:
        raise ContractError(
            f"views cover different node sets: {v1.node_count} vs {v2.node_count}"
        )
    if tau <= 0:
        raise ContractError(f"tau must be positive, got {tau}")
    d12 = ad.kl_div_rows(v1.distribution, v2.distribution)
    d21 = ad.kl_div_rows(v2.distribution, v1.distribution)
    sym = ad.minimum_const(ad.add(d12, d21), tau)
    if mask is None:
        mask = np.ones(v1.node_count, dtype=bool)
    return ad.neg(ad.masked_mean(sym, mask))


def intervention_loss(
    v1: ViewOutput,
    v2: ViewOutput,
    labels_onehot: np.ndarray,
    mask: np.ndarray,
    lambda1: float,
    tau: float = 10.0,
) -> tuple[ad.Tensor, dict[str, float]]:
    """Total stage-1 objective and its logged parts.

    lambda1 * divergence + (1 - lambda1) * (CE view 1 + CE view 2),
    every term averaged over the masked (train) nodes.
    """
    if not 0.0 <= lambda1 <= 1.0:
        raise ConfigError(f"lambda1 must lie in [0, 1], got {lambda1}")
    div = environment_divergence_loss(v1, v2, tau, mask)
    ce1 = ad.masked_mean(ad.cross_entropy_rows(v1.logits, labels_onehot), mask)
    ce2 = ad.masked_mean(ad.cross_entropy_rows(v2.logits, labels_onehot), mask)
    total = ad.add(ad.mul(div, lambda1), ad.mul(ad.add(ce1, ce2), 1.0 - lambda1))
    parts = {
        "divergence": div.item(),
        "ce1": ce1.item(),
        "ce2": ce2.item(),
        "total": total.item(),
    }
    return total, parts


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class StageOneResult:
    env1: EnvironmentModel
    env2: EnvironmentModel
    view1: ViewOutput
    view2: ViewOutput
    trace: list[dict[str, float]]


def onehot_labels(labels: np.ndarray) -> np.ndarray:
    """(n, 2) one-hot rows; unknown labels get all-zero rows (masked out)."""
    out = np.zeros((labels.shape[0], N_CLASSES))
    known = labels >= 0
    out[np.arange(labels.shape[0])[known], labels[known].astype(int)] = 1.0
    return out


def _check_train_split(g: HeteroGraph) -> np.ndarray:
    mask = g.split_mask("train") & g.labeled_mask()
    if not mask.any():
        raise DegenerateDataError("train split has no labeled nodes")
    classes = np.unique(g.labels[mask])
    if classes.size < 2:
        raise DegenerateDataError(
            f"train split contains a single class ({classes[0]}); cannot fit"
        )
    return mask


def train_environments(
    g: HeteroGraph,
    x: ad.Tensor,
    config,
    *,
    env_seed_seqs: tuple[np.random.SeedSequence, np.random.SeedSequence] | None = None,
) -> StageOneResult:
    """Jointly optimize both environments on the intervention objective.

    Environments get distinct initialization and dropout streams derived
    from the run seed (overridable for symmetry experiments).  Returned
    views are recomputed without dropout after the final epoch.
    """
    mask = _check_train_split(g)
    onehot = onehot_labels(g.labels)
    ops = build_operators(g)

    if env_seed_seqs is None:
        env_seed_seqs = (
            np.random.SeedSequence(entropy=config.seed, spawn_key=(1,)),
            np.random.SeedSequence(entropy=config.seed, spawn_key=(2,)),
        )
    envs, drop_rngs = [], []
    for env_id, seq in zip((1, 2), env_seed_seqs):
        init_seq, drop_seq = seq.spawn(2)
        rng = np.random.Generator(np.random.PCG64(init_seq))
        envs.append(init_environment(env_id, g.relations, config.hidden_size,
                                     config.layers, rng))
        drop_rngs.append(np.random.Generator(np.random.PCG64(drop_seq)))
    env1, env2 = envs

    opt = ad.Adam(env1.parameters() + env2.parameters(), lr=config.stage1_lr)
    trace: list[dict[str, float]] = []
    for epoch in range(config.stage1_epochs):
        v1 = rgcn_forward(g, x, env1, operators=ops,
                          dropout=config.stage1_dropout, dropout_rng=drop_rngs[0])
        v2 = rgcn_forward(g, x, env2, operators=ops,
                          dropout=config.stage1_dropout, dropout_rng=drop_rngs[1])
        loss, parts = intervention_loss(v1, v2, onehot, mask,
                                        config.lambda1, config.tau)
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
        trace.append({"epoch": epoch, **parts})

    view1 = rgcn_forward(g, x, env1, operators=ops)
    view2 = rgcn_forward(g, x, env2, operators=ops)
    return StageOneResult(env1=env1, env2=env2, view1=view1, view2=view2, trace=trace)


# ---------------------------------------------------------------------------
# checkpoints


def save_environment(env: EnvironmentModel, path) -> None:
    meta = {
        "env_id": env.env_id,
        "relations": list(env.relations),
        "hidden": env.hidden,
        "layers": env.layers,
    }
    ckpt.save_checkpoint(path, "environment", meta, env.named_params())


def load_environment(path) -> EnvironmentModel:
    meta, params = ckpt.load_checkpoint(path, "environment")
    relations = tuple(meta["relations"])
    layers, hidden = int(meta["layers"]), int(meta["hidden"])
    try:
        env = EnvironmentModel(
            env_id=int(meta["env_id"]),
            relations=relations,
            self_weights=[params[f"layer{l}.self"] for l in range(layers)],
            rel_weights=[
                {r: params[f"layer{l}.rel.{r}"] for r in relations} for l in range(layers)
            ],
            head_w=params["head_w"],
            head_b=params["head_b"],
            cls_w=params["cls_w"],
            cls_b=params["cls_b"],
        )
    except KeyError as e:
        raise ValidationError(f"checkpoint {path} is missing parameter {e}") from e
    for t in env.parameters():
        if t.data.shape[0] != hidden and t.data.ndim == 2:
            raise ValidationError(f"checkpoint {path}: parameter shape mismatch")
    return env
