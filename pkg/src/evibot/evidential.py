"""Dirichlet-evidential uncertainty over node representations.

Each view's representation feeds a small linear head whose outputs,
passed through softplus and shifted by one, become Dirichlet parameters
alpha >= 1.  Total evidence S = sum(alpha) yields an uncertainty score
U = 2/S in (0, 1]: zero evidence means U = 1, and the expected class
probabilities are p_hat = alpha/S.  Training maximizes the marginal
likelihood of the labels under the Dirichlet (closed form
log S - log alpha_true) plus an accuracy-weighted penalty that leans on
confident mistakes; fusion keeps, per node, the prediction of whichever
view is less uncertain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from .errors import (
    ConfigError,
    ContractError,
    DegenerateDataError,
    DomainError,
    ShapeError,
)

N_CLASSES = 2


@dataclass
class EvidenceHead:
    """Linear map from representations to evidence logits, one per view."""

    weight: ad.Tensor  # (H, 2)
    bias: ad.Tensor    # (2,)
    view_id: int

    def parameters(self) -> list[ad.Tensor]:
        return [self.weight, self.bias]


def init_evidence_head(hidden: int, view_id: int) -> EvidenceHead:
    """Zero initialization: alpha starts uniform and the tiny stage-2
    learning rate then owns the entire learned direction."""
    return EvidenceHead(
        weight=ad.Tensor(np.zeros((hidden, N_CLASSES))),
        bias=ad.Tensor(np.zeros(N_CLASSES)),
        view_id=view_id,
    )


@dataclass(frozen=True)
class DirichletOutput:
    """Per-node Dirichlet parameters and the quantities derived from them.

    `alpha` stays on the tape for training; the derived arrays are plain
    numpy snapshots of the current values.
    """

    alpha: ad.Tensor  # (n, 2), entries >= 1

    @property
    def evidence(self) -> np.ndarray:
        return self.alpha.data - 1.0

    @property
    def strength(self) -> np.ndarray:
        return self.alpha.data.sum(axis=1)

    @property
    def uncertainty(self) -> np.ndarray:
        return 2.0 / self.strength

    @property
    def p_hat(self) -> np.ndarray:
        return self.alpha.data / self.strength[:, None]

    @property
    def predictions(self) -> np.ndarray:
        return self.alpha.data.argmax(axis=1)

    @property
    def node_count(self) -> int:
        return self.alpha.data.shape[0]


def evidence_forward(r, head: EvidenceHead) -> DirichletOutput:
    """alpha = softplus(r W + b) + 1, entrywise >= 1 by construction."""
    r = r if isinstance(r, ad.Tensor) else ad.constant(np.asarray(r, dtype=np.float64))
    bad = ~np.isfinite(r.data)
    if bad.any():
        node = int(np.argwhere(bad)[0][0])
        raise ContractError(f"non-finite representation at node {node}")
    if r.data.ndim != 2 or r.data.shape[1] != head.weight.data.shape[0]:
        raise ShapeError(
            f"representations {r.data.shape} do not match head fan-in "
            f"{head.weight.data.shape[0]}"
        )
    logits = ad.linear(r, head.weight, head.bias)
    alpha = ad.add(ad.softplus(logits), 1.0)
    return DirichletOutput(alpha=alpha)


def dirichlet_log_density(p, alpha) -> float:
    """Log density of a 2-class Dirichlet at simplex point p.

    Boundary points are allowed only where the matching alpha_k >= 1
    (the density is unbounded there otherwise); alpha_k = 1 contributes
    nothing at the boundary and alpha_k > 1 sends the density to zero.
    """
    p = np.asarray(p, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if p.shape != (N_CLASSES,) or alpha.shape != (N_CLASSES,):
        raise ShapeError(f"expected two-class inputs, got p{p.shape}, alpha{alpha.shape}")
    if np.any(alpha <= 0.0):
        raise ContractError(f"alpha must be positive, got {alpha}")
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError(f"p must lie on the 1-simplex, got {p}")
    log_beta = math.lgamma(alpha[0]) + math.lgamma(alpha[1]) - math.lgamma(alpha.sum())
    total = -log_beta
    for k in range(N_CLASSES):
        if p[k] == 0.0:
            if alpha[k] < 1.0:
                raise DomainError(
                    f"density unbounded: p[{k}] = 0 with alpha[{k}] = {alpha[k]} < 1"
                )
            if alpha[k] > 1.0:
                return -math.inf
        else:
            total += (alpha[k] - 1.0) * math.log(p[k])
    return total


def uncertainty_loss(
    out: DirichletOutput,
    labels_onehot: np.ndarray,
    lambda2: float,
    mask: np.ndarray | None = None,
) -> ad.Tensor:
    """Mean over masked nodes of the two-part evidential loss.

    Part one is the marginal-likelihood term sum_j y_ij (log S_i -
    log alpha_ij); part two squares the shortfall of the predicted
    probability on the true class and weights it by (1 - U_i), so
    confidently wrong nodes pay the most.
    """
    if not 0.0 <= lambda2 <= 1.0:
        raise ConfigError(f"lambda2 must lie in [0, 1], got {lambda2}")
    labels_onehot = np.asarray(labels_onehot, dtype=np.float64)
    if labels_onehot.shape != out.alpha.data.shape:
        raise ShapeError(
            f"labels shape {labels_onehot.shape} does not match alpha "
            f"{out.alpha.data.shape}"
        )
    y = ad.constant(labels_onehot)
    alpha = out.alpha
    s_col = ad.tensor_sum(alpha, axis=1, keepdims=True)          # (n, 1)
    term1 = ad.tensor_sum(
        ad.mul(y, ad.sub(ad.log(s_col), ad.log(alpha))), axis=1
    )                                                            # (n,)
    p_hat = ad.div(alpha, s_col)
    shortfall = ad.tensor_sum(ad.mul(y, ad.mul(ad.sub(y, p_hat), ad.sub(y, p_hat))), axis=1)
    one_minus_u = ad.sub(1.0, ad.div(2.0, ad.tensor_sum(alpha, axis=1)))
    term2 = ad.mul(shortfall, one_minus_u)                        # (n,)
    per_node = ad.add(ad.mul(term1, lambda2), ad.mul(term2, 1.0 - lambda2))
    if mask is None:
        mask = np.ones(out.node_count, dtype=bool)
    return ad.masked_mean(per_node, mask)


@dataclass(frozen=True)
class FusedPrediction:
    """Per-node fused labels with the chosen view and its uncertainty."""

    labels: np.ndarray        # (n,) argmax of the chosen view
    uncertainty: np.ndarray   # (n,) uncertainty of the chosen view
    chosen_view: np.ndarray   # (n,) 1 or 2


def fuse_predictions(view1: DirichletOutput, view2: DirichletOutput) -> FusedPrediction:
    """Keep view 1's label only where it is strictly more certain.

    Ties go to view 2, so the selected uncertainty is always <= the
    other view's.
    """
    if view1.node_count != view2.node_count:
        raise ContractError(
            f"views cover different node sets: {view1.node_count} vs {view2.node_count}"
        )
    take1 = view1.uncertainty < view2.uncertainty
    labels = np.where(take1, view1.predictions, view2.predictions)
    uncertainty = np.where(take1, view1.uncertainty, view2.uncertainty)
    return FusedPrediction(
        labels=labels.astype(np.int64),
        uncertainty=uncertainty,
        chosen_view=np.where(take1, 1, 2).astype(np.int64),
    )


@dataclass(frozen=True)
class StageTwoResult:
    head1: EvidenceHead
    head2: EvidenceHead
    out1: DirichletOutput
    out2: DirichletOutput
    trace: list[dict[str, float]]


def train_uncertainty(
    r1: np.ndarray,
    r2: np.ndarray,
    labels: np.ndarray,
    train_mask: np.ndarray,
    config,
) -> StageTwoResult:
    """Fit one evidence head per frozen view on the uncertainty loss.

    The heads are independent; they are stepped in lockstep only so a
    single trace carries both loss curves.
    """
    mask = np.asarray(train_mask, dtype=bool) & (labels >= 0)
    if not mask.any():
        raise DegenerateDataError("train split has no labeled nodes")
    if np.unique(labels[mask]).size < 2:
        raise DegenerateDataError("train split contains a single class; cannot fit")

    onehot = np.zeros((labels.shape[0], N_CLASSES))
    onehot[np.arange(labels.shape[0])[mask], labels[mask].astype(int)] = 1.0

    reps = [ad.constant(np.asarray(r, dtype=np.float64)) for r in (r1, r2)]
    heads = [init_evidence_head(reps[i].data.shape[1], i + 1) for i in range(2)]
    opts = [ad.Adam(h.parameters(), lr=config.stage2_lr) for h in heads]

    trace: list[dict[str, float]] = []
    for epoch in range(config.stage2_epochs):
        row: dict[str, float] = {"epoch": epoch}
        for i, (head, opt) in enumerate(zip(heads, opts)):
            out = evidence_forward(reps[i], head)
            loss = uncertainty_loss(out, onehot, config.lambda2, mask)
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            row[f"loss{i + 1}"] = loss.item()
        trace.append(row)

    out1 = evidence_forward(reps[0], heads[0])
    out2 = evidence_forward(reps[1], heads[1])
    return StageTwoResult(head1=heads[0], head2=heads[1], out1=out1, out2=out2, trace=trace)


def save_head(head: EvidenceHead, path) -> None:
    ckpt.save_checkpoint(
        path, "head", {"view_id": head.view_id},
        {"weight": head.weight, "bias": head.bias},
    )


def load_head(path) -> EvidenceHead:
    meta, params = ckpt.load_checkpoint(path, "head")
    return EvidenceHead(
        weight=params["weight"], bias=params["bias"], view_id=int(meta["view_id"])
    )
