"""Acceptance gate: nine shipping criteria, one printed verdict line each.

Criteria 6, 7 and 8 share a module-scoped benchmark fixture: five seeded
synthetic graphs (1,000 nodes, 30% bots, camouflage rate 0.3) run under
the default small profile, full pipeline plus the three single-toggle
ablations, with a feature-only logistic regression as the baseline.
"""

import json
import math
import time

import numpy as np
import pytest
import scipy.sparse as sp

import evibot.autodiff as ad
from evibot import evidential, rgcn
from evibot.baseline import logistic_baseline
from evibot.config import from_profile
from evibot.evidential import (
    DirichletOutput,
    EvidenceHead,
    evidence_forward,
    fuse_predictions,
    uncertainty_loss,
)
from evibot.features import encode_graph
from evibot.graph import load_graph, permute_graph
from evibot.pipeline import ablation_run, run_pipeline
from evibot.synth import SyntheticSpec, generate_synthetic

from conftest import make_blob_graph
from test_autodiff import FD_CASES, _interior
from test_evidential import quad_neg_log_marginal
from test_rgcn import naive_forward, random_structured_graph

BENCH_SEEDS = (1, 2, 3, 4, 5)
SECONDS_PER_SEED = 300.0


def verdict(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {n} failed: {detail}"


# ---------------------------------------------------- criterion 1: gradients

_Q = np.array([[0.2, 0.5, 0.2, 0.1], [0.4, 0.1, 0.1, 0.4]])
_ONEHOT = np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
_SPARSE = sp.csr_matrix(np.array([[0.5, 0.0], [0.25, 0.25], [0.0, 1.0]]))

EXTRA_OP_CASES = [
    ("kl_div_rows_p", lambda x: ad.tensor_sum(
        ad.kl_div_rows(ad.softmax_rows(x), ad.constant(_Q)))),
    ("kl_div_rows_q", lambda x: ad.tensor_sum(
        ad.kl_div_rows(ad.constant(_Q), ad.softmax_rows(x)))),
    ("cross_entropy_rows", lambda x: ad.tensor_sum(
        ad.cross_entropy_rows(x, _ONEHOT))),
    ("linear", lambda x: ad.tensor_sum(ad.linear(
        x, ad.constant(np.linspace(-0.5, 0.5, 12).reshape(4, 3)),
        ad.constant(np.array([0.1, -0.2, 0.3]))))),
    ("sparse_matmul", lambda x: ad.tensor_sum(ad.sparse_matmul(_SPARSE, x))),
    ("concat_cols", lambda x: ad.tensor_sum(ad.mul(
        ad.concat_cols([x, ad.constant(np.ones((2, 2)))]),
        ad.constant(np.arange(12.0).reshape(2, 6))))),
    ("masked_mean", lambda x: ad.masked_mean(
        ad.tensor_sum(ad.mul(x, x), axis=1), np.array([True, False]))),
]


def _clone_env_with(env, index: int, tensor: ad.Tensor):
    """Rebuild an environment with parameter `index` replaced by `tensor`."""
    flat = env.parameters()
    swapped = [tensor if i == index else ad.constant(p.data) for i, p in enumerate(flat)]
    it = iter(swapped)
    self_w, rel_w = [], []
    for _ in range(env.layers):
        self_w.append(next(it))
        rel_w.append({r: next(it) for r in env.relations})
    return rgcn.EnvironmentModel(
        env_id=env.env_id, relations=env.relations,
        self_weights=self_w, rel_weights=rel_w,
        head_w=next(it), head_b=next(it), cls_w=next(it), cls_b=next(it),
    )


def test_criterion_1_gradient_suite(capsys):
    t0 = time.monotonic()
    rng = np.random.default_rng(101)
    worst = 0.0
    for name, fn in FD_CASES + EXTRA_OP_CASES:
        for _ in range(10):
            err = ad.finite_diff_check(fn, _interior(rng, (2, 4)))
            worst = max(worst, err)

    # full stage-1 objective, gradient wrt a different parameter per point
    g = make_blob_graph(seed=5, n=12, n_bots=5)
    hidden = 8
    x, _, _ = encode_graph(g, hidden, seed=3)
    onehot = rgcn.onehot_labels(g.labels.astype(np.int64))
    mask = g.split_mask("train") & (g.labels >= 0)
    ops = rgcn.build_operators(g)
    for point in range(10):
        envs = [rgcn.init_environment(i + 1, g.relations, hidden, 2,
                                      rng=np.random.default_rng(1000 * point + i))
                for i in range(2)]
        which = point % 2
        idx = point % len(envs[which].parameters())
        target = envs[which].parameters()[idx]

        def stage1_loss(w):
            swapped = [_clone_env_with(e, idx, w) if i == which else e
                       for i, e in enumerate(envs)]
            views = [rgcn.rgcn_forward(g, x, e, operators=ops) for e in swapped]
            total, _ = rgcn.intervention_loss(views[0], views[1], onehot, mask,
                                              lambda1=0.8, tau=10.0)
            return total

        # h one decade above default: the composed loss is hundreds of times
        # larger than single-op outputs, so subtraction noise dominates at 1e-5
        worst = max(worst, ad.finite_diff_check(stage1_loss, target.data, h=1e-4))

    # full stage-2 objective, alternating weight and bias checks
    reps = rng.normal(0.0, 1.5, size=(9, 6))
    labels2 = np.array([0, 1] * 4 + [0])
    onehot2 = np.eye(2)[labels2]
    for point in range(10):
        w0 = rng.normal(0.0, 0.4, size=(6, 2))
        b0 = rng.normal(0.0, 0.4, size=2)

        def stage2_loss(t, use_weight=point % 2 == 0, w0=w0, b0=b0):
            head = EvidenceHead(
                weight=t if use_weight else ad.constant(w0),
                bias=ad.constant(b0) if use_weight else t, view_id=1)
            return uncertainty_loss(evidence_forward(ad.constant(reps), head),
                                    onehot2, lambda2=0.7)

        worst = max(worst, ad.finite_diff_check(stage2_loss,
                                                w0 if point % 2 == 0 else b0))

    elapsed = time.monotonic() - t0
    ok = worst <= 1e-4 and elapsed < 60.0
    verdict(capsys, 1, ok,
            f"max rel err {worst:.2e} over ops + stage-1 + stage-2 losses, "
            f"{elapsed:.1f}s")


# -------------------------------------------- criterion 2: head identities

def test_criterion_2_evidential_identities(capsys):
    rng = np.random.default_rng(202)
    rows = 0
    alpha_ok = us_worst = psum_worst = 0.0
    alpha_min = math.inf
    for _ in range(20):
        hidden = int(rng.integers(3, 12))
        head = EvidenceHead(
            weight=ad.Tensor(rng.normal(0.0, 2.0, size=(hidden, 2))),
            bias=ad.Tensor(rng.normal(0.0, 2.0, size=2)), view_id=1)
        scale = 10.0 ** rng.uniform(-3, 3)
        out = evidence_forward(rng.normal(0.0, scale, size=(500, hidden)), head)
        rows += 500
        alpha_min = min(alpha_min, float(out.alpha.data.min()))
        us_worst = max(us_worst, float(np.abs(out.uncertainty * out.strength - 2.0).max()))
        psum_worst = max(psum_worst, float(np.abs(out.p_hat.sum(axis=1) - 1.0).max()))
    ok = rows == 10_000 and alpha_min >= 1.0 and us_worst <= 1e-12 and psum_worst <= 1e-12
    verdict(capsys, 2, ok,
            f"{rows} outputs: min alpha {alpha_min:.3f}, |U*S-2| <= {us_worst:.1e}, "
            f"|sum p - 1| <= {psum_worst:.1e}")


# -------------------------------------------- criterion 3: closed-form loss

def test_criterion_3_closed_form_loss(capsys):
    out = DirichletOutput(alpha=ad.constant(np.array([[2.0, 1.0]])))
    got = uncertainty_loss(out, np.array([[1.0, 0.0]]), lambda2=1.0).item()
    frozen_err = abs(got - (math.log(3.0) - math.log(2.0)))

    rng = np.random.default_rng(303)
    quad_worst = 0.0
    for _ in range(10):
        alpha = rng.uniform(1.0, 8.0, size=2)
        true_class = int(rng.integers(0, 2))
        loss = uncertainty_loss(
            DirichletOutput(alpha=ad.constant(alpha[None, :])),
            np.eye(2)[[true_class]], lambda2=1.0).item()
        quad_worst = max(quad_worst, abs(loss - quad_neg_log_marginal(alpha, true_class)))

    ok = frozen_err <= 1e-9 and quad_worst <= 1e-6
    verdict(capsys, 3, ok,
            f"log3-log2 err {frozen_err:.1e}, quadrature err <= {quad_worst:.1e} on 10 alpha")


# ----------------------------------------------- criterion 4: rgcn oracle

def test_criterion_4_rgcn_oracle(capsys):
    rng = np.random.default_rng(404)
    loop_worst = perm_worst = 0.0
    for _ in range(20):
        n = int(rng.integers(8, 51))
        g = random_structured_graph(rng, n)
        hidden = 8
        x = rng.normal(0.0, 1.0, size=(n, hidden))
        env = rgcn.init_environment(1, g.relations, hidden, 2,
                                    rng=np.random.default_rng(rng.integers(1 << 30)))
        view = rgcn.rgcn_forward(g, ad.constant(x), env)
        rep, logits, dist = naive_forward(g, x, env)
        loop_worst = max(
            loop_worst,
            float(np.abs(view.representations.data - rep).max()),
            float(np.abs(view.logits.data - logits).max()),
            float(np.abs(view.distribution.data - dist).max()),
        )

        perm = rng.permutation(n)
        gp = permute_graph(g, perm)
        xp = np.empty_like(x)
        xp[perm] = x
        view_p = rgcn.rgcn_forward(gp, ad.constant(xp), env)
        perm_worst = max(
            perm_worst,
            float(np.abs(view_p.logits.data[perm] - view.logits.data).max()),
        )
    ok = loop_worst <= 1e-6 and perm_worst <= 1e-9
    verdict(capsys, 4, ok,
            f"20 graphs: loop-oracle err <= {loop_worst:.1e}, "
            f"permutation err <= {perm_worst:.1e}")


# -------------------------------------------- criterion 5: fusion contract

def test_criterion_5_fusion_contract(capsys):
    rng = np.random.default_rng(505)
    n = 10_000
    a1 = 1.0 + rng.gamma(2.0, 4.0, size=(n, 2))
    a2 = 1.0 + rng.gamma(2.0, 4.0, size=(n, 2))
    ties = rng.random(n) < 0.1   # equal strengths, possibly different labels
    a2[ties] = a1[ties][:, ::-1]
    v1 = DirichletOutput(alpha=ad.constant(a1))
    v2 = DirichletOutput(alpha=ad.constant(a2))
    fused = fuse_predictions(v1, v2)

    take1 = v1.uncertainty < v2.uncertainty
    rule_ok = (
        np.array_equal(fused.labels, np.where(take1, v1.predictions, v2.predictions))
        and np.all(fused.chosen_view[v1.uncertainty >= v2.uncertainty] == 2)
        and np.all(fused.chosen_view[ties] == 2)
    )

    def monotone(alpha):  # u -> 0.8 * u^1.3, strictly increasing on (0, 1]
        u = 2.0 / alpha.sum(axis=1)
        new_s = 2.0 / (0.8 * u ** 1.3)
        return alpha * (new_s / alpha.sum(axis=1))[:, None]

    fused_t = fuse_predictions(
        DirichletOutput(alpha=ad.constant(monotone(a1))),
        DirichletOutput(alpha=ad.constant(monotone(a2))),
    )
    invariant = (np.array_equal(fused.labels, fused_t.labels)
                 and np.array_equal(fused.chosen_view, fused_t.chosen_view))
    ok = rule_ok and invariant
    verdict(capsys, 5, ok,
            f"{n} pairs: rule holds {rule_ok}, ties to view 2, "
            f"monotone-invariant {invariant}")


# ------------------------------------- criteria 6-8: seeded benchmark runs

@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    spec = SyntheticSpec(node_count=1000, bot_fraction=0.3, camouflage_rate=0.3)
    runs = []
    for s in BENCH_SEEDS:
        d = root / f"seed{s}"
        d.mkdir()
        nodes, edges = d / "nodes.jsonl", d / "edges.tsv"
        generate_synthetic(spec, s, nodes, edges)
        cfg = from_profile("small", seed=s)
        t0 = time.monotonic()
        full = run_pipeline(cfg, nodes, edges, d / "full")
        runtime = time.monotonic() - t0
        runs.append({
            "seed": s, "config": cfg, "dir": d, "nodes": nodes, "edges": edges,
            "baseline": logistic_baseline(load_graph(nodes, edges)),
            "full": full, "runtime": runtime,
            "kk_off": ablation_run(cfg, nodes, edges, d / "kk_off",
                                   ("key_knowledge",)),
            "ikl_off": ablation_run(cfg, nodes, edges, d / "ikl_off",
                                    ("intervention_kl",)),
            "fus_off": ablation_run(cfg, nodes, edges, d / "fus_off",
                                    ("uncertainty_fusion",)),
        })
    return runs


def test_criterion_6_benchmark_quality(capsys, benchmark):
    acc = float(np.median([r["full"].metrics.accuracy for r in benchmark]))
    f1 = float(np.median([r["full"].metrics.f1 for r in benchmark]))
    bl = float(np.median([r["baseline"].f1 for r in benchmark]))
    slowest = max(r["runtime"] for r in benchmark)
    ok = acc >= 0.85 and f1 >= 0.80 and f1 >= bl + 0.02 and slowest < SECONDS_PER_SEED
    verdict(capsys, 6, ok,
            f"median acc {acc:.3f}, F1 {f1:.3f}, baseline F1 {bl:.3f} "
            f"(+{(f1 - bl) * 100:.1f} pts), slowest seed {slowest:.1f}s")


def test_criterion_7_calibration_trend(capsys, benchmark):
    corrs = [r["full"].calibration.rank_correlation for r in benchmark]
    # an undefined correlation counts against the trend, not as missing data
    med = float(np.median([-1.0 if c is None else c for c in corrs]))
    ok = med >= 0.5
    shown = ", ".join("None" if c is None else f"{c:.2f}" for c in corrs)
    verdict(capsys, 7, ok, f"median uncertainty-error correlation {med:.2f} [{shown}]")


def test_criterion_8_ablation_trend(capsys, benchmark):
    med = lambda key: float(np.median([r[key].metrics.f1 for r in benchmark]))
    full = med("full")
    kk, ikl, fus = med("kk_off"), med("ikl_off"), med("fus_off")
    exact = all(
        r["fus_off"].metrics.f1 == max(m.f1 for m in r["fus_off"].view_metrics)
        for r in benchmark
    )
    ok = full >= kk and full >= ikl and full >= fus and exact
    verdict(capsys, 8, ok,
            f"median F1 full {full:.3f} vs key-knowledge-off {kk:.3f}, "
            f"intervention-off {ikl:.3f}, fusion-off {fus:.3f}; "
            f"fusion-off == max-of-views: {exact}")


def test_criterion_9_determinism(capsys, benchmark, tmp_path):
    first = benchmark[0]
    replay = run_pipeline(first["config"], first["nodes"], first["edges"],
                          tmp_path / "replay")
    same = {}
    for name in ("metrics.json", "predictions.jsonl"):
        same[name] = ((first["dir"] / "full" / name).read_bytes()
                      == (tmp_path / "replay" / name).read_bytes())
    ok = all(same.values())
    verdict(capsys, 9, ok,
            "byte-identical replay: " +
            ", ".join(f"{k} {v}" for k, v in same.items()))
