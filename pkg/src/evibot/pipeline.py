"""End-to-end orchestration: load, encode, two training stages, fusion, reports.

A run is a pure function of (config, data files): every artifact in the
output directory replays byte-for-byte under the same seed.  Stage
failures abort with the stage name chained to the cause, and an
INCOMPLETE marker is left behind so partial output directories cannot
be mistaken for finished runs.

The ablation runner shares this code path exactly; `run_pipeline` is
the all-toggles-on case.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import evidential, rgcn
from .config import RunConfig, config_to_text
from .errors import ConfigError, EvibotError, StageError
from .features import encode_graph
from .graph import HeteroGraph, load_graph
from .metrics import CalibrationReport, Metrics, calibration_report, evaluate_metrics

TOGGLES = ("key_knowledge", "intervention_kl", "uncertainty_fusion")
INCOMPLETE_MARKER = "INCOMPLETE"
# the four required artifacts; checkpoints and the stage-2 trace ride along
ARTIFACTS = ("predictions.jsonl", "metrics.json", "calibration.json", "stage1_trace.csv")


@dataclass(frozen=True)
class RunResult:
    metrics: Metrics
    view_metrics: tuple           # (Metrics, Metrics) for views 1 and 2
    calibration: CalibrationReport
    out_dir: Path
    disabled: tuple

    def metrics_report(self, config: RunConfig) -> dict:
        return {
            "accuracy": self.metrics.accuracy,
            "f1": self.metrics.f1,
            "n_test": self.metrics.n,
            "profile": config.profile,
            "seed": config.seed,
        }


def _write_trace(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    lines += [",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols)
              for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _json_line(row: dict) -> str:
    return json.dumps(row, separators=(",", ":"))


def ablation_run(
    config: RunConfig,
    nodes_path,
    edges_path,
    out_dir,
    disabled=(),
) -> RunResult:
    disabled = tuple(disabled)
    unknown = sorted(set(disabled) - set(TOGGLES))
    if unknown:
        raise ConfigError(f"unknown ablation toggles {unknown}; known: {list(TOGGLES)}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    marker = out_dir / INCOMPLETE_MARKER

    def stage(name: str, fn):
        try:
            return fn()
        except EvibotError as e:
            marker.write_text(f"failed during stage: {name}\n")
            raise StageError(name, e) from e

    marker.write_text("run in progress\n")
    (out_dir / "config.txt").write_text(config_to_text(config))

    g: HeteroGraph = stage("load", lambda: load_graph(nodes_path, edges_path))

    x, _, _ = stage("features", lambda: encode_graph(
        g, config.hidden_size, config.seed,
        zero_tweets="key_knowledge" in disabled,
    ))

    stage1_config = (
        replace(config, lambda1=0.0) if "intervention_kl" in disabled else config
    )
    s1 = stage("stage1", lambda: rgcn.train_environments(g, x, stage1_config))

    train_mask = g.split_mask("train")
    s2 = stage("stage2", lambda: evidential.train_uncertainty(
        s1.view1.representations.data,
        s1.view2.representations.data,
        g.labels.astype(np.int64),
        train_mask,
        config,
    ))

    test = g.split_mask("test") & (g.labels >= 0)
    test_ids = np.flatnonzero(test)
    y_true = g.labels[test].astype(np.int64)

    fused = stage("fuse", lambda: evidential.fuse_predictions(s2.out1, s2.out2))
    view_metrics = tuple(
        evaluate_metrics(y_true, out.predictions[test]) for out in (s2.out1, s2.out2)
    )
    if "uncertainty_fusion" in disabled:
        # keep whichever single view scores better on the evaluated split
        best = 0 if view_metrics[0].f1 >= view_metrics[1].f1 else 1
        chosen_out = (s2.out1, s2.out2)[best]
        yhat = chosen_out.predictions
        u_sel = chosen_out.uncertainty
        chosen = np.full(g.node_count, best + 1, dtype=np.int64)
    else:
        yhat = fused.labels
        u_sel = fused.uncertainty
        chosen = fused.chosen_view

    metrics = stage("metrics", lambda: evaluate_metrics(y_true, yhat[test]))
    calib = stage("metrics", lambda: calibration_report(
        u_sel[test], yhat[test] == y_true
    ))

    rows = [
        _json_line({
            "id": int(i),
            "y": int(g.labels[i]),
            "yhat1": int(s2.out1.predictions[i]),
            "u1": float(s2.out1.uncertainty[i]),
            "yhat2": int(s2.out2.predictions[i]),
            "u2": float(s2.out2.uncertainty[i]),
            "yhat_fused": int(yhat[i]),
            "chosen_view": int(chosen[i]),
        })
        for i in test_ids
    ]
    (out_dir / "predictions.jsonl").write_text("\n".join(rows) + "\n")

    result = RunResult(
        metrics=metrics, view_metrics=view_metrics, calibration=calib,
        out_dir=out_dir, disabled=disabled,
    )
    (out_dir / "metrics.json").write_text(
        json.dumps(result.metrics_report(config)) + "\n"
    )
    (out_dir / "calibration.json").write_text(
        json.dumps(calib.to_json_dict()) + "\n"
    )
    _write_trace(out_dir / "stage1_trace.csv", s1.trace)
    _write_trace(out_dir / "stage2_trace.csv", s2.trace)
    rgcn.save_environment(s1.env1, out_dir / "env1.json")
    rgcn.save_environment(s1.env2, out_dir / "env2.json")
    evidential.save_head(s2.head1, out_dir / "head1.json")
    evidential.save_head(s2.head2, out_dir / "head2.json")

    marker.unlink()
    return result


def run_pipeline(config: RunConfig, nodes_path, edges_path, out_dir) -> RunResult:
    """The full model: every ablation toggle enabled."""
    return ablation_run(config, nodes_path, edges_path, out_dir, disabled=())


def ablation_table(
    config: RunConfig, nodes_path, edges_path, out_root, toggle_sets,
) -> list[dict]:
    """One pipeline run per requested toggle set, same seed throughout."""
    out_root = Path(out_root)
    table = []
    for disabled in toggle_sets:
        disabled = tuple(disabled)
        tag = "full" if not disabled else "off_" + "_".join(sorted(disabled))
        res = ablation_run(config, nodes_path, edges_path, out_root / tag, disabled)
        table.append({
            "disabled": list(disabled),
            "accuracy": res.metrics.accuracy,
            "f1": res.metrics.f1,
        })
    return table
