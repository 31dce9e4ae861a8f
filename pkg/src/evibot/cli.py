"""Command-line interface.

Subcommands mirror the pipeline's phases: `generate` a synthetic graph,
`train` the two-stage detector, `eval` and `calibrate` previously
written predictions, and `ablate` toggle combinations across seeds.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import from_profile, parse_config_file
from .errors import ConfigError, DataError, EvibotError, IntegrityError, exit_code_for
from .metrics import calibration_report, evaluate_metrics
from .pipeline import TOGGLES, ablation_run, run_pipeline
from .synth import SyntheticSpec, generate_synthetic, parse_spec_file


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evibot",
        description="Uncertainty-aware social-bot detection on relational graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic camouflaged-bot graph")
    gen.add_argument("--spec", help="flat key=value spec file (defaults apply if omitted)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")

    train = sub.add_parser("train", help="run the full two-stage pipeline")
    train.add_argument("--config", help="flat key=value config file")
    train.add_argument("--nodes", required=True)
    train.add_argument("--edges", required=True)
    train.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="recompute metrics from a predictions file")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--nodes", required=True, help="nodes file supplying the labels")

    cal = sub.add_parser("calibrate", help="bin prediction uncertainty against errors")
    cal.add_argument("--pred", required=True)
    cal.add_argument("--bins", type=int, default=10)

    abl = sub.add_parser("ablate", help="run toggle-off variants across seeds")
    abl.add_argument("--config", help="flat key=value config file")
    abl.add_argument("--toggles", default=",".join(TOGGLES),
                     help="comma-separated toggles to disable one at a time")
    abl.add_argument("--seeds", default="0", help="comma-separated run seeds")
    abl.add_argument("--nodes", required=True)
    abl.add_argument("--edges", required=True)
    abl.add_argument("--out", required=True)
    return parser


def _load_predictions(path) -> list[dict]:
    if not Path(path).exists():
        raise DataError(f"input file not found: {path}")
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"{path} line {lineno}: invalid JSON") from e
    if not rows:
        raise DataError(f"predictions file {path} is empty")
    return rows


def _labels_from_nodes(path) -> dict[int, int | None]:
    if not Path(path).exists():
        raise DataError(f"input file not found: {path}")
    labels: dict[int, int | None] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                labels[int(rec["id"])] = rec["label"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path} line {lineno}: bad node record") from e
    return labels


def _cmd_generate(args) -> int:
    spec = parse_spec_file(args.spec) if args.spec else SyntheticSpec()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nodes, edges = out / "nodes.jsonl", out / "edges.tsv"
    g = generate_synthetic(spec, args.seed, nodes, edges)
    print(json.dumps({
        "nodes": str(nodes), "edges": str(edges),
        "node_count": g.node_count, "bots": int((g.labels == 1).sum()),
    }))
    return 0


def _cmd_train(args) -> int:
    config = parse_config_file(args.config) if args.config else from_profile("small")
    result = run_pipeline(config, args.nodes, args.edges, args.out)
    print(json.dumps(result.metrics_report(config)))
    return 0


def _cmd_eval(args) -> int:
    rows = _load_predictions(args.pred)
    labels = _labels_from_nodes(args.nodes)
    y_true, y_pred = [], []
    for r in rows:
        nid = int(r["id"])
        if nid not in labels:
            raise IntegrityError(f"prediction for unknown node id {nid}")
        lab = labels[nid]
        if lab is None:
            raise DataError(f"node {nid} is unlabeled; cannot score it")
        if lab != r["y"]:
            raise IntegrityError(
                f"node {nid}: label {lab} in nodes file but {r['y']} in predictions"
            )
        y_true.append(lab)
        y_pred.append(r["yhat_fused"])
    m = evaluate_metrics(y_true, y_pred)
    print(json.dumps({"accuracy": m.accuracy, "f1": m.f1, "n_test": m.n}))
    return 0


def _cmd_calibrate(args) -> int:
    if args.bins < 2:
        raise ConfigError(f"--bins must be >= 2, got {args.bins}")
    rows = _load_predictions(args.pred)
    try:
        u = [r["u1"] if r["chosen_view"] == 1 else r["u2"] for r in rows]
        ok = [r["yhat_fused"] == r["y"] for r in rows]
    except KeyError as e:
        raise DataError(f"predictions file {args.pred} lacks field {e}") from e
    print(json.dumps(calibration_report(u, ok, bins=args.bins).to_json_dict()))
    return 0


def _cmd_ablate(args) -> int:
    config = parse_config_file(args.config) if args.config else from_profile("small")
    toggles = tuple(t.strip() for t in args.toggles.split(",") if t.strip())
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --seeds value: {args.seeds!r}") from e
    if not seeds:
        raise ConfigError("at least one seed is required")
    out = Path(args.out)
    for seed in seeds:
        seeded = replace(config, seed=seed)
        for disabled in [(), *((t,) for t in toggles)]:
            tag = "full" if not disabled else "off_" + disabled[0]
            res = ablation_run(seeded, args.nodes, args.edges,
                               out / f"seed{seed}" / tag, disabled)
            print(json.dumps({
                "seed": seed, "disabled": list(disabled),
                "accuracy": res.metrics.accuracy, "f1": res.metrics.f1,
            }))
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "calibrate": _cmd_calibrate,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except EvibotError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
