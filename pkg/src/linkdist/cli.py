"""Command-line surface: single experiments, grouped result tables,
gradient verification, and synthetic dataset generation.

Exit codes: 0 success, 1 runtime failure, 2 usage error.

Dataset arguments are container directories; bare names resolve under
$LINKDIST_DATA_DIR.  Every subcommand is deterministic given identical
flags including --seed (summary JSON is byte-stable; per-epoch JSONL logs
carry wall-clock times and are not).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .evaluation import (
    ExperimentSummary,
    RunResult,
    SETTINGS,
    execute_run,
    prepare_run,
    results_table,
    run_experiment_paired,
)
from .graph import generate_sbm, load_container, save_container
from .nn import make_rng
from .training import METHODS, train_teacher
from .verify import COMPONENT_NAMES, gradcheck_suite


class UsageError(Exception):
    pass


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _resolve_dataset(name: str) -> Path:
    p = Path(name)
    if p.is_dir():
        return p
    root = os.environ.get("LINKDIST_DATA_DIR")
    if root and (Path(root) / name).is_dir():
        return Path(root) / name
    raise UsageError(
        f"dataset {name!r} is neither a directory nor a name under "
        f"LINKDIST_DATA_DIR ({root or 'unset'})"
    )


def _overrides(args) -> dict:
    out = {}
    for key in ("lr", "batch_size", "epochs", "alpha"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def _write_run_logs(out_dir: Path, method: str, seed: int, run, cfg):
    """One JSONL per eval mode; entries follow the fixed log schema."""
    out_dir.mkdir(parents=True, exist_ok=True)
    modes = ({"mlp": ("val_mlp", "test_mlp"), "mp": ("val_mp", "test_mp")}
             if method in ("linkdist", "colinkdist")
             else {("mp" if method == "gcn" else "mlp"): ("val", "test")})
    for mode, (vk, tk) in modes.items():
        path = out_dir / f"{method}_{mode}_seed{seed}.jsonl"
        with path.open("w") as fh:
            for epoch, (report, acc) in enumerate(zip(run.reports, run.trace)):
                fh.write(json.dumps({
                    "epoch": epoch,
                    "ce": report.ce,
                    "mse": report.mse,
                    "neg_ce": report.neg_ce,
                    "neg_mse": report.neg_mse,
                    "total": report.total,
                    "val_acc": acc[vk],
                    "test_acc": acc[tk],
                    "wall_ms": report.wall_ms,
                }) + "\n")


def cmd_run(args) -> int:
    path = _resolve_dataset(args.dataset)
    g, predefined = load_container(path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    log_dir = out_dir / "runs"

    def hook(seed, run, cfg):
        _write_run_logs(log_dir, args.method, seed, run, cfg)

    summaries, _ = run_experiment_paired(
        args.method, g, predefined, args.setting, n_runs=args.runs,
        base_seed=args.seed, overrides=_overrides(args),
        dataset_name=g.name or path.name, run_hook=hook)
    if args.eval_mode not in summaries:
        raise UsageError(
            f"method {args.method!r} reports eval modes "
            f"{sorted(summaries)}, not {args.eval_mode!r}")
    summary = summaries[args.eval_mode]

    payload = {
        "config": {
            "dataset": g.name or path.name,
            "method": args.method,
            "setting": args.setting,
            "eval_mode": args.eval_mode,
            "runs": args.runs,
            "seed": args.seed,
            "overrides": _overrides(args),
        },
        "summary": summary.to_dict(),
    }
    (out_dir / "summary.json").write_text(_canonical_json(payload))
    line = (f"{summary.method} on {summary.dataset} [{summary.setting}, "
            f"{summary.eval_mode} mode]: "
            f"{100 * summary.mean_acc:.2f} ± {100 * summary.std_acc:.2f} "
            f"over {summary.n_runs} runs")
    (out_dir / "summary.txt").write_text(line + "\n")
    print(line)
    return 0


def _table_cells(g, predefined, name, setting, runs, seed, overrides, log_dir):
    """All seven table rows for one dataset, training each network once.

    The GCN is trained once per seed: its trace fills the GCN row and its
    best-validation weights teach the gcn2mlp student.
    """
    cells = {}

    def hook_for(method):
        return lambda s, run, cfg: _write_run_logs(log_dir, method, s, run, cfg)

    for method in ("mlp", "linkdist", "colinkdist"):
        summaries, _ = run_experiment_paired(
            method, g, predefined, setting, n_runs=runs, base_seed=seed,
            overrides=overrides, dataset_name=name, run_hook=hook_for(method))
        for mode, summary in summaries.items():
            cells[(method, mode, name)] = summary

    gcn_results, teachers = [], {}
    for i in range(runs):
        run_seed = seed + i
        view, masks, cfg, evaluators = prepare_run(
            "gcn", g, predefined, setting, run_seed, overrides)
        teacher, trace, reports = train_teacher(g, view, masks, cfg, evaluators)
        teachers[run_seed] = teacher
        gcn_results.append(RunResult.from_trace(
            run_seed, [(t["val"], t["test"]) for t in trace]))
    cells[("gcn", "mp", name)] = ExperimentSummary.from_runs(
        "gcn", name, setting, "mp", gcn_results)

    student_results = []
    for i in range(runs):
        run_seed = seed + i
        run, _, _, cfg = execute_run("gcn2mlp", g, setting, run_seed,
                                     predefined, overrides,
                                     teacher=teachers[run_seed])
        _write_run_logs(log_dir, "gcn2mlp", run_seed, run, cfg)
        student_results.append(RunResult.from_trace(
            run_seed, [(t["val"], t["test"]) for t in run.trace]))
    cells[("gcn2mlp", "mlp", name)] = ExperimentSummary.from_runs(
        "gcn2mlp", name, setting, "mlp", student_results)
    return cells


def cmd_table(args) -> int:
    names = [n for n in args.datasets.split(",") if n]
    if not names:
        raise UsageError("no datasets given")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    cells = {}
    display_names = []
    for raw in names:
        path = _resolve_dataset(raw)
        g, predefined = load_container(path)
        name = g.name or path.name
        display_names.append(name)
        cells.update(_table_cells(g, predefined, name, args.setting, args.runs,
                                  args.seed, _overrides(args),
                                  out_dir / "runs"))

    text, data = results_table(cells, display_names, args.setting)
    (out_dir / "table.txt").write_text(text)
    (out_dir / "table.json").write_text(_canonical_json(data))
    print(text, end="")
    return 0


def cmd_gradcheck(args) -> int:
    reports = gradcheck_suite(inject_fault=args.inject_fault)
    failures = []
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:28s} max rel err {r.max_rel_err:.3e} "
              f"(tolerance {r.tolerance:g}, {r.n_checked} entries)")
        if not r.passed:
            failures.append(r.name)
    if failures:
        print(f"gradient check FAILED for: {', '.join(failures)}")
        return 1
    print(f"gradient check passed for all {len(reports)} checks")
    return 0


def cmd_gen_sbm(args) -> int:
    rng = make_rng(args.seed)
    try:
        g = generate_sbm(args.blocks, args.nodes_per_block, args.p_in,
                         args.p_out, args.feat_dim, args.feat_noise, rng)
    except ValueError as err:
        raise UsageError(str(err)) from err
    g.name = args.name
    save_container(args.out, g)
    print(f"wrote {g.num_nodes} nodes / {g.num_edges} edges to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linkdist",
        description="Edge-distilled node classification laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one method on one dataset")
    run.add_argument("--dataset", required=True,
                     help="container directory or name under LINKDIST_DATA_DIR")
    run.add_argument("--method", required=True, choices=METHODS)
    run.add_argument("--setting", default="semi-transductive", choices=SETTINGS)
    run.add_argument("--eval-mode", dest="eval_mode", default="mlp",
                     choices=("mlp", "mp"))
    run.add_argument("--runs", type=int, default=10)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--lr", type=float)
    run.add_argument("--batch-size", dest="batch_size", type=int)
    run.add_argument("--epochs", type=int)
    run.add_argument("--alpha", type=float)
    run.set_defaults(fn=cmd_run)

    table = sub.add_parser("table", help="all seven method rows, grouped")
    table.add_argument("--datasets", required=True,
                       help="comma-separated container dirs or names")
    table.add_argument("--setting", default="semi-transductive",
                       choices=SETTINGS)
    table.add_argument("--runs", type=int, default=10)
    table.add_argument("--seed", type=int, default=0)
    table.add_argument("--out", required=True)
    table.add_argument("--lr", type=float)
    table.add_argument("--batch-size", dest="batch_size", type=int)
    table.add_argument("--epochs", type=int)
    table.set_defaults(fn=cmd_table)

    check = sub.add_parser("gradcheck",
                           help="finite-difference verification of every "
                                "layer and loss composite")
    check.add_argument("--inject-fault", choices=COMPONENT_NAMES,
                       help="corrupt one component's gradient (harness "
                            "self-test)")
    check.set_defaults(fn=cmd_gradcheck)

    gen = sub.add_parser("gen-sbm", help="write a synthetic block-model "
                                         "container")
    gen.add_argument("--blocks", type=int, required=True)
    gen.add_argument("--nodes-per-block", dest="nodes_per_block", type=int,
                     required=True)
    gen.add_argument("--p-in", dest="p_in", type=float, required=True)
    gen.add_argument("--p-out", dest="p_out", type=float, required=True)
    gen.add_argument("--feat-dim", dest="feat_dim", type=int, default=16)
    gen.add_argument("--feat-noise", dest="feat_noise", type=float, default=0.3)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--name", default="sbm")
    gen.add_argument("--out", required=True)
    gen.set_defaults(fn=cmd_gen_sbm)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"failure: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
