"""Accuracy, test-at-best-validation selection, and the 10-run protocol.

A "run" is one seeded train cycle evaluated after every epoch; its score
is the test accuracy at the epoch with the highest validation accuracy
(earliest epoch on ties).  An experiment repeats runs over consecutive
seeds and reports mean and population standard deviation.

Edge-distilled models are trained once per run and evaluated in both
inference modes each epoch, so the feature-only row and the
neighbor-combining row of a results table come from the same weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import (
    INDUCTIVE,
    TRANSDUCTIVE,
    Graph,
    SplitMasks,
    alpha_schedule,
    build_train_view,
    class_weights,
    epoch_budget,
    make_full_split,
    make_semi_split,
    normalized_adjacency,
)
from .nn import make_rng
from .training import (
    DEFAULT_EPOCHS,
    METHODS,
    STREAM_SPLIT,
    TrainConfig,
    run_training,
)

SETTINGS = ("semi-transductive", "semi-inductive", "full")

# rows of a results table: method plus, for edge-distilled models, the
# inference mode; grouped by whether evaluation aggregates neighbor info
NO_MP_ROWS = (("mlp", "mlp"), ("gcn2mlp", "mlp"), ("linkdist", "mlp"),
              ("colinkdist", "mlp"))
MP_ROWS = (("gcn", "mp"), ("linkdist", "mp"), ("colinkdist", "mp"))
ROW_LABELS = {
    ("mlp", "mlp"): "MLP",
    ("gcn2mlp", "mlp"): "GCN2MLP",
    ("linkdist", "mlp"): "LinkDistMLP",
    ("colinkdist", "mlp"): "CoLinkDistMLP",
    ("gcn", "mp"): "GCN",
    ("linkdist", "mp"): "LinkDist",
    ("colinkdist", "mp"): "CoLinkDist",
}


class EmptyMaskError(ValueError):
    pass


class EmptyTraceError(ValueError):
    pass


def accuracy(predictions, labels, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("accuracy over an empty mask is undefined")
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    return float((predictions[mask] == labels[mask]).mean())


def select_run(trace):
    """(best validation accuracy, its paired test accuracy); first epoch on ties."""
    if len(trace) == 0:
        raise EmptyTraceError("cannot select from an empty trace")
    vals = np.asarray([v for v, _ in trace])
    idx = int(np.argmax(vals))
    return float(vals[idx]), float(trace[idx][1])


@dataclass
class RunResult:
    seed: int
    epochs: list          # per-epoch (val_acc, test_acc) pairs
    best_val_acc: float
    selected_test_acc: float
    selected_epoch: int

    @classmethod
    def from_trace(cls, seed, trace):
        best_val, selected = select_run(trace)
        idx = int(np.argmax([v for v, _ in trace]))
        return cls(seed=seed, epochs=[(float(v), float(t)) for v, t in trace],
                   best_val_acc=best_val, selected_test_acc=selected,
                   selected_epoch=idx)

    def to_dict(self):
        return {
            "seed": self.seed,
            "best_val_acc": self.best_val_acc,
            "selected_test_acc": self.selected_test_acc,
            "selected_epoch": self.selected_epoch,
            "epochs": [[v, t] for v, t in self.epochs],
        }


@dataclass
class ExperimentSummary:
    method: str
    dataset: str
    setting: str
    eval_mode: str
    n_runs: int
    mean_acc: float
    std_acc: float
    per_run: list

    @classmethod
    def from_runs(cls, method, dataset, setting, eval_mode, per_run):
        scores = np.asarray([r.selected_test_acc for r in per_run], dtype=np.float64)
        # population convention; exactly zero when every run scored the same
        std = 0.0 if np.all(scores == scores[0]) else float(scores.std())
        return cls(method=method, dataset=dataset, setting=setting,
                   eval_mode=eval_mode, n_runs=len(per_run),
                   mean_acc=float(scores.mean()), std_acc=std,
                   per_run=per_run)

    def to_dict(self):
        return {
            "method": self.method,
            "dataset": self.dataset,
            "setting": self.setting,
            "eval_mode": self.eval_mode,
            "n_runs": self.n_runs,
            "mean_acc": self.mean_acc,
            "std_acc": self.std_acc,
            "std_convention": "population",
            "per_run": [r.to_dict() for r in self.per_run],
        }


# ---------------------------------------------------------------------------
# Per-epoch evaluators
# ---------------------------------------------------------------------------


class Evaluators:
    """Evaluation callables over the full graph for one (masks, alpha).

    Structure caches are built lazily so feature-only evaluation never
    touches the edge list (the Graph counts edge reads).
    """

    def __init__(self, g: Graph, masks: SplitMasks, alpha: float = 0.0):
        self.g = g
        self.masks = masks
        self.alpha = alpha
        self._eval_ids = np.nonzero(masks.eval_mask)[0]
        self._val_rows = masks.val[self._eval_ids]
        self._test_rows = masks.test[self._eval_ids]
        self._eval_labels = g.labels[self._eval_ids]
        self._full_adj = None
        self._binary_adj = None

    def __call__(self, kind: str):
        return {"mlp": self.eval_mlp, "gcn": self.eval_gcn,
                "forked": self.eval_forked}[kind]

    def _accs(self, predictions):
        return (
            float((predictions[self._val_rows]
                   == self._eval_labels[self._val_rows]).mean()),
            float((predictions[self._test_rows]
                   == self._eval_labels[self._test_rows]).mean()),
        )

    def eval_mlp(self, model):
        x = self.g.features[self._eval_ids]
        logits, _ = model.forward(x, training=False)
        val, test = self._accs(np.argmax(logits, axis=1))
        return {"val": val, "test": test}

    def eval_gcn(self, model):
        if self._full_adj is None:
            self._full_adj = normalized_adjacency(self.g)
        prev = model.adjacency
        model.adjacency = self._full_adj
        logits, _ = model.forward(self.g.features, training=False)
        model.adjacency = prev
        val, test = self._accs(np.argmax(logits[self._eval_ids], axis=1))
        return {"val": val, "test": test}

    def eval_forked(self, model):
        (z, s), _ = model.forward(self.g.features, training=False)
        mlp_val, mlp_test = self._accs(np.argmax(z[self._eval_ids], axis=1))
        if self._binary_adj is None:
            self._binary_adj = self.g.binary_adjacency()
        neighbor = (self._binary_adj @ s.astype(np.float64)).astype(z.dtype)
        scores = z + np.asarray(self.alpha, dtype=z.dtype) * neighbor
        mp_val, mp_test = self._accs(np.argmax(scores[self._eval_ids], axis=1))
        return {"val_mlp": mlp_val, "test_mlp": mlp_test,
                "val_mp": mp_val, "test_mp": mp_test}


# ---------------------------------------------------------------------------
# Runs and experiments
# ---------------------------------------------------------------------------


def _split_for(setting: str):
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    if setting == "full":
        return "full", TRANSDUCTIVE
    return "semi", INDUCTIVE if setting.endswith("inductive") else TRANSDUCTIVE


def prepare_run(method: str, g: Graph, predefined_masks, setting: str, seed: int,
                overrides: dict | None = None):
    """Build masks, view, resolved config, and evaluators for one run.

    Semi-supervised runs reuse a predefined split when one exists and vary
    only the model stream; otherwise each seed draws its own split.
    """
    overrides = dict(overrides or {})
    split_kind, view_setting = _split_for(setting)
    if split_kind == "semi" and predefined_masks is not None:
        masks = predefined_masks
    else:
        split_rng = make_rng((seed, STREAM_SPLIT))
        masks = (make_semi_split(g, split_rng) if split_kind == "semi"
                 else make_full_split(g, split_rng))
    view = build_train_view(g, masks, view_setting)
    cfg = TrainConfig(seed=seed, setting=view_setting, **overrides)
    if method in ("linkdist", "colinkdist"):
        if cfg.alpha is None:
            cfg.alpha = alpha_schedule(view, masks).alpha
        if cfg.class_weights is None:
            cfg.class_weights = class_weights(view, masks).weights
        if cfg.epochs is None:
            cfg.epochs = epoch_budget(g)
    else:
        if cfg.alpha is None:
            cfg.alpha = 0.0
        if cfg.epochs is None:
            cfg.epochs = DEFAULT_EPOCHS
    evaluators = Evaluators(g, masks, alpha=cfg.alpha)
    return view, masks, cfg, evaluators


def execute_run(method, g, setting, seed, predefined_masks=None, overrides=None,
                teacher=None):
    view, masks, cfg, evaluators = prepare_run(
        method, g, predefined_masks, setting, seed, overrides)
    run = run_training(method, g, view, masks, cfg, evaluators, teacher=teacher)
    return run, view, masks, cfg


def _mode_traces(method: str, trace):
    """Split a per-epoch trace into {eval_mode: [(val, test), ...]}."""
    if method in ("linkdist", "colinkdist"):
        return {
            "mlp": [(t["val_mlp"], t["test_mlp"]) for t in trace],
            "mp": [(t["val_mp"], t["test_mp"]) for t in trace],
        }
    mode = "mp" if method == "gcn" else "mlp"
    return {mode: [(t["val"], t["test"]) for t in trace]}


def run_experiment_paired(method, g, predefined_masks=None,
                          setting="semi-transductive", n_runs=10, base_seed=0,
                          overrides=None, dataset_name=None, run_hook=None):
    """All eval modes the method supports, from shared training runs.

    Returns ({eval_mode: ExperimentSummary}, [TrainingRun]).  ``run_hook``
    (if given) is called with (seed, TrainingRun, cfg) after each run,
    e.g. to write logs or harvest teachers.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    dataset_name = dataset_name or g.name or "dataset"
    per_mode: dict[str, list] = {}
    runs = []
    for i in range(n_runs):
        seed = base_seed + i
        run, view, masks, cfg = execute_run(
            method, g, setting, seed, predefined_masks, overrides)
        runs.append(run)
        if run_hook is not None:
            run_hook(seed, run, cfg)
        for mode, pairs in _mode_traces(method, run.trace).items():
            per_mode.setdefault(mode, []).append(RunResult.from_trace(seed, pairs))
    summaries = {
        mode: ExperimentSummary.from_runs(method, dataset_name, setting, mode,
                                          results)
        for mode, results in per_mode.items()
    }
    return summaries, runs


def run_experiment(method, g, predefined_masks=None, setting="semi-transductive",
                   eval_mode="mlp", n_runs=10, base_seed=0, overrides=None,
                   dataset_name=None) -> ExperimentSummary:
    summaries, _ = run_experiment_paired(
        method, g, predefined_masks, setting, n_runs, base_seed, overrides,
        dataset_name)
    if eval_mode not in summaries:
        available = sorted(summaries)
        raise ValueError(
            f"method {method!r} has no eval mode {eval_mode!r}; it reports {available}"
        )
    return summaries[eval_mode]


# ---------------------------------------------------------------------------
# Grouped results tables
# ---------------------------------------------------------------------------


def results_table(cell_summaries: dict, dataset_names: list, setting: str):
    """Render the grouped accuracy table.

    ``cell_summaries`` maps (method, eval_mode, dataset) -> ExperimentSummary.
    Returns (text, json_dict); per-group column maxima are starred in the
    text and flagged ``best`` in the JSON.
    """
    groups = (("no message passing", NO_MP_ROWS), ("message passing", MP_ROWS))
    json_rows = []
    lines = [f"Accuracy (%) over seeded runs; setting: {setting}"]
    header = f"{'method':<16}" + "".join(f"{d:>20}" for d in dataset_names)
    for group_name, rows in groups:
        lines.append(f"-- {group_name} --")
        lines.append(header)
        best = {}
        for d in dataset_names:
            scores = [cell_summaries[(m, em, d)].mean_acc for m, em in rows
                      if (m, em, d) in cell_summaries]
            best[d] = max(scores) if scores else None
        for m, em in rows:
            label = ROW_LABELS[(m, em)]
            cells = []
            for d in dataset_names:
                s = cell_summaries.get((m, em, d))
                if s is None:
                    cells.append(f"{'-':>20}")
                    continue
                star = "*" if s.mean_acc == best[d] else " "
                cells.append(f"{star}{100 * s.mean_acc:7.2f}±{100 * s.std_acc:5.2f}".rjust(20))
                json_rows.append({
                    "method": label,
                    "dataset": d,
                    "eval_mode": em,
                    "group": group_name,
                    "mean_acc": s.mean_acc,
                    "std_acc": s.std_acc,
                    "n_runs": s.n_runs,
                    "best": bool(s.mean_acc == best[d]),
                })
            lines.append(f"{label:<16}" + "".join(cells))
    text = "\n".join(lines) + "\n"
    return text, {"setting": setting, "datasets": dataset_names, "cells": json_rows}
