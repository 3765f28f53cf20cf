"""The four training procedures.

* supervised: plain CE on training nodes (MLP in minibatches, GCN in one
  full batch per epoch);
* edge-pair distillation: iterate over visible edges, supervise both
  endpoints' outputs with any available training labels and pull each
  endpoint's own-label prediction toward the other endpoint's
  adjacent-label prediction (MSE on logits, weighted by alpha);
* the contrastive variant: additionally push predictions across sampled
  non-edges apart;
* teacher-student: fit a plain MLP to a trained GCN's logits on every
  node outside the evaluation sets.

Wiring of one positive edge (v_i, v_j), per batch:

    ce  = CE(z_i, y_i) + CE(s_j, y_i)      when v_i carries a train label
        + CE(z_j, y_j) + CE(s_i, y_j)      when v_j does
    mse = MSE(z_i, s_j) + MSE(z_j, s_i)    over every pair
    loss = ce + alpha * mse

All CE terms on edge batches are class-weighted (node distribution over
endpoint distribution); each CE term is a mean over the rows it applies
to, each MSE a mean over all batch entries.

For a negative pair (v_i, v_k) the supervision terms stay, while the
cross predictions are repelled: repulsion CE uses the other side's
softmaxed own-label prediction as a frozen target (no gradient into the
target side), repulsion MSE keeps both sides live.  Each repulsion term
is clamped (CE at 4 ln C, MSE at 10 C) before negation so the maximized
terms cannot run away:

    loss -= min(CE(s_i, softmax(z_k)*), cap) + min(CE(s_k, softmax(z_i)*), cap)
    loss -= alpha * (min(MSE(z_i, s_k), cap') + min(MSE(z_k, s_i), cap'))

Trainers read node features and labels only through the TrainView, which
audits reads of masked features and evaluation-set labels.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import (
    TRANSDUCTIVE,
    Graph,
    NoEdgesError,
    SplitMasks,
    TrainView,
    sample_negative_pairs,
)
from .models import ForkedMLP, GCNModel, MLPModel, copy_weights
from .nn import adam_step, make_rng, mse, one_hot, softmax_rows, weighted_cross_entropy

# independent sub-streams per run seed
STREAM_SPLIT = 0
STREAM_MODEL = 1
STREAM_STUDENT = 2

DEFAULT_EPOCHS = 200


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 1024
    epochs: int | None = None          # None: method default
    alpha: float | None = None         # None: derived from the train view
    class_weights: np.ndarray | None = None  # None: derived likewise
    seed: int = 0
    setting: str = TRANSDUCTIVE

    def __post_init__(self):
        if self.epochs is not None and self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.alpha is not None and not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class LossReport:
    """Per-epoch (or per-batch) loss bookkeeping.

    ``total`` always equals ce + alpha*mse - neg_ce - alpha*neg_mse; the
    contrastive terms are zero outside contrastive training.
    """

    ce: float = 0.0
    mse: float = 0.0
    neg_ce: float = 0.0
    neg_mse: float = 0.0
    alpha: float = 0.0
    wall_ms: float = 0.0
    total: float = field(init=False)

    def __post_init__(self):
        self.total = (self.ce + self.alpha * self.mse
                      - self.neg_ce - self.alpha * self.neg_mse)


def _weighted_mean(values, weights):
    w = float(np.sum(weights))
    return float(np.dot(values, weights) / w) if w else 0.0


def batch_slices(n: int, size: int):
    """Contiguous [start, stop) ranges of width ``size`` covering ``n`` rows.

    A trailing singleton is merged into the previous batch (batch
    normalization needs at least two rows), so one batch may hold
    ``size + 1`` rows.  A batch of one row can only occur when n == 1,
    which the norm layer rejects itself.
    """
    bounds = list(range(0, n, size)) + [n]
    if len(bounds) > 2 and bounds[-1] - bounds[-2] == 1:
        del bounds[-2]
    return list(zip(bounds[:-1], bounds[1:]))


def _combine_reports(batch_reports, batch_sizes, alpha):
    cols = {
        name: _weighted_mean([getattr(r, name) for r in batch_reports], batch_sizes)
        for name in ("ce", "mse", "neg_ce", "neg_mse")
    }
    return LossReport(alpha=alpha, **cols)


# ---------------------------------------------------------------------------
# Edge-batch losses (shared by the epoch drivers and the gradient harness)
# ---------------------------------------------------------------------------


def positive_pair_loss(model: ForkedMLP, x_i, x_j, lab_i, y_i, lab_j, y_j,
                       weights, alpha, training, rng):
    """Forward both endpoints, assemble the positive-link loss, and push
    gradients back through the model.

    ``lab_i`` flags the labelled rows of the i side; ``y_i`` holds the
    integer labels of exactly those rows (same for the j side).  Returns
    (ce, mse) where ce already sums the up-to-four weighted CE terms.
    """
    (z_i, s_i), cache_i = model.forward(x_i, training, rng)
    (z_j, s_j), cache_j = model.forward(x_j, training, rng)
    dz_i = np.zeros_like(z_i)
    ds_i = np.zeros_like(s_i)
    dz_j = np.zeros_like(z_j)
    ds_j = np.zeros_like(s_j)
    c = z_i.shape[1]

    ce = 0.0
    if lab_i.any():
        targets = one_hot(y_i, c, z_i.dtype)
        loss, g = weighted_cross_entropy(z_i[lab_i], targets, weights)
        dz_i[lab_i] += g
        ce += loss
        loss, g = weighted_cross_entropy(s_j[lab_i], targets, weights)
        ds_j[lab_i] += g
        ce += loss
    if lab_j.any():
        targets = one_hot(y_j, c, z_j.dtype)
        loss, g = weighted_cross_entropy(z_j[lab_j], targets, weights)
        dz_j[lab_j] += g
        ce += loss
        loss, g = weighted_cross_entropy(s_i[lab_j], targets, weights)
        ds_i[lab_j] += g
        ce += loss

    mse_term = 0.0
    if alpha > 0.0:
        loss, da, db = mse(z_i, s_j)
        dz_i += alpha * da
        ds_j += alpha * db
        mse_term += loss
        loss, da, db = mse(z_j, s_i)
        dz_j += alpha * da
        ds_i += alpha * db
        mse_term += loss

    model.backward(cache_i, dz_i, ds_i)
    model.backward(cache_j, dz_j, ds_j)
    return ce, mse_term


def negative_pair_loss(model: ForkedMLP, x_i, x_k, lab_i, y_i, lab_k, y_k,
                       weights, alpha, training, rng):
    """Loss over one batch of sampled non-edges.

    Returns (ce, neg_ce, neg_mse): the positive-signed supervision of both
    own-label outputs, and the two repulsion aggregates (post-clamp,
    pre-negation).
    """
    (z_i, s_i), cache_i = model.forward(x_i, training, rng)
    (z_k, s_k), cache_k = model.forward(x_k, training, rng)
    dz_i = np.zeros_like(z_i)
    ds_i = np.zeros_like(s_i)
    dz_k = np.zeros_like(z_k)
    ds_k = np.zeros_like(s_k)
    c = z_i.shape[1]

    ce = 0.0
    if lab_i.any():
        loss, g = weighted_cross_entropy(z_i[lab_i], one_hot(y_i, c, z_i.dtype),
                                         weights)
        dz_i[lab_i] += g
        ce += loss
    if lab_k.any():
        loss, g = weighted_cross_entropy(z_k[lab_k], one_hot(y_k, c, z_k.dtype),
                                         weights)
        dz_k[lab_k] += g
        ce += loss

    # repulsion: push each inference output away from the other side's
    # (frozen) own-label prediction; unit class weights for soft targets
    ce_cap = 4.0 * math.log(c)
    mse_cap = 10.0 * c
    unit = np.ones(c, dtype=z_i.dtype)

    neg_ce = 0.0
    target_k = softmax_rows(z_k)  # constant w.r.t. gradients (detached)
    loss, g = weighted_cross_entropy(s_i, target_k, unit)
    if loss < ce_cap:
        ds_i -= g
    neg_ce += min(loss, ce_cap)
    target_i = softmax_rows(z_i)
    loss, g = weighted_cross_entropy(s_k, target_i, unit)
    if loss < ce_cap:
        ds_k -= g
    neg_ce += min(loss, ce_cap)

    neg_mse = 0.0
    if alpha > 0.0:
        loss, da, db = mse(z_i, s_k)
        if loss < mse_cap:
            dz_i -= alpha * da
            ds_k -= alpha * db
        neg_mse += min(loss, mse_cap)
        loss, da, db = mse(z_k, s_i)
        if loss < mse_cap:
            dz_k -= alpha * da
            ds_i -= alpha * db
        neg_mse += min(loss, mse_cap)

    model.backward(cache_i, dz_i, ds_i)
    model.backward(cache_k, dz_k, ds_k)
    return ce, neg_ce, neg_mse


# ---------------------------------------------------------------------------
# Epoch drivers
# ---------------------------------------------------------------------------


def _edge_batches(view: TrainView, masks: SplitMasks, rng, batch_size):
    edges = view.visible_edges
    if edges.shape[0] == 0:
        raise NoEdgesError("edge-iteration training needs at least one visible edge")
    order = rng.permutation(edges.shape[0])
    for start, stop in batch_slices(edges.shape[0], batch_size):
        batch = edges[order[start:stop]]
        ids_i, ids_j = batch[:, 0], batch[:, 1]
        lab_i = masks.train[ids_i]
        lab_j = masks.train[ids_j]
        yield (view.features(ids_i), view.features(ids_j),
               lab_i, view.labels(ids_i[lab_i]),
               lab_j, view.labels(ids_j[lab_j]),
               batch.shape[0], ids_i)


def linkdist_epoch(model: ForkedMLP, view: TrainView, masks: SplitMasks,
                   cfg: TrainConfig, rng) -> LossReport:
    """One pass over the visible edges: shuffled batches, one Adam step each."""
    alpha = cfg.alpha
    reports, sizes = [], []
    for x_i, x_j, lab_i, y_i, lab_j, y_j, n, _ in _edge_batches(
            view, masks, rng, cfg.batch_size):
        ce, mse_term = positive_pair_loss(
            model, x_i, x_j, lab_i, y_i, lab_j, y_j,
            cfg.class_weights, alpha, True, rng)
        adam_step(model.params(), cfg.lr)
        reports.append(LossReport(ce=ce, mse=mse_term, alpha=alpha))
        sizes.append(n)
    return _combine_reports(reports, sizes, alpha)


def colinkdist_epoch(model: ForkedMLP, view: TrainView, masks: SplitMasks,
                     cfg: TrainConfig, rng) -> LossReport:
    """linkdist_epoch plus, per positive batch, an equal-size batch of
    sampled non-edges whose cross predictions are pushed apart."""
    alpha = cfg.alpha
    reports, sizes = [], []
    for x_i, x_j, lab_i, y_i, lab_j, y_j, n, _ in _edge_batches(
            view, masks, rng, cfg.batch_size):
        ce_pos, mse_term = positive_pair_loss(
            model, x_i, x_j, lab_i, y_i, lab_j, y_j,
            cfg.class_weights, alpha, True, rng)
        neg = sample_negative_pairs(view, n, rng)
        ids_i, ids_k = neg[:, 0], neg[:, 1]
        nlab_i = masks.train[ids_i]
        nlab_k = masks.train[ids_k]
        ce_neg, neg_ce, neg_mse = negative_pair_loss(
            model, view.features(ids_i), view.features(ids_k),
            nlab_i, view.labels(ids_i[nlab_i]),
            nlab_k, view.labels(ids_k[nlab_k]),
            cfg.class_weights, alpha, True, rng)
        adam_step(model.params(), cfg.lr)
        reports.append(LossReport(ce=ce_pos + ce_neg, mse=mse_term,
                                  neg_ce=neg_ce, neg_mse=neg_mse, alpha=alpha))
        sizes.append(n)
    return _combine_reports(reports, sizes, alpha)


def weighted_ce_epoch(model: ForkedMLP, view: TrainView, masks: SplitMasks,
                      cfg: TrainConfig, rng) -> LossReport:
    """Edge-iteration trainer with the ground-truth CE terms only.

    Kept as a deliberately separate straight-line implementation: with
    alpha = 0 the distillation trainer must produce bit-identical weight
    updates to this one.
    """
    edges = view.visible_edges
    if edges.shape[0] == 0:
        raise NoEdgesError("edge-iteration training needs at least one visible edge")
    order = rng.permutation(edges.shape[0])
    losses, sizes = [], []
    for start, stop in batch_slices(edges.shape[0], cfg.batch_size):
        batch = edges[order[start:stop]]
        ids_i, ids_j = batch[:, 0], batch[:, 1]
        lab_i = masks.train[ids_i]
        lab_j = masks.train[ids_j]
        x_i = view.features(ids_i)
        x_j = view.features(ids_j)
        y_i = view.labels(ids_i[lab_i])
        y_j = view.labels(ids_j[lab_j])

        (z_i, s_i), cache_i = model.forward(x_i, True, rng)
        (z_j, s_j), cache_j = model.forward(x_j, True, rng)
        dz_i = np.zeros_like(z_i)
        ds_i = np.zeros_like(s_i)
        dz_j = np.zeros_like(z_j)
        ds_j = np.zeros_like(s_j)
        c = z_i.shape[1]
        ce = 0.0
        if lab_i.any():
            targets = one_hot(y_i, c, z_i.dtype)
            loss, g = weighted_cross_entropy(z_i[lab_i], targets, cfg.class_weights)
            dz_i[lab_i] += g
            ce += loss
            loss, g = weighted_cross_entropy(s_j[lab_i], targets, cfg.class_weights)
            ds_j[lab_i] += g
            ce += loss
        if lab_j.any():
            targets = one_hot(y_j, c, z_j.dtype)
            loss, g = weighted_cross_entropy(z_j[lab_j], targets, cfg.class_weights)
            dz_j[lab_j] += g
            ce += loss
            loss, g = weighted_cross_entropy(s_i[lab_j], targets, cfg.class_weights)
            ds_i[lab_j] += g
            ce += loss
        model.backward(cache_i, dz_i, ds_i)
        model.backward(cache_j, dz_j, ds_j)
        adam_step(model.params(), cfg.lr)
        losses.append(ce)
        sizes.append(batch.shape[0])
    return LossReport(ce=_weighted_mean(losses, sizes), alpha=0.0)


# ---------------------------------------------------------------------------
# Supervised baselines
# ---------------------------------------------------------------------------


def train_supervised(model, view: TrainView, masks: SplitMasks, cfg: TrainConfig,
                     evaluator, rng):
    """CE on training nodes; GCN full-batch, MLP in minibatches.

    Baseline supervision is unweighted: the node/endpoint reweighting
    exists only for edge-iteration training.
    """
    train_ids = np.nonzero(masks.train)[0]
    if train_ids.size == 0:
        raise ValueError("training mask is empty")
    epochs = cfg.epochs if cfg.epochs is not None else DEFAULT_EPOCHS
    c = model.num_classes
    unit = np.ones(c)
    trace, reports = [], []

    if isinstance(model, GCNModel):
        feats = view.local_features()
        model.adjacency = view.local_normalized_adjacency()
        pre = (model.adjacency @ feats).astype(feats.dtype)
        local_train = view.to_local(train_ids)
        targets = one_hot(view.labels(train_ids), c)
        for _ in range(epochs):
            started = time.perf_counter()
            logits, cache = model.forward(feats, training=True, rng=rng,
                                          pre_propagated=pre)
            loss, g = weighted_cross_entropy(logits[local_train], targets, unit)
            dlogits = np.zeros_like(logits)
            dlogits[local_train] = g
            model.backward(cache, dlogits)
            adam_step(model.params(), cfg.lr)
            reports.append(LossReport(
                ce=loss, wall_ms=1e3 * (time.perf_counter() - started)))
            trace.append(evaluator(model))
    else:
        labels = view.labels(train_ids)
        for _ in range(epochs):
            started = time.perf_counter()
            order = rng.permutation(train_ids.size)
            losses, sizes = [], []
            for start, stop in batch_slices(train_ids.size, cfg.batch_size):
                rows = order[start:stop]
                x = view.features(train_ids[rows])
                targets = one_hot(labels[rows], c)
                logits, cache = model.forward(x, training=True, rng=rng)
                loss, g = weighted_cross_entropy(logits, targets, unit)
                model.backward(cache, g)
                adam_step(model.params(), cfg.lr)
                losses.append(loss)
                sizes.append(rows.size)
            reports.append(LossReport(
                ce=_weighted_mean(losses, sizes),
                wall_ms=1e3 * (time.perf_counter() - started)))
            trace.append(evaluator(model))
    return trace, reports


def gcn2mlp_distill(teacher: GCNModel, student: MLPModel, view: TrainView,
                    masks: SplitMasks, cfg: TrainConfig, evaluator, rng):
    """Fit the student to the trained teacher's logits (MSE) on every
    visible node outside the evaluation sets."""
    target_ids = np.nonzero(view.visible_nodes & ~masks.eval_mask)[0]
    teacher_logits, _ = teacher.forward(view.local_features(), training=False)
    targets_all = teacher_logits[view.to_local(target_ids)]

    epochs = cfg.epochs if cfg.epochs is not None else DEFAULT_EPOCHS
    trace, reports = [], []
    for _ in range(epochs):
        started = time.perf_counter()
        order = rng.permutation(target_ids.size)
        losses, sizes = [], []
        for start, stop in batch_slices(target_ids.size, cfg.batch_size):
            rows = order[start:stop]
            x = view.features(target_ids[rows])
            logits, cache = student.forward(x, training=True, rng=rng)
            loss, g, _ = mse(logits, targets_all[rows])
            student.backward(cache, g)
            adam_step(student.params(), cfg.lr)
            losses.append(loss)
            sizes.append(rows.size)
        report = LossReport(mse=_weighted_mean(losses, sizes), alpha=1.0)
        report.wall_ms = 1e3 * (time.perf_counter() - started)
        reports.append(report)
        trace.append(evaluator(student))
    return trace, reports


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

METHODS = ("mlp", "gcn", "gcn2mlp", "linkdist", "colinkdist")


@dataclass
class TrainingRun:
    method: str
    model: object
    trace: list
    reports: list
    teacher: object = None
    teacher_trace: list = None


def _train_forked(method, g, view, masks, cfg, evaluator, rng):
    model = ForkedMLP(g.num_features, g.num_classes, rng)
    epoch_fn = linkdist_epoch if method == "linkdist" else colinkdist_epoch
    trace, reports = [], []
    for _ in range(cfg.epochs):
        started = time.perf_counter()
        report = epoch_fn(model, view, masks, cfg, rng)
        report.wall_ms = 1e3 * (time.perf_counter() - started)
        reports.append(report)
        trace.append(evaluator(model))
    return model, trace, reports


def train_teacher(g: Graph, view: TrainView, masks: SplitMasks, cfg: TrainConfig,
                  evaluator_factory):
    """Train a GCN and keep its weights from the best-validation epoch.

    Returns (selected teacher, per-epoch trace).  The trace doubles as a
    plain GCN run: tracking does not consume random draws, so a table can
    train the teacher once per seed and reuse it for both rows.
    """
    rng = make_rng((cfg.seed, STREAM_MODEL))
    teacher = GCNModel(g.num_features, g.num_classes, rng)
    tracker = BestValTracker(
        evaluator_factory("gcn"),
        lambda: GCNModel(g.num_features, g.num_classes, rng=None))
    trace, reports = train_supervised(teacher, view, masks, cfg, tracker, rng)
    best = tracker.best
    best.adjacency = teacher.adjacency
    return best, trace, reports


def run_training(method: str, g: Graph, view: TrainView, masks: SplitMasks,
                 cfg: TrainConfig, evaluator_factory, teacher=None) -> TrainingRun:
    """Train one model with one seed.

    ``cfg.epochs``, ``cfg.alpha`` and ``cfg.class_weights`` must already be
    resolved (the experiment layer does that).  ``evaluator_factory(kind)``
    yields a per-epoch evaluation callable for kind in {mlp, gcn, forked}.
    A pre-trained, validation-selected ``teacher`` may be supplied for
    gcn2mlp to skip the teacher phase.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")

    if method == "mlp":
        rng = make_rng((cfg.seed, STREAM_MODEL))
        model = MLPModel(g.num_features, g.num_classes, rng)
        trace, reports = train_supervised(model, view, masks, cfg,
                                          evaluator_factory("mlp"), rng)
        return TrainingRun(method, model, trace, reports)

    if method == "gcn":
        rng = make_rng((cfg.seed, STREAM_MODEL))
        model = GCNModel(g.num_features, g.num_classes, rng)
        trace, reports = train_supervised(model, view, masks, cfg,
                                          evaluator_factory("gcn"), rng)
        return TrainingRun(method, model, trace, reports)

    if method == "gcn2mlp":
        t_trace = None
        if teacher is None:
            teacher, t_trace, _ = train_teacher(g, view, masks, cfg,
                                                evaluator_factory)
        student_rng = make_rng((cfg.seed, STREAM_STUDENT))
        student = MLPModel(g.num_features, g.num_classes, student_rng)
        trace, reports = gcn2mlp_distill(teacher, student, view, masks, cfg,
                                         evaluator_factory("mlp"), student_rng)
        return TrainingRun(method, student, trace, reports,
                           teacher=teacher, teacher_trace=t_trace)

    rng = make_rng((cfg.seed, STREAM_MODEL))
    model, trace, reports = _train_forked(method, g, view, masks, cfg,
                                          evaluator_factory("forked"), rng)
    return TrainingRun(method, model, trace, reports)


class BestValTracker:
    """Evaluator wrapper that keeps a weight copy of the model at the epoch
    with the highest validation accuracy (earliest epoch on ties)."""

    def __init__(self, evaluator, template_factory, val_key="val"):
        self.evaluator = evaluator
        self.template_factory = template_factory
        self.val_key = val_key
        self.best_val = -np.inf
        self.best = None

    def __call__(self, model):
        result = self.evaluator(model)
        if result[self.val_key] > self.best_val:
            self.best_val = result[self.val_key]
            if self.best is None:
                self.best = self.template_factory()
            copy_weights(self.best, model)
        return result
