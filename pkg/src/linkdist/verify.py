"""Finite-difference verification of every layer and loss composite.

Everything runs in float64 on desk-sized models: the float32 production
path shares the same code, so checking the formulas here checks them
everywhere.  Isolated linear/CE/MSE checks must pass at 1e-4; everything
else (norm layers, dropout, full model composites, the edge-pair losses)
at 1e-3.

``inject_fault`` deliberately corrupts one component's analytic gradient
so the harness itself can be shown to catch regressions.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph, normalized_adjacency
from .models import ForkedMLP, GCNModel, MLPModel
from .nn import (
    BatchNormState,
    InterLayerBlock,
    Linear,
    Param,
    batch_norm_backward,
    batch_norm_forward,
    dropout_backward,
    dropout_forward,
    grad_check,
    layer_norm_backward,
    layer_norm_forward,
    leaky_relu_backward,
    leaky_relu_forward,
    make_rng,
    mse,
    one_hot,
    softmax_rows,
    weighted_cross_entropy,
)
from .training import negative_pair_loss, positive_pair_loss

TIGHT_TOL = 1e-4   # linear / cross entropy / mse in isolation
WIDE_TOL = 1e-3    # norm layers, dropout, and every composite


def _corrupt(param, fault):
    if fault:
        param.grad *= 1.01


def _check_linear(fault=False):
    rng = make_rng(100)
    lin = Linear(5, 4, rng, dtype=np.float64)
    x = rng.normal(size=(6, 5))
    targets = one_hot(rng.integers(0, 4, size=6), 4, np.float64)
    w = rng.uniform(0.5, 2.0, size=4)

    def loss_fn():
        lin.weight.zero_grad()
        lin.bias.zero_grad()
        logits, cache = lin.forward(x)
        loss, dlogits = weighted_cross_entropy(logits, targets, w)
        lin.backward(cache, dlogits)
        _corrupt(lin.weight, fault)
        return loss

    return [grad_check(loss_fn, lin.weight, TIGHT_TOL, name="linear/weight"),
            grad_check(loss_fn, lin.bias, TIGHT_TOL, name="linear/bias")]


def _check_cross_entropy(fault=False):
    rng = make_rng(101)
    logits = Param.of(rng.normal(size=(5, 4)))
    hard = one_hot(rng.integers(0, 4, size=5), 4, np.float64)
    soft = softmax_rows(rng.normal(size=(5, 4)))
    w = rng.uniform(0.5, 2.0, size=4)
    reports = []
    for label, targets in (("hard", hard), ("soft", soft)):
        def loss_fn():
            logits.zero_grad()
            loss, g = weighted_cross_entropy(logits.value, targets, w)
            logits.grad += g
            _corrupt(logits, fault)
            return loss

        reports.append(grad_check(loss_fn, logits, TIGHT_TOL,
                                  name=f"cross_entropy/{label}"))
    return reports


def _check_mse(fault=False):
    rng = make_rng(102)
    a = Param.of(rng.normal(size=(4, 3)))
    b = Param.of(rng.normal(size=(4, 3)))

    def loss_fn():
        a.zero_grad()
        b.zero_grad()
        loss, da, db = mse(a.value, b.value)
        a.grad += da
        b.grad += db
        _corrupt(a, fault)
        return loss

    return [grad_check(loss_fn, a, TIGHT_TOL, name="mse/a"),
            grad_check(loss_fn, b, TIGHT_TOL, name="mse/b")]


def _input_param_check(name, forward_backward, shape, seed, fault=False,
                       kink_margin=0.0):
    """Check d loss / d input for a parameterless sublayer.

    ``kink_margin`` keeps entries away from 0 for piecewise layers whose
    derivative jumps there (central differences straddle the kink when an
    entry lies within the step of it).
    """
    rng = make_rng(seed)
    values = rng.normal(size=shape)
    if kink_margin:
        values = values + np.sign(values) * kink_margin
    x = Param.of(values)
    coeff = make_rng(seed + 1).normal(size=shape)

    def loss_fn():
        x.zero_grad()
        out, dx_fn = forward_backward(x.value)
        x.grad += dx_fn(coeff)
        _corrupt(x, fault)
        return float((out * coeff).sum())

    return grad_check(loss_fn, x, WIDE_TOL, name=name)


def _check_batch_norm(fault=False):
    def fb(x):
        state = BatchNormState.fresh(x.shape[1], np.float64)
        out, cache = batch_norm_forward(x, state, training=True)
        return out, lambda d: batch_norm_backward(cache, d)

    return [_input_param_check("batch_norm/input", fb, (6, 4), 103, fault)]


def _check_layer_norm(fault=False):
    def fb(x):
        out, cache = layer_norm_forward(x, 1e-5)
        return out, lambda d: layer_norm_backward(cache, d)

    return [_input_param_check("layer_norm/input", fb, (6, 4), 104, fault)]


def _check_dropout(fault=False):
    def fb(x):
        out, cache = dropout_forward(x, 0.5, True, make_rng(4242))
        return out, lambda d: dropout_backward(cache, d)

    return [_input_param_check("dropout/input", fb, (5, 6), 105, fault)]


def _check_leaky_relu(fault=False):
    def fb(x):
        out, cache = leaky_relu_forward(x, 0.01)
        return out, lambda d: leaky_relu_backward(cache, 0.01, d)

    return [_input_param_check("leaky_relu/input", fb, (5, 6), 106, fault,
                               kink_margin=0.05)]


def _check_inter_layer_block(fault=False):
    def fb(x):
        block = InterLayerBlock(x.shape[1], dtype=np.float64)
        out, cache = block.forward(x, training=True, rng=make_rng(7))
        return out, lambda d: block.backward(cache, d)

    return [_input_param_check("inter_layer_block/input", fb, (6, 5), 107, fault)]


def _check_mlp(fault=False):
    rng = make_rng(108)
    model = MLPModel(5, 3, rng, hidden=6, dtype=np.float64)
    x = rng.normal(size=(7, 5))
    targets = one_hot(rng.integers(0, 3, size=7), 3, np.float64)

    def loss_fn():
        model.zero_grads()
        logits, cache = model.forward(x, training=True, rng=make_rng(11))
        loss, g = weighted_cross_entropy(logits, targets, np.ones(3))
        model.backward(cache, g)
        _corrupt(model.layer2.weight, fault)
        return loss

    return [grad_check(loss_fn, p, WIDE_TOL, name=f"mlp/param{i}")
            for i, p in enumerate(model.params())]


def _check_gcn(fault=False):
    rng = make_rng(109)
    n = 7
    feats = rng.normal(size=(n, 4)).astype(np.float32)
    edges = np.array([[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [0, 6]])
    g = Graph(feats, edges, 3, np.zeros(n, dtype=np.int64))
    model = GCNModel(4, 3, rng, hidden=5, dtype=np.float64)
    model.adjacency = normalized_adjacency(g)
    x = feats.astype(np.float64)
    targets = one_hot(rng.integers(0, 3, size=n), 3, np.float64)

    def loss_fn():
        model.zero_grads()
        logits, cache = model.forward(x, training=True, rng=make_rng(12))
        loss, gr = weighted_cross_entropy(logits, targets, np.ones(3))
        model.backward(cache, gr)
        _corrupt(model.layer1.weight, fault)
        return loss

    return [grad_check(loss_fn, p, WIDE_TOL, name=f"gcn/param{i}")
            for i, p in enumerate(model.params())]


def _check_forked(fault=False):
    # norm layers in eval mode: the full two-head composite
    rng = make_rng(110)
    model = ForkedMLP(4, 3, rng, hidden=5, dtype=np.float64)
    x = rng.normal(size=(6, 4))
    targets = one_hot(rng.integers(0, 3, size=6), 3, np.float64)

    def loss_fn():
        model.zero_grads()
        (z, s), cache = model.forward(x, training=False)
        l1, dz = weighted_cross_entropy(z, targets, np.ones(3))
        l2, ds = weighted_cross_entropy(s, targets, np.ones(3))
        l3, da, db = mse(z, s)
        model.backward(cache, dz + da, ds + db)
        _corrupt(model.hidden1.weight, fault)
        return l1 + l2 + l3

    return [grad_check(loss_fn, p, WIDE_TOL, name=f"forked_mlp/param{i}")
            for i, p in enumerate(model.params())]


def _check_linkdist_loss(fault=False):
    rng = make_rng(111)
    model = ForkedMLP(3, 2, rng, hidden=4, dtype=np.float64)
    x_i = rng.normal(size=(4, 3))
    x_j = rng.normal(size=(4, 3))
    lab_i = np.array([True, False, True, False])
    lab_j = np.array([False, True, False, False])
    y_i = np.array([0, 1])
    y_j = np.array([1])
    w = np.array([1.0, 1.5])
    alpha = 0.7

    def loss_fn():
        model.zero_grads()
        ce, m = positive_pair_loss(model, x_i, x_j, lab_i, y_i, lab_j, y_j,
                                   w, alpha, False, None)
        _corrupt(model.inference_head.weight, fault)
        return ce + alpha * m

    return [grad_check(loss_fn, p, WIDE_TOL, name=f"linkdist_loss/param{i}")
            for i, p in enumerate(model.params())]


def _check_colinkdist_loss(fault=False):
    # The repulsion CE freezes its targets, so the finite-difference side
    # must evaluate the same frozen objective: gradients come from
    # negative_pair_loss, values from a frozen-target recomputation.
    rng = make_rng(112)
    model = ForkedMLP(3, 3, rng, hidden=4, dtype=np.float64)
    x_i = rng.normal(size=(3, 3))
    x_k = rng.normal(size=(3, 3))
    lab_i = np.array([True, False, False])
    lab_k = np.array([False, True, False])
    y_i = np.array([0])
    y_k = np.array([2])
    w = np.ones(3)
    alpha = 0.6
    unit = np.ones(3)

    (z_i0, _), _ = model.forward(x_i, training=False)
    (z_k0, _), _ = model.forward(x_k, training=False)
    frozen_t_k = softmax_rows(z_k0).copy()
    frozen_t_i = softmax_rows(z_i0).copy()

    def loss_fn():
        model.zero_grads()
        negative_pair_loss(model, x_i, x_k, lab_i, y_i, lab_k, y_k, w, alpha,
                           False, None)
        _corrupt(model.hidden2.weight, fault)
        (z_i, s_i), _ = model.forward(x_i, training=False)
        (z_k, s_k), _ = model.forward(x_k, training=False)
        value = 0.0
        value += weighted_cross_entropy(z_i[lab_i], one_hot(y_i, 3, np.float64),
                                        w)[0]
        value += weighted_cross_entropy(z_k[lab_k], one_hot(y_k, 3, np.float64),
                                        w)[0]
        value -= weighted_cross_entropy(s_i, frozen_t_k, unit)[0]
        value -= weighted_cross_entropy(s_k, frozen_t_i, unit)[0]
        value -= alpha * (mse(z_i, s_k)[0] + mse(z_k, s_i)[0])
        return value

    return [grad_check(loss_fn, p, WIDE_TOL, name=f"colinkdist_loss/param{i}")
            for i, p in enumerate(model.params())]


_COMPONENTS = (
    ("linear", _check_linear),
    ("cross_entropy", _check_cross_entropy),
    ("mse", _check_mse),
    ("batch_norm", _check_batch_norm),
    ("layer_norm", _check_layer_norm),
    ("dropout", _check_dropout),
    ("leaky_relu", _check_leaky_relu),
    ("inter_layer_block", _check_inter_layer_block),
    ("mlp", _check_mlp),
    ("gcn", _check_gcn),
    ("forked_mlp", _check_forked),
    ("linkdist_loss", _check_linkdist_loss),
    ("colinkdist_loss", _check_colinkdist_loss),
)

COMPONENT_NAMES = tuple(name for name, _ in _COMPONENTS)


def gradcheck_suite(inject_fault: str | None = None):
    """Run every component check; returns the list of GradCheckReports."""
    if inject_fault is not None and inject_fault not in COMPONENT_NAMES:
        raise ValueError(f"unknown component {inject_fault!r}; "
                         f"choose from {COMPONENT_NAMES}")
    reports = []
    for name, check in _COMPONENTS:
        reports.extend(check(fault=(name == inject_fault)))
    return reports
