"""The three architectures and the two inference modes.

All three networks share the same skeleton: three linear layers of width
256 with an inter-layer block (BatchNorm, LayerNorm, Dropout, LeakyReLU)
after each hidden layer.  The forked variant replaces the single output
layer with two heads reading the same hidden representation: one predicts
the node's own label (``z``), the other the label of an adjacent node
(``s``).

Forward passes return ``(output, cache)``; hand the cache back to
``backward`` together with the upstream gradient.  Evaluation callers can
ignore the cache.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .graph import Graph
from .nn import DimensionError, InterLayerBlock, Linear

HIDDEN_WIDTH = 256


def _block_settings(block: InterLayerBlock) -> dict:
    return {
        "dropout_p": block.dropout_p,
        "leaky_slope": block.leaky_slope,
        "layer_norm_eps": block.layer_norm_eps,
        "bn_momentum": block.batch_norm.momentum,
        "bn_eps": block.batch_norm.eps,
    }


class MLPModel:
    """Plain 3-layer perceptron: in -> 256 -> 256 -> classes."""

    architecture = "mlp"

    def __init__(self, in_dim, num_classes, rng=None, hidden=HIDDEN_WIDTH,
                 dtype=np.float32):
        self.in_dim = in_dim
        self.hidden = hidden
        self.num_classes = num_classes
        self.layer1 = Linear(in_dim, hidden, rng, dtype)
        self.layer2 = Linear(hidden, hidden, rng, dtype)
        self.layer3 = Linear(hidden, num_classes, rng, dtype)
        self.block1 = InterLayerBlock(hidden, dtype=dtype)
        self.block2 = InterLayerBlock(hidden, dtype=dtype)

    def params(self):
        return self.layer1.params() + self.layer2.params() + self.layer3.params()

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    def forward(self, x, training=False, rng=None):
        h, c1 = self.layer1.forward(x)
        h, cb1 = self.block1.forward(h, training, rng)
        h, c2 = self.layer2.forward(h)
        h, cb2 = self.block2.forward(h, training, rng)
        out, c3 = self.layer3.forward(h)
        return out, (c1, cb1, c2, cb2, c3)

    def backward(self, cache, dout):
        c1, cb1, c2, cb2, c3 = cache
        d = self.layer3.backward(c3, dout)
        d = self.block2.backward(cb2, d)
        d = self.layer2.backward(c2, d)
        d = self.block1.backward(cb1, d)
        return self.layer1.backward(c1, d)


class GCNModel:
    """Graph convolution: each layer averages neighbor rows (including the
    node itself) with the row-stochastic (D+I)^-1 (A+I) matrix before the
    linear transform."""

    architecture = "gcn"

    def __init__(self, in_dim, num_classes, rng=None, hidden=HIDDEN_WIDTH,
                 dtype=np.float32, adjacency=None):
        self.in_dim = in_dim
        self.hidden = hidden
        self.num_classes = num_classes
        self.layer1 = Linear(in_dim, hidden, rng, dtype)
        self.layer2 = Linear(hidden, hidden, rng, dtype)
        self.layer3 = Linear(hidden, num_classes, rng, dtype)
        self.block1 = InterLayerBlock(hidden, dtype=dtype)
        self.block2 = InterLayerBlock(hidden, dtype=dtype)
        self.adjacency = adjacency  # row-stochastic CSR, settable per graph view

    def params(self):
        return self.layer1.params() + self.layer2.params() + self.layer3.params()

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    def _propagate(self, x):
        out = self.adjacency @ x
        return out.astype(x.dtype, copy=False)

    def forward(self, features, training=False, rng=None, pre_propagated=None):
        """Full-batch forward over every row of ``features``.

        ``pre_propagated`` may hold a cached ``adjacency @ features`` for the
        first layer (the adjacency and features are constant across epochs,
        so trainers compute it once).
        """
        if self.adjacency is None:
            raise DimensionError("gcn has no adjacency attached")
        if self.adjacency.shape[0] != features.shape[0]:
            raise DimensionError(
                f"adjacency for {self.adjacency.shape[0]} nodes used with "
                f"{features.shape[0]} feature rows"
            )
        ax = self._propagate(features) if pre_propagated is None else pre_propagated
        h, c1 = self.layer1.forward(ax)
        h, cb1 = self.block1.forward(h, training, rng)
        ah = self._propagate(h)
        h, c2 = self.layer2.forward(ah)
        h, cb2 = self.block2.forward(h, training, rng)
        ah2 = self._propagate(h)
        out, c3 = self.layer3.forward(ah2)
        return out, (c1, cb1, c2, cb2, c3)

    def backward(self, cache, dout):
        # gradient through y = A @ x is A^T @ dy; A is not symmetric here
        c1, cb1, c2, cb2, c3 = cache
        at = self.adjacency.T.tocsr()
        d = self.layer3.backward(c3, dout)
        d = (at @ d).astype(dout.dtype, copy=False)
        d = self.block2.backward(cb2, d)
        d = self.layer2.backward(c2, d)
        d = (at @ d).astype(dout.dtype, copy=False)
        d = self.block1.backward(cb1, d)
        d = self.layer1.backward(c1, d)
        # stop here: the first propagation consumed the raw features
        return d


class ForkedMLP:
    """Two shared hidden layers feeding an output head (own label, ``z``)
    and an inference head (adjacent node's label, ``s``)."""

    architecture = "forked_mlp"

    def __init__(self, in_dim, num_classes, rng=None, hidden=HIDDEN_WIDTH,
                 dtype=np.float32):
        self.in_dim = in_dim
        self.hidden = hidden
        self.num_classes = num_classes
        self.hidden1 = Linear(in_dim, hidden, rng, dtype)
        self.hidden2 = Linear(hidden, hidden, rng, dtype)
        self.output_head = Linear(hidden, num_classes, rng, dtype)
        self.inference_head = Linear(hidden, num_classes, rng, dtype)
        self.block1 = InterLayerBlock(hidden, dtype=dtype)
        self.block2 = InterLayerBlock(hidden, dtype=dtype)

    def params(self):
        return (self.hidden1.params() + self.hidden2.params()
                + self.output_head.params() + self.inference_head.params())

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    def forward(self, x, training=False, rng=None):
        h, c1 = self.hidden1.forward(x)
        h, cb1 = self.block1.forward(h, training, rng)
        h, c2 = self.hidden2.forward(h)
        h, cb2 = self.block2.forward(h, training, rng)
        z, cz = self.output_head.forward(h)
        s, cs = self.inference_head.forward(h)
        return (z, s), (c1, cb1, c2, cb2, cz, cs)

    def backward(self, cache, dz, ds):
        c1, cb1, c2, cb2, cz, cs = cache
        dh = self.output_head.backward(cz, dz)
        dh = dh + self.inference_head.backward(cs, ds)
        d = self.block2.backward(cb2, dh)
        d = self.hidden2.backward(c2, d)
        d = self.block1.backward(cb1, d)
        return self.hidden1.backward(c1, d)


def predict_mlp_mode(model: ForkedMLP, x) -> np.ndarray:
    """Class per row from the output head alone; by construction this path
    cannot see the graph.  Argmax ties go to the lowest class id."""
    (z, _), _ = model.forward(x, training=False)
    return np.argmax(z, axis=1)


def predict_mp_mode(model: ForkedMLP, g: Graph, alpha: float) -> np.ndarray:
    """Combine each node's own prediction with its neighbors' adjacent-node
    predictions: score_i = z_i + alpha * sum over neighbors j of s_j."""
    (z, s), _ = model.forward(g.features, training=False)
    adj = g.binary_adjacency()
    neighbor_sum = (adj @ s.astype(np.float64)).astype(z.dtype)
    return np.argmax(z + np.asarray(alpha, dtype=z.dtype) * neighbor_sum, axis=1)


# ---------------------------------------------------------------------------
# Weight snapshots
# ---------------------------------------------------------------------------

_LAYERS = {
    "mlp": ("layer1", "layer2", "layer3"),
    "gcn": ("layer1", "layer2", "layer3"),
    "forked_mlp": ("hidden1", "hidden2", "output_head", "inference_head"),
}

_MODEL_CLASSES = {"mlp": MLPModel, "gcn": GCNModel, "forked_mlp": ForkedMLP}


def save_snapshot(path, model) -> Path:
    """Persist a model as meta.json plus one little-endian .f32 blob per
    weight matrix and per running statistic.  A snapshot is everything an
    MLP-mode deployment needs: no graph file required."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "architecture": model.architecture,
        "in_dim": model.in_dim,
        "hidden": model.hidden,
        "num_classes": model.num_classes,
        "block1": _block_settings(model.block1),
        "block2": _block_settings(model.block2),
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    for name in _LAYERS[model.architecture]:
        layer = getattr(model, name)
        layer.weight.value.astype("<f4").tofile(path / f"{name}.weight.f32")
        layer.bias.value.astype("<f4").tofile(path / f"{name}.bias.f32")
    for bname in ("block1", "block2"):
        bn = getattr(model, bname).batch_norm
        bn.running_mean.astype("<f4").tofile(path / f"{bname}.running_mean.f32")
        bn.running_var.astype("<f4").tofile(path / f"{bname}.running_var.f32")
    return path


def load_snapshot(path):
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    cls = _MODEL_CLASSES[meta["architecture"]]
    model = cls(meta["in_dim"], meta["num_classes"], rng=None, hidden=meta["hidden"])
    for name in _LAYERS[meta["architecture"]]:
        layer = getattr(model, name)
        w = np.fromfile(path / f"{name}.weight.f32", dtype="<f4")
        layer.weight.value[:] = w.reshape(layer.weight.shape)
        b = np.fromfile(path / f"{name}.bias.f32", dtype="<f4")
        layer.bias.value[:] = b.reshape(layer.bias.shape)
    for bname in ("block1", "block2"):
        block = getattr(model, bname)
        cfg = meta[bname]
        block.dropout_p = cfg["dropout_p"]
        block.leaky_slope = cfg["leaky_slope"]
        block.layer_norm_eps = cfg["layer_norm_eps"]
        block.batch_norm.momentum = cfg["bn_momentum"]
        block.batch_norm.eps = cfg["bn_eps"]
        block.batch_norm.running_mean = np.fromfile(
            path / f"{bname}.running_mean.f32", dtype="<f4").astype(np.float32)
        block.batch_norm.running_var = np.fromfile(
            path / f"{bname}.running_var.f32", dtype="<f4").astype(np.float32)
    return model


def copy_weights(dst, src):
    """Copy parameter values and running stats from src into dst (same
    architecture and dims); optimizer state is not copied."""
    for name in _LAYERS[src.architecture]:
        getattr(dst, name).weight.value[:] = getattr(src, name).weight.value
        getattr(dst, name).bias.value[:] = getattr(src, name).bias.value
    for bname in ("block1", "block2"):
        getattr(dst, bname).batch_norm.running_mean = \
            getattr(src, bname).batch_norm.running_mean.copy()
        getattr(dst, bname).batch_norm.running_var = \
            getattr(src, bname).batch_norm.running_var.copy()
    return dst
