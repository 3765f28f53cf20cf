"""Graph container, dataset splits, training views, and edge bookkeeping.

A :class:`Graph` is an undirected graph held in memory: float32 node
features, optional integer labels, and an edge list storing each
unordered pair once.  On-disk persistence uses a small directory format
(``meta.json`` plus raw little-endian arrays) described in
:func:`save_container`.

Access to the edge list goes through the ``edges`` property, which counts
reads; evaluation paths that promise not to look at the graph structure
are audited against that counter.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class ContainerFormatError(ValueError):
    """On-disk container contents disagree with its meta file."""


class GraphValidationError(ValueError):
    """Graph data violates a structural invariant."""


class InsufficientNodesError(ValueError):
    """Not enough nodes to build the requested split."""


class NoEdgesError(ValueError):
    """The operation needs at least one edge."""


class SamplingError(ValueError):
    """Negative-pair sampling needs at least two visible nodes."""


class Graph:
    """Undirected graph: features [N, F], optional labels [N], edges [E, 2].

    Each undirected edge is stored exactly once.  Edge-list reads are
    counted in ``adjacency_reads``.
    """

    def __init__(self, features, edges, num_classes, labels=None, name=""):
        features = np.ascontiguousarray(features, dtype=np.float32)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = features.shape[0]
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise GraphValidationError(
                    f"edge endpoint out of range [0, {n}) in {edges[np.argmax(edges.max(axis=1) >= n)]}"
                )
            lo = edges.min(axis=1)
            hi = edges.max(axis=1)
            selfloops = np.nonzero(lo == hi)[0]
            if selfloops.size:
                raise GraphValidationError(
                    f"self-loop edge at index {selfloops[0]}: {tuple(edges[selfloops[0]])}"
                )
            keys = lo.astype(np.int64) * n + hi
            uniq, counts = np.unique(keys, return_counts=True)
            if np.any(counts > 1):
                dup = uniq[np.argmax(counts > 1)]
                raise GraphValidationError(
                    f"duplicate undirected edge ({dup // n}, {dup % n})"
                )
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != n:
                raise GraphValidationError(
                    f"{labels.shape[0]} labels for {n} nodes"
                )
            if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
                raise GraphValidationError(
                    f"label out of range [0, {num_classes})"
                )
        self.features = features
        self._edges = edges
        self.num_classes = int(num_classes)
        self.labels = labels
        self.name = name
        self.adjacency_reads = 0

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self._edges.shape[0]

    @property
    def edges(self) -> np.ndarray:
        """The [E, 2] edge array.  Every access is counted."""
        self.adjacency_reads += 1
        return self._edges

    def binary_adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency without self-loops, float64 CSR with
        sorted column indices (so neighbor sums accumulate in ascending
        neighbor-id order)."""
        e = self.edges
        n = self.num_nodes
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        a = sp.csr_matrix(
            (np.ones(rows.shape[0], dtype=np.float64), (rows, cols)), shape=(n, n)
        )
        a.sort_indices()
        return a


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """Row-stochastic (degree+1)^-1 (adjacency + identity), float64 CSR.

    Row i holds 1/(d_i + 1) at column i and at each neighbor; isolated
    nodes get an identity row.
    """
    a = g.binary_adjacency()
    n = g.num_nodes
    a = a + sp.identity(n, dtype=np.float64, format="csr")
    deg = np.asarray(a.sum(axis=1)).reshape(-1)
    inv = 1.0 / deg
    norm = sp.diags(inv) @ a
    norm = norm.tocsr()
    norm.sort_indices()
    return norm


def average_degree(g: Graph) -> float:
    return 2.0 * g.num_edges / g.num_nodes


def epoch_budget(g: Graph, base: int = 200) -> int:
    """Edge-iteration trainers run ceil(base / average degree) epochs."""
    if g.num_edges == 0:
        raise NoEdgesError("epoch budget undefined for a graph with no edges")
    return max(1, math.ceil(base / average_degree(g)))


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


@dataclass
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=bool))
        if not (self.train.shape == self.val.shape == self.test.shape):
            raise GraphValidationError("split masks must share one shape")
        overlap = (self.train & self.val) | (self.train & self.test) | (self.val & self.test)
        if overlap.any():
            raise GraphValidationError(
                f"split masks overlap at node {int(np.argmax(overlap))}"
            )

    @property
    def eval_mask(self) -> np.ndarray:
        return self.val | self.test

    def counts(self):
        return int(self.train.sum()), int(self.val.sum()), int(self.test.sum())


def make_semi_split(g: Graph, rng, per_class: int = 20, val_size: int = 500,
                    test_size: int = 1000) -> SplitMasks:
    """At most ``per_class`` training nodes per class, then disjoint
    validation and test sets sampled from the remainder."""
    if g.labels is None:
        raise GraphValidationError("semi split needs labels")
    n = g.num_nodes
    train = np.zeros(n, dtype=bool)
    for c in range(g.num_classes):
        members = np.nonzero(g.labels == c)[0]
        take = min(per_class, members.shape[0])
        if take:
            train[rng.choice(members, size=take, replace=False)] = True
    rest = np.nonzero(~train)[0]
    if rest.shape[0] < val_size + test_size:
        raise InsufficientNodesError(
            f"{rest.shape[0]} nodes left after the training draw; "
            f"need {val_size + test_size} for validation + test"
        )
    picked = rng.choice(rest, size=val_size + test_size, replace=False)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[picked[:val_size]] = True
    test[picked[val_size:]] = True
    return SplitMasks(train, val, test)


def make_full_split(g: Graph, rng) -> SplitMasks:
    """60% train; the rest halved into validation and test (validation
    receives the extra node when the remainder is odd)."""
    if g.labels is None:
        raise GraphValidationError("full split needs labels")
    n = g.num_nodes
    if n < 5:
        raise InsufficientNodesError(f"full split needs >= 5 nodes, got {n}")
    n_train = (6 * n + 5) // 10  # round(0.6 n) in exact integer arithmetic
    order = rng.permutation(n)
    rest = n - n_train
    n_val = rest - rest // 2
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    train[order[:n_train]] = True
    val[order[n_train:n_train + n_val]] = True
    test[order[n_train + n_val:]] = True
    return SplitMasks(train, val, test)


# ---------------------------------------------------------------------------
# Training views
# ---------------------------------------------------------------------------

TRANSDUCTIVE = "transductive"
INDUCTIVE = "inductive"


class TrainView:
    """What a trainer is allowed to see.

    Transductive: every node and edge.  Inductive: validation/test nodes
    and any edge touching them are hidden.  Trainers must fetch features
    and labels through the view; reads of masked features and of
    evaluation-set labels are counted so leak-freeness can be audited
    (the counters should stay 0 for the whole run).
    """

    def __init__(self, graph: Graph, masks: SplitMasks, setting: str):
        if setting not in (TRANSDUCTIVE, INDUCTIVE):
            raise ValueError(f"unknown setting {setting!r}")
        self.graph = graph
        self.masks = masks
        self.setting = setting
        n = graph.num_nodes
        if setting == TRANSDUCTIVE:
            self.visible_nodes = np.ones(n, dtype=bool)
            self.edge_index = np.arange(graph.num_edges)
        else:
            self.visible_nodes = ~masks.eval_mask
            e = graph.edges
            keep = self.visible_nodes[e[:, 0]] & self.visible_nodes[e[:, 1]]
            self.edge_index = np.nonzero(keep)[0]
        self.visible_edges = graph.edges[self.edge_index]
        self.masked_feature_reads = 0
        self.eval_label_reads = 0

    @property
    def num_visible_edges(self) -> int:
        return self.visible_edges.shape[0]

    def visible_node_ids(self) -> np.ndarray:
        return np.nonzero(self.visible_nodes)[0]

    def features(self, node_ids) -> np.ndarray:
        node_ids = np.asarray(node_ids)
        self.masked_feature_reads += int((~self.visible_nodes[node_ids]).sum())
        return self.graph.features[node_ids]

    def labels(self, node_ids) -> np.ndarray:
        node_ids = np.asarray(node_ids)
        self.eval_label_reads += int(self.masks.eval_mask[node_ids].sum())
        return self.graph.labels[node_ids]

    # -- local (subgraph) coordinates, used by full-batch trainers --------

    def local_node_ids(self) -> np.ndarray:
        return self.visible_node_ids()

    def to_local(self, global_ids) -> np.ndarray:
        lookup = np.full(self.graph.num_nodes, -1, dtype=np.int64)
        lookup[self.visible_node_ids()] = np.arange(int(self.visible_nodes.sum()))
        local = lookup[np.asarray(global_ids)]
        if np.any(local < 0):
            raise GraphValidationError("node not visible in this view")
        return local

    def local_features(self) -> np.ndarray:
        return self.features(self.visible_node_ids())

    def local_normalized_adjacency(self) -> sp.csr_matrix:
        """Row-stochastic adjacency of the visible subgraph."""
        ids = self.visible_node_ids()
        n_local = ids.shape[0]
        local = self.to_local(self.visible_edges.reshape(-1)).reshape(-1, 2) \
            if self.visible_edges.size else np.zeros((0, 2), dtype=np.int64)
        rows = np.concatenate([local[:, 0], local[:, 1], np.arange(n_local)])
        cols = np.concatenate([local[:, 1], local[:, 0], np.arange(n_local)])
        a = sp.csr_matrix(
            (np.ones(rows.shape[0], dtype=np.float64), (rows, cols)),
            shape=(n_local, n_local),
        )
        deg = np.asarray(a.sum(axis=1)).reshape(-1)
        norm = sp.diags(1.0 / deg) @ a
        norm = norm.tocsr()
        norm.sort_indices()
        return norm


def build_train_view(g: Graph, masks: SplitMasks, setting: str) -> TrainView:
    return TrainView(g, masks, setting)


# ---------------------------------------------------------------------------
# Edge-iteration bookkeeping: alpha and class weights
# ---------------------------------------------------------------------------


@dataclass
class AlphaSchedule:
    """Distillation weight: 1 minus the labelled fraction of edge endpoints."""

    n_labelled_endpoints: int
    total_endpoints: int
    alpha: float


def alpha_schedule(view: TrainView, masks: SplitMasks) -> AlphaSchedule:
    e = view.visible_edges
    if e.shape[0] == 0:
        raise NoEdgesError("alpha undefined on a view with no edges")
    endpoints = e.reshape(-1)
    n_lab = int(masks.train[endpoints].sum())
    total = endpoints.shape[0]
    return AlphaSchedule(n_lab, total, 1.0 - n_lab / total)


@dataclass
class ClassWeights:
    """Per-class CE weights: node-set label distribution over the
    edge-endpoint label distribution (training labels only)."""

    node_dist: np.ndarray
    endpoint_dist: np.ndarray
    weights: np.ndarray
    floored_classes: list


def class_weights(view: TrainView, masks: SplitMasks) -> ClassWeights:
    g = view.graph
    c = g.num_classes
    train_ids = np.nonzero(masks.train)[0]
    if train_ids.size == 0:
        raise GraphValidationError("class weights need at least one training label")
    y_n = np.bincount(g.labels[train_ids], minlength=c).astype(np.float64)
    y_n /= y_n.sum()

    endpoints = view.visible_edges.reshape(-1)
    lab_endpoints = endpoints[masks.train[endpoints]]
    if lab_endpoints.size == 0:
        raise GraphValidationError("class weights need a labelled edge endpoint")
    counts = np.bincount(g.labels[lab_endpoints], minlength=c).astype(np.float64)
    y_e = counts / counts.sum()

    floored = [int(k) for k in np.nonzero((y_n > 0) & (y_e == 0))[0]]
    if floored:
        warnings.warn(
            f"classes {floored} appear in training labels but on no visible "
            f"edge endpoint; flooring their endpoint frequency",
            stacklevel=2,
        )
    y_e_adj = y_e.copy()
    floor = 1.0 / (2 * view.num_visible_edges)
    y_e_adj[floored] = floor
    weights = np.zeros(c, dtype=np.float64)
    present = y_n > 0
    weights[present] = y_n[present] / y_e_adj[present]
    return ClassWeights(y_n, y_e, weights, floored)


def sample_negative_pairs(view: TrainView, count: int, rng) -> np.ndarray:
    """Uniform-with-replacement node pairs from the visible set.

    Pairs with identical endpoints are redrawn; pairs that happen to be
    real edges are kept (the sampler never consults the edge list).
    """
    ids = view.visible_node_ids()
    if ids.shape[0] < 2:
        raise SamplingError(
            f"negative sampling needs >= 2 visible nodes, got {ids.shape[0]}"
        )
    left = ids[rng.integers(0, ids.shape[0], size=count)]
    right = ids[rng.integers(0, ids.shape[0], size=count)]
    clash = left == right
    while clash.any():
        n_clash = int(clash.sum())
        right[clash] = ids[rng.integers(0, ids.shape[0], size=n_clash)]
        clash = left == right
    return np.stack([left, right], axis=1)


# ---------------------------------------------------------------------------
# Synthetic graphs
# ---------------------------------------------------------------------------


def generate_sbm(blocks: int, nodes_per_block: int, p_in: float, p_out: float,
                 feat_dim: int, feat_noise: float, rng) -> Graph:
    """Stochastic block model with block-signature features.

    Labels are block ids.  Features are a one-hot signature of the block
    (index ``block % feat_dim``) plus Gaussian noise.  Each unordered node
    pair is an edge independently with probability p_in (same block) or
    p_out (different blocks).
    """
    if not (0.0 <= p_out < p_in <= 1.0) and not (p_in == p_out == 0.0):
        raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    n = blocks * nodes_per_block
    labels = np.repeat(np.arange(blocks), nodes_per_block)
    feats = np.zeros((n, feat_dim), dtype=np.float32)
    feats[np.arange(n), labels % feat_dim] = 1.0
    if feat_noise > 0:
        feats += (feat_noise * rng.standard_normal((n, feat_dim))).astype(np.float32)

    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(p.shape[0]) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    return Graph(feats, edges, num_classes=blocks, labels=labels, name="sbm")


# ---------------------------------------------------------------------------
# Container persistence
# ---------------------------------------------------------------------------

_META_KEYS = (
    "name", "num_nodes", "num_features", "num_classes", "num_edges",
    "has_labels", "has_predefined_split",
)


def save_container(path, g: Graph, masks: SplitMasks | None = None) -> Path:
    """Write the on-disk container:

    - ``meta.json``: the counts and flags (canonical formatting)
    - ``features.f32``: N x F little-endian float32, row-major
    - ``labels.u16``: N little-endian uint16 class ids (iff labelled)
    - ``edges.u32``: E pairs of little-endian uint32, first id < second
    - ``split.u8`` (optional): N bytes, 0 unused / 1 train / 2 val / 3 test
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": g.name,
        "num_nodes": g.num_nodes,
        "num_features": g.num_features,
        "num_classes": g.num_classes,
        "num_edges": g.num_edges,
        "has_labels": g.labels is not None,
        "has_predefined_split": masks is not None,
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    g.features.astype("<f4").tofile(path / "features.f32")
    e = g._edges
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    np.stack([lo, hi], axis=1).astype("<u4").tofile(path / "edges.u32")
    if g.labels is not None:
        g.labels.astype("<u2").tofile(path / "labels.u16")
    if masks is not None:
        split = np.zeros(g.num_nodes, dtype=np.uint8)
        split[masks.train] = 1
        split[masks.val] = 2
        split[masks.test] = 3
        split.tofile(path / "split.u8")
    return path


def load_container(path):
    """Read a container directory; returns (Graph, SplitMasks or None)."""
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.is_file():
        raise ContainerFormatError(f"no meta.json under {path}")
    meta = json.loads(meta_path.read_text())
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise ContainerFormatError(f"meta.json missing keys {missing}")
    n, f = meta["num_nodes"], meta["num_features"]
    feats = np.fromfile(path / "features.f32", dtype="<f4")
    if feats.size != n * f:
        raise ContainerFormatError(
            f"features.f32 holds {feats.size} values, meta says {n}x{f}"
        )
    edges = np.fromfile(path / "edges.u32", dtype="<u4").astype(np.int64)
    if edges.size != 2 * meta["num_edges"]:
        raise ContainerFormatError(
            f"edges.u32 holds {edges.size // 2} pairs, meta says {meta['num_edges']}"
        )
    edges = edges.reshape(-1, 2)
    if edges.size and np.any(edges[:, 0] >= edges[:, 1]):
        bad = int(np.argmax(edges[:, 0] >= edges[:, 1]))
        raise ContainerFormatError(
            f"edge {bad} = {tuple(edges[bad])} is not ordered first < second"
        )
    labels = None
    if meta["has_labels"]:
        labels = np.fromfile(path / "labels.u16", dtype="<u2").astype(np.int64)
        if labels.size != n:
            raise ContainerFormatError(
                f"labels.u16 holds {labels.size} ids, meta says {n}"
            )
    try:
        g = Graph(feats.reshape(n, f), edges, meta["num_classes"], labels,
                  name=meta["name"])
    except GraphValidationError as err:
        raise ContainerFormatError(str(err)) from err

    masks = None
    if meta["has_predefined_split"]:
        split = np.fromfile(path / "split.u8", dtype=np.uint8)
        if split.size != n:
            raise ContainerFormatError(
                f"split.u8 holds {split.size} bytes, meta says {n}"
            )
        if split.max(initial=0) > 3:
            raise ContainerFormatError("split.u8 codes must be in 0..3")
        masks = SplitMasks(split == 1, split == 2, split == 3)
    return g, masks
