"""End-to-end ordering checks on a citation-like synthetic graph.

The fixture recreates the regime the edge-distillation method is built
for: informative but heavily overlapping bag-of-words features, scarce
labels, homophilous sparse structure.  There the feature-only deployment
of the distilled network must beat a plain MLP by a wide margin, and the
contrastive variant must not fall behind.

This is the heaviest test in the suite (~1 minute): it runs the full
seeded protocol for three methods.
"""

import numpy as np
import pytest

from linkdist.evaluation import run_experiment_paired
from linkdist.graph import Graph, make_semi_split
from linkdist.nn import make_rng


def bow_graph(seed=7, classes=4, per_class=250, feat_dim=140, word_width=70,
              word_stride=18, words_per_node=12, common_mass=0.55):
    rng = make_rng(seed)
    n = classes * per_class
    labels = np.repeat(np.arange(classes), per_class)
    probs = np.full((classes, feat_dim), common_mass / feat_dim)
    for c in range(classes):
        lo = c * word_stride
        probs[c, lo:lo + word_width] += (1 - common_mass) / word_width
    feats = np.zeros((n, feat_dim), dtype=np.float32)
    for i in range(n):
        pw = probs[labels[i]] / probs[labels[i]].sum()
        feats[i, rng.choice(feat_dim, size=words_per_node, p=pw, replace=True)] = 1.0
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], 0.014, 0.0009)
    keep = rng.random(p.shape[0]) < p
    g = Graph(feats, np.stack([iu[keep], ju[keep]], axis=1), classes, labels,
              name="bow-synthetic")
    masks = make_semi_split(g, rng, per_class=10, val_size=200, test_size=400)
    return g, masks


@pytest.fixture(scope="module")
def summaries():
    g, masks = bow_graph()
    out = {}
    for method in ("mlp", "linkdist", "colinkdist"):
        paired, _ = run_experiment_paired(method, g, masks, "semi-transductive",
                                          n_runs=2, base_seed=0,
                                          dataset_name=g.name)
        for mode, s in paired.items():
            out[(method, mode)] = s
    return out


def test_distilled_mlp_beats_plain_mlp_by_wide_margin(summaries):
    gap = summaries[("linkdist", "mlp")].mean_acc - summaries[("mlp", "mlp")].mean_acc
    assert gap >= 0.08, f"LinkDistMLP gap over MLP only {100 * gap:.2f} points"


def test_contrastive_training_does_not_hurt_feature_only_mode(summaries):
    co = summaries[("colinkdist", "mlp")].mean_acc
    base = summaries[("linkdist", "mlp")].mean_acc
    assert co >= base - 0.005


def test_neighbor_combination_beats_feature_only_mode(summaries):
    assert summaries[("linkdist", "mp")].mean_acc >= \
        summaries[("linkdist", "mlp")].mean_acc


def test_selection_used_best_validation_epoch(summaries):
    for s in summaries.values():
        for run in s.per_run:
            vals = [v for v, _ in run.epochs]
            assert run.best_val_acc == max(vals)
            assert run.epochs[run.selected_epoch][1] == run.selected_test_acc
