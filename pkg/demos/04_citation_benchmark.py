#!/usr/bin/env python3
"""Run the headline citation-network comparison, if the data is present.

Looks for converted containers (cora, citeseer) under $LINKDIST_DATA_DIR
or tests/fixtures/.  To materialize them on a machine with network
access:

    python3 ingest/ingest.py cora --out tests/fixtures/cora
    python3 ingest/ingest.py citeseer --out tests/fixtures/citeseer

Published reference points (semi-supervised, transductive, 10 runs,
test accuracy % at best validation): MLP 56.28, GCN 76.47,
LinkDistMLP 80.79, CoLinkDistMLP 81.19 on the Cora split.
"""

import os
import sys
from pathlib import Path

from linkdist.evaluation import run_experiment_paired
from linkdist.graph import load_container

ROOTS = [Path(__file__).resolve().parents[1] / "tests" / "fixtures"]
if os.environ.get("LINKDIST_DATA_DIR"):
    ROOTS.insert(0, Path(os.environ["LINKDIST_DATA_DIR"]))

RUNS = 10


def find(name):
    for root in ROOTS:
        if (root / name / "meta.json").is_file():
            return root / name
    return None


any_found = False
for dataset in ("cora", "citeseer"):
    path = find(dataset)
    if path is None:
        print(f"{dataset}: container not found under {[str(r) for r in ROOTS]}")
        continue
    any_found = True
    g, masks = load_container(path)
    print(f"\n=== {dataset}: {g.num_nodes} nodes, {g.num_edges} edges, "
          f"predefined split ===")
    for method in ("mlp", "gcn", "linkdist", "colinkdist"):
        summaries, _ = run_experiment_paired(
            method, g, masks, "semi-transductive", n_runs=RUNS, base_seed=0,
            dataset_name=dataset)
        for mode, s in sorted(summaries.items()):
            print(f"  {method:>11s} [{mode:>3s}]: "
                  f"{100 * s.mean_acc:6.2f} ± {100 * s.std_acc:5.2f}")

if not any_found:
    print("\nno citation containers available; see the module docstring "
          "for how to fetch them")
    sys.exit(1)
