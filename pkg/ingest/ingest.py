#!/usr/bin/env python3
"""Fetch the public benchmark graphs and convert them to the container
format used by the linkdist experiments.

    python3 ingest.py <dataset> --out DIR [--raw-dir DIR]
    python3 ingest.py verify DIR

Datasets: cora, citeseer, pubmed (citation networks with predefined
20-per-class / 500 / 1000 splits), cora_full, amazon_photo,
amazon_computer, coauthor_cs, coauthor_physics.

Every conversion is pinned against the published summary counts (nodes,
features, classes, undirected edges); any disagreement is a hard failure
printing both numbers, never a silent acceptance.  Raw edge lists that
store both directions are deduplicated to single unordered pairs and
self-loops are dropped.  Output is canonical (edges sorted
lexicographically, first id < second id) so re-running is byte-identical.

Container layout (little-endian):
    meta.json      counts and flags
    features.f32   num_nodes x num_features float32, row-major
    labels.u16     num_nodes uint16 class ids
    edges.u32      num_edges (first, second) uint32 pairs
    split.u8       optional: 0 unused / 1 train / 2 val / 3 test
    checksums.json sha256 of each emitted file

Note dense features: the co-author graphs expand to roughly a gigabyte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import pickle
import sys
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

PLANETOID_BASE = "https://github.com/kimiyoung/planetoid/raw/master/data"
BENCHMARK_BASE = "https://github.com/shchur/gnn-benchmark/raw/master/data/npz"
CORA_FULL_URL = ("https://github.com/abojchevski/graph2gauss/raw/master/data/"
                 "cora_full.npz")

PLANETOID_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")


@dataclass
class SourceSpec:
    key: str
    kind: str                   # "planetoid" | "npz"
    upstream: str               # identifier within the distribution channel
    num_nodes: int
    num_features: int
    num_classes: int
    num_edges: int              # undirected, deduplicated
    has_predefined_split: bool
    container_sha256: str | None = None  # pin after first trusted conversion


SPECS = {
    "cora": SourceSpec("cora", "planetoid", "cora", 2708, 1433, 7, 5278, True),
    "citeseer": SourceSpec("citeseer", "planetoid", "citeseer",
                           3327, 3703, 6, 4552, True),
    "pubmed": SourceSpec("pubmed", "planetoid", "pubmed",
                         19717, 500, 3, 44324, True),
    "cora_full": SourceSpec("cora_full", "npz", CORA_FULL_URL,
                            19793, 8710, 70, 63421, False),
    "amazon_photo": SourceSpec(
        "amazon_photo", "npz", f"{BENCHMARK_BASE}/amazon_electronics_photo.npz",
        7650, 745, 8, 119081, False),
    "amazon_computer": SourceSpec(
        "amazon_computer", "npz",
        f"{BENCHMARK_BASE}/amazon_electronics_computers.npz",
        13752, 767, 10, 245861, False),
    "coauthor_cs": SourceSpec(
        "coauthor_cs", "npz", f"{BENCHMARK_BASE}/ms_academic_cs.npz",
        18333, 6805, 15, 81894, False),
    "coauthor_physics": SourceSpec(
        "coauthor_physics", "npz", f"{BENCHMARK_BASE}/ms_academic_phy.npz",
        34493, 8415, 5, 247962, False),
}


class IngestError(RuntimeError):
    pass


class CountMismatch(IngestError):
    def __init__(self, dataset, field, got, expected):
        super().__init__(
            f"{dataset}: {field} mismatch: converted {got}, published {expected}")


# ---------------------------------------------------------------------------
# fetching
# ---------------------------------------------------------------------------


def fetch(url: str, dest: Path):
    if dest.is_file():
        return dest
    dest.parent.mkdir(parents=True, exist_ok=True)
    print(f"  downloading {url}")
    try:
        with urllib.request.urlopen(url, timeout=120) as resp:
            data = resp.read()
    except OSError as err:
        raise IngestError(
            f"cannot download {url}: {err}. "
            f"Pre-download the raw files into the --raw-dir instead.") from err
    dest.write_bytes(data)
    return dest


def planetoid_raw_paths(spec: SourceSpec, raw_dir: Path):
    return {part: raw_dir / f"ind.{spec.upstream}.{part}"
            for part in PLANETOID_PARTS}


def fetch_raw(spec: SourceSpec, raw_dir: Path):
    if spec.kind == "planetoid":
        for part, path in planetoid_raw_paths(spec, raw_dir).items():
            fetch(f"{PLANETOID_BASE}/ind.{spec.upstream}.{part}", path)
    else:
        fetch(spec.upstream, raw_dir / f"{spec.key}.npz")


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _unpickle(path: Path):
    with path.open("rb") as fh:
        return pickle.load(fh, encoding="latin1")


def parse_planetoid(spec: SourceSpec, raw_dir: Path):
    """Rebuild the full node ordering from the allx/tx split.

    Node order: the allx rows first, then the test range.  test.index maps
    tx rows into that range; ids missing from test.index (isolated test
    nodes in citeseer) keep zero features, class 0, and no split flag.
    """
    paths = planetoid_raw_paths(spec, raw_dir)
    missing = [p.name for p in paths.values() if not p.is_file()]
    if missing:
        raise IngestError(f"{spec.key}: missing raw files {missing}")
    x = _unpickle(paths["x"])
    y = np.asarray(_unpickle(paths["y"]))
    tx = _unpickle(paths["tx"])
    ty = np.asarray(_unpickle(paths["ty"]))
    allx = _unpickle(paths["allx"])
    ally = np.asarray(_unpickle(paths["ally"]))
    graph = _unpickle(paths["graph"])
    test_idx = np.loadtxt(paths["test.index"], dtype=np.int64)

    lo, hi = int(test_idx.min()), int(test_idx.max())
    span = hi - lo + 1
    n = allx.shape[0] + span
    f = allx.shape[1]
    c = ally.shape[1]

    feats = np.zeros((n, f), dtype=np.float32)
    feats[:allx.shape[0]] = np.asarray(allx.todense(), dtype=np.float32)
    feats[test_idx] = np.asarray(tx.todense(), dtype=np.float32)

    onehot = np.zeros((n, c), dtype=np.float32)
    onehot[:ally.shape[0]] = ally
    onehot[test_idx] = ty
    labels = onehot.argmax(axis=1).astype(np.int64)

    pairs = set()
    for u, neighbors in graph.items():
        for v in neighbors:
            if u == v:
                continue
            pairs.add((min(u, v), max(u, v)))
    edges = np.array(sorted(pairs), dtype=np.int64)

    split = np.zeros(n, dtype=np.uint8)
    n_train = y.shape[0]
    split[:n_train] = 1
    # the 500 validation nodes follow the training block inside the allx
    # universe; the test range never contributes validation nodes
    split[n_train:min(n_train + 500, allx.shape[0])] = 2
    split[test_idx] = 3
    return feats, labels, edges, c, split


def parse_npz(spec: SourceSpec, raw_dir: Path):
    """Read a sparse-graph npz bundle (CSR adjacency + CSR or dense
    attributes); symmetrize the adjacency and deduplicate."""
    path = raw_dir / f"{spec.key}.npz"
    if not path.is_file():
        raise IngestError(f"{spec.key}: missing raw file {path}")
    with np.load(path, allow_pickle=True) as loader:
        data = dict(loader)
    adj = sp.csr_matrix(
        (data["adj_data"], data["adj_indices"], data["adj_indptr"]),
        shape=tuple(data["adj_shape"]))
    if "attr_data" in data:
        attrs = sp.csr_matrix(
            (data["attr_data"], data["attr_indices"], data["attr_indptr"]),
            shape=tuple(data["attr_shape"]))
        feats = np.asarray(attrs.todense(), dtype=np.float32)
    else:
        feats = np.asarray(data["attr_matrix"], dtype=np.float32)
    labels = np.asarray(data["labels"], dtype=np.int64)

    coo = adj.tocoo()
    keep = coo.row != coo.col
    lo = np.minimum(coo.row[keep], coo.col[keep]).astype(np.int64)
    hi = np.maximum(coo.row[keep], coo.col[keep]).astype(np.int64)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    c = int(labels.max()) + 1
    return feats, labels, pairs, c, None


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_container(out_dir: Path, name, feats, labels, edges, num_classes,
                    split):
    out_dir.mkdir(parents=True, exist_ok=True)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    meta = {
        "name": name,
        "num_nodes": int(feats.shape[0]),
        "num_features": int(feats.shape[1]),
        "num_classes": int(num_classes),
        "num_edges": int(edges.shape[0]),
        "has_labels": True,
        "has_predefined_split": split is not None,
    }
    (out_dir / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n")
    feats.astype("<f4").tofile(out_dir / "features.f32")
    labels.astype("<u2").tofile(out_dir / "labels.u16")
    edges.astype("<u4").tofile(out_dir / "edges.u32")
    if split is not None:
        split.astype(np.uint8).tofile(out_dir / "split.u8")
    files = sorted(p.name for p in out_dir.iterdir()
                   if p.name != "checksums.json")
    checks = {name: sha256_file(out_dir / name) for name in files}
    (out_dir / "checksums.json").write_text(
        json.dumps(checks, sort_keys=True, indent=2) + "\n")
    return out_dir


def enforce_counts(spec: SourceSpec, feats, labels, edges, num_classes, split):
    got = {
        "num_nodes": feats.shape[0],
        "num_features": feats.shape[1],
        "num_classes": num_classes,
        "num_edges": edges.shape[0],
    }
    for field, value in got.items():
        expected = getattr(spec, field)
        if value != expected:
            raise CountMismatch(spec.key, field, value, expected)
    if spec.has_predefined_split:
        sizes = (int((split == 1).sum()), int((split == 2).sum()),
                 int((split == 3).sum()))
        expected_sizes = (20 * spec.num_classes, 500, 1000)
        if sizes != expected_sizes:
            raise CountMismatch(spec.key, "split sizes", sizes, expected_sizes)


def ingest(key: str, out_dir: Path, raw_dir: Path | None = None,
           download: bool = True) -> Path:
    if key not in SPECS:
        raise IngestError(f"unknown dataset {key!r}; "
                          f"choose from {sorted(SPECS)}")
    spec = SPECS[key]
    raw_dir = raw_dir or (Path("raw_data") / key)
    if download:
        fetch_raw(spec, raw_dir)
    parser = parse_planetoid if spec.kind == "planetoid" else parse_npz
    feats, labels, edges, num_classes, split = parser(spec, raw_dir)
    enforce_counts(spec, feats, labels, edges, num_classes, split)
    path = write_container(out_dir, spec.key, feats, labels, edges,
                           num_classes, split)
    if spec.container_sha256 is not None:
        combined = hashlib.sha256(
            (out_dir / "checksums.json").read_bytes()).hexdigest()
        if combined != spec.container_sha256:
            raise IngestError(
                f"{key}: container checksum {combined} does not match the "
                f"pinned {spec.container_sha256}; upstream data changed")
    print(f"converted {key}: {feats.shape[0]} nodes, {feats.shape[1]} "
          f"features, {num_classes} classes, {edges.shape[0]} edges -> {path}")
    return path


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def verify(container_dir: Path) -> int:
    container_dir = Path(container_dir)
    meta = json.loads((container_dir / "meta.json").read_text())
    problems = []

    checks_path = container_dir / "checksums.json"
    if checks_path.is_file():
        recorded = json.loads(checks_path.read_text())
        for name, digest in recorded.items():
            actual = sha256_file(container_dir / name)
            if actual != digest:
                problems.append(f"checksum failure: {name}")
    else:
        problems.append("no checksums.json")

    n, f = meta["num_nodes"], meta["num_features"]
    feats = np.fromfile(container_dir / "features.f32", dtype="<f4")
    if feats.size != n * f:
        problems.append(f"features.f32 holds {feats.size}, expected {n * f}")
    labels = np.fromfile(container_dir / "labels.u16", dtype="<u2")
    if labels.size != n:
        problems.append(f"labels.u16 holds {labels.size}, expected {n}")
    edges = np.fromfile(container_dir / "edges.u32", dtype="<u4").reshape(-1, 2)
    if edges.shape[0] != meta["num_edges"]:
        problems.append(
            f"edges.u32 holds {edges.shape[0]}, expected {meta['num_edges']}")
    if edges.size:
        if np.any(edges[:, 0] >= edges[:, 1]):
            problems.append("edges not ordered first < second")
        if np.unique(edges, axis=0).shape[0] != edges.shape[0]:
            problems.append("duplicate edges")
        if edges.max() >= n:
            problems.append("edge endpoint out of range")

    avg_degree = 2 * edges.shape[0] / n
    split_sizes = None
    if meta.get("has_predefined_split"):
        split = np.fromfile(container_dir / "split.u8", dtype=np.uint8)
        split_sizes = tuple(int((split == k).sum()) for k in (1, 2, 3))

    spec = SPECS.get(meta["name"])
    if spec is not None:
        for field in ("num_nodes", "num_features", "num_classes", "num_edges"):
            if meta[field] != getattr(spec, field):
                problems.append(
                    f"{field}: container {meta[field]}, published "
                    f"{getattr(spec, field)}")
        if spec.has_predefined_split:
            expected = (20 * spec.num_classes, 500, 1000)
            if split_sizes != expected:
                problems.append(
                    f"split sizes {split_sizes}, published {expected}")

    row = (f"{meta['name']:<18} {meta['num_nodes']:>7} {meta['num_features']:>9} "
           f"{meta['num_classes']:>8} {meta['num_edges']:>8} {avg_degree:>12.2f}")
    print(f"{'Dataset':<18} {'#Nodes':>7} {'#Features':>9} {'#Classes':>8} "
          f"{'#Edges':>8} {'Avg Degree':>12}")
    print(row)
    if split_sizes:
        print(f"predefined split: train {split_sizes[0]}, "
              f"val {split_sizes[1]}, test {split_sizes[2]}")
    if problems:
        for p in problems:
            print(f"MISMATCH: {p}", file=sys.stderr)
        return 1
    print("verification passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Convert public graph benchmarks to linkdist containers")
    parser.add_argument("dataset",
                        help="dataset key, or 'verify' to check a container")
    parser.add_argument("target", nargs="?",
                        help="container directory (verify mode)")
    parser.add_argument("--out", type=Path, help="output container directory")
    parser.add_argument("--raw-dir", type=Path,
                        help="directory holding (or receiving) raw files")
    parser.add_argument("--no-download", action="store_true",
                        help="only use files already in --raw-dir")
    args = parser.parse_args(argv)

    try:
        if args.dataset == "verify":
            if not args.target:
                parser.error("verify needs a container directory")
            return verify(Path(args.target))
        if args.out is None:
            parser.error("--out is required for conversion")
        ingest(args.dataset, args.out, args.raw_dir,
               download=not args.no_download)
        return 0
    except IngestError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
