"""Graph storage, adjacency normalization, bundle I/O, synthetic graphs, edge splits.

The on-disk dataset bundle is plain text so it can be produced and audited
anywhere: ``meta.txt`` (``n=``/``m=``/``classes=``), ``edges.tsv``,
``features.tsv``, ``labels.tsv`` and ``train.idx``/``val.idx``/``test.idx``.
Lines starting with ``#`` are ignored in every file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sparse import CsrMatrix


class BundleError(ValueError):
    """Malformed dataset bundle; message names the offending file and line."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}" if line is None else f"{path}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with dense node features, labels and split masks.

    The stored adjacency is binary, symmetric and has an empty diagonal;
    self-loops only appear inside the normalized propagation operators.
    A label of -1 marks an unlabeled node.
    """

    n: int
    adjacency: CsrMatrix
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        for name in ("train_mask", "val_mask", "test_mask"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=bool))
        a = self.adjacency
        if a.n_rows != self.n or a.n_cols != self.n:
            raise ValueError("adjacency shape does not match node count")
        if self.features.shape[0] != self.n:
            raise ValueError("feature matrix row count does not match node count")
        for name in ("labels", "train_mask", "val_mask", "test_mask"):
            if getattr(self, name).shape != (self.n,):
                raise ValueError(f"{name} must have length n")
        if a.has_diagonal_entries():
            raise ValueError("adjacency must have an empty diagonal")
        if not a.is_symmetric():
            raise ValueError("adjacency must be symmetric")
        overlap = (self.train_mask & self.val_mask) | (self.train_mask & self.test_mask) \
            | (self.val_mask & self.test_mask)
        if overlap.any():
            raise ValueError("train/val/test masks must be pairwise disjoint")

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        labeled = self.labels[self.labels >= 0]
        return int(labeled.max()) + 1 if labeled.size else 0

    @property
    def num_edges(self) -> int:
        """Number of undirected edges (each stored twice in the CSR)."""
        return self.adjacency.nnz // 2


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    """Link-prediction split: reduced training graph plus held-out pair sets."""

    train_adjacency: CsrMatrix
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


# -- adjacency construction and normalization ---------------------------


def adjacency_from_edges(n: int, pairs: np.ndarray) -> CsrMatrix:
    """Binary symmetric adjacency from an edge list; dedupes, drops self-loops."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= n):
        raise ValueError("node index out of range")
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if len(pairs) == 0:
        return CsrMatrix.from_coo(n, n, [], [], [])
    both = np.concatenate([pairs, pairs[:, ::-1]])
    both = np.unique(both, axis=0)
    return CsrMatrix.from_coo(n, n, both[:, 0], both[:, 1], np.ones(len(both)))


def undirected_edges(adjacency: CsrMatrix) -> np.ndarray:
    """Array of (i, j) with i < j, one row per undirected edge."""
    rows, cols = adjacency.row_ids, adjacency.col_indices
    keep = rows < cols
    return np.stack([rows[keep], cols[keep]], axis=1)


def _with_self_loops(adjacency: CsrMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = adjacency.n_rows
    rows = np.concatenate([adjacency.row_ids, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([adjacency.col_indices, np.arange(n, dtype=np.int64)])
    vals = np.concatenate([adjacency.values, np.ones(n)])
    return rows, cols, vals


def _check_propagation_input(adjacency: CsrMatrix) -> None:
    if adjacency.n_rows != adjacency.n_cols:
        raise ValueError("adjacency must be square")
    if adjacency.has_diagonal_entries():
        raise ValueError("adjacency must have an empty diagonal")
    if not adjacency.is_symmetric():
        raise ValueError("adjacency must be symmetric")


def normalize_adjacency(adjacency: CsrMatrix) -> CsrMatrix:
    """Symmetric normalization with self-loops: entry ij becomes 1/sqrt(deg_i deg_j).

    Isolated nodes pick up degree 1 from their self-loop, so no special case
    is needed anywhere downstream.
    """
    _check_propagation_input(adjacency)
    rows, cols, vals = _with_self_loops(adjacency)
    deg = np.bincount(rows, weights=vals, minlength=adjacency.n_rows)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return CsrMatrix.from_coo(adjacency.n_rows, adjacency.n_cols, rows, cols,
                              vals * inv_sqrt[rows] * inv_sqrt[cols])


def mean_adjacency(adjacency: CsrMatrix) -> CsrMatrix:
    """Row-stochastic propagation with self-loops: entry ij becomes 1/deg_i."""
    _check_propagation_input(adjacency)
    rows, cols, vals = _with_self_loops(adjacency)
    deg = np.bincount(rows, weights=vals, minlength=adjacency.n_rows)
    return CsrMatrix.from_coo(adjacency.n_rows, adjacency.n_cols, rows, cols,
                              vals / deg[rows])


def row_normalize_features(features: np.ndarray) -> np.ndarray:
    """Divide each row by its L1 norm; all-zero rows pass through unchanged."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.abs(features).sum(axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return features / norms


# -- bundle I/O ----------------------------------------------------------


def _data_lines(path: Path):
    """Yield (line_number, stripped_text) skipping comments and blank lines."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise BundleError(path, None, "missing file") from None
    for i, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield i, line


def _read_meta(path: Path) -> dict[str, int]:
    meta = {}
    for ln, line in _data_lines(path):
        if "=" not in line:
            raise BundleError(path, ln, f"expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        try:
            meta[key.strip()] = int(value)
        except ValueError:
            raise BundleError(path, ln, f"non-integer value for {key.strip()!r}") from None
    for key in ("n", "m", "classes"):
        if key not in meta:
            raise BundleError(path, None, f"missing meta key {key!r}")
    return meta


def _read_index_file(path: Path, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for ln, line in _data_lines(path):
        try:
            idx = int(line)
        except ValueError:
            raise BundleError(path, ln, f"non-integer node index {line!r}") from None
        if not 0 <= idx < n:
            raise BundleError(path, ln, f"node index out of range: {idx}")
        mask[idx] = True
    return mask


def load_bundle(path) -> Graph:
    """Read a dataset bundle directory into a Graph.

    Edges are deduplicated and symmetrized and self-loops dropped; every
    format violation is reported with its file and line.
    """
    root = Path(path)
    meta = _read_meta(root / "meta.txt")
    n, m, classes = meta["n"], meta["m"], meta["classes"]

    edges_path = root / "edges.tsv"
    src, dst = [], []
    for ln, line in _data_lines(edges_path):
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise BundleError(edges_path, ln, f"expected 'src<TAB>dst', got {line!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise BundleError(edges_path, ln, f"non-integer endpoint in {line!r}") from None
        if not (0 <= a < n and 0 <= b < n):
            raise BundleError(edges_path, ln, "node index out of range")
        src.append(a)
        dst.append(b)
    adjacency = adjacency_from_edges(n, np.stack([src, dst], axis=1) if src else np.empty((0, 2)))

    feat_path = root / "features.tsv"
    features = np.zeros((n, m))
    count = 0
    for ln, line in _data_lines(feat_path):
        if count >= n:
            raise BundleError(feat_path, ln, f"more than n={n} feature rows")
        try:
            row = np.array(line.split("\t"), dtype=np.float64)
        except ValueError:
            raise BundleError(feat_path, ln, "non-numeric feature token") from None
        if row.shape != (m,):
            raise BundleError(feat_path, ln, f"expected {m} features, got {row.shape[0]}")
        features[count] = row
        count += 1
    if count != n:
        raise BundleError(feat_path, None, f"expected n={n} feature rows, got {count}")

    labels_path = root / "labels.tsv"
    labels = np.full(n, -1, dtype=np.int64)
    count = 0
    for ln, line in _data_lines(labels_path):
        if count >= n:
            raise BundleError(labels_path, ln, f"more than n={n} label rows")
        try:
            lab = int(line)
        except ValueError:
            raise BundleError(labels_path, ln, f"non-integer label {line!r}") from None
        if lab != -1 and not 0 <= lab < classes:
            raise BundleError(labels_path, ln, f"label {lab} outside [0, {classes})")
        labels[count] = lab
        count += 1
    if count != n:
        raise BundleError(labels_path, None, f"expected n={n} label rows, got {count}")

    masks = {}
    for name in ("train", "val", "test"):
        masks[name] = _read_index_file(root / f"{name}.idx", n)
    overlap = (masks["train"] & masks["val"]) | (masks["train"] & masks["test"]) \
        | (masks["val"] & masks["test"])
    if overlap.any():
        raise BundleError(root, None,
                          f"overlapping masks at node indices {np.flatnonzero(overlap)[:5].tolist()}")

    return Graph(n, adjacency, features, labels,
                 masks["train"], masks["val"], masks["test"])


def save_bundle(graph: Graph, path, classes: int | None = None) -> None:
    """Write a Graph as a bundle directory (inverse of load_bundle)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    classes = graph.num_classes if classes is None else classes
    (root / "meta.txt").write_text(
        f"n={graph.n}\nm={graph.num_features}\nclasses={classes}\n", encoding="utf-8")
    edges = undirected_edges(graph.adjacency)
    (root / "edges.tsv").write_text(
        "".join(f"{i}\t{j}\n" for i, j in edges), encoding="utf-8")
    (root / "features.tsv").write_text(
        "".join("\t".join(repr(float(v)) for v in row) + "\n" for row in graph.features),
        encoding="utf-8")
    (root / "labels.tsv").write_text(
        "".join(f"{v}\n" for v in graph.labels), encoding="utf-8")
    for name in ("train", "val", "test"):
        mask = getattr(graph, f"{name}_mask")
        (root / f"{name}.idx").write_text(
            "".join(f"{i}\n" for i in np.flatnonzero(mask)), encoding="utf-8")


# -- synthetic data ------------------------------------------------------


def synth_xor_graph(n: int, seed: int) -> Graph:
    """Cycle graph whose labels are a product of the two second-neighbor signs.

    Node i carries feature [s_i, 1] with s_i drawn uniformly from {-1, +1};
    its label is 1 when s_{i-1} * s_{i+1} > 0 (indices mod n). The label is
    therefore a purely multiplicative function of neighboring features, which
    no model linear in the propagated features can express above chance.
    Masks split the nodes 60/20/20 by a seeded shuffle.
    """
    if n < 8 or n % 2 != 0:
        raise ValueError("n must be even and at least 8")
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=n)
    features = np.stack([signs, np.ones(n)], axis=1)
    labels = (signs[np.arange(n) - 1] * signs[(np.arange(n) + 1) % n] > 0).astype(np.int64)
    idx = np.arange(n)
    pairs = np.stack([idx, (idx + 1) % n], axis=1)
    order = rng.permutation(n)
    n_train, n_val = int(0.6 * n), int(0.2 * n)
    train_mask = np.zeros(n, dtype=bool)
    val_mask = np.zeros(n, dtype=bool)
    test_mask = np.zeros(n, dtype=bool)
    train_mask[order[:n_train]] = True
    val_mask[order[n_train:n_train + n_val]] = True
    test_mask[order[n_train + n_val:]] = True
    return Graph(n, adjacency_from_edges(n, pairs), features, labels,
                 train_mask, val_mask, test_mask)


# -- link-prediction splits ----------------------------------------------


def _pair_keys(pairs: np.ndarray, n: int) -> np.ndarray:
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    return lo * n + hi


def sample_nonedges(n: int, count: int, forbidden: set[int], rng,
                    distinct: bool = True) -> np.ndarray:
    """Uniformly sample `count` non-edge pairs whose keys avoid `forbidden`.

    With distinct=True the sample is without replacement (used for fixed
    evaluation sets); otherwise duplicates may occur across draws.
    """
    max_pairs = n * (n - 1) // 2
    if distinct and max_pairs - len(forbidden) < count:
        raise ValueError("negative sampling cannot find enough non-edges")
    seen: set[int] = set()
    out = np.empty((count, 2), dtype=np.int64)
    filled = 0
    attempts = 0
    while filled < count:
        attempts += 1
        if attempts > 200 + 50 * count:
            raise ValueError("negative sampling cannot find enough non-edges")
        batch = rng.integers(0, n, size=(max(count, 64), 2))
        batch = batch[batch[:, 0] != batch[:, 1]]
        for i, j in batch:
            key = int(min(i, j)) * n + int(max(i, j))
            if key in forbidden or (distinct and key in seen):
                continue
            out[filled] = (i, j)
            seen.add(key)
            filled += 1
            if filled == count:
                break
    return out


def split_edges(graph: Graph, val_frac: float, test_frac: float, seed: int) -> EdgeSplit:
    """Hold out edge sets for link prediction.

    Floor(frac * E) edges go to each held-out positive set, matched by an
    equal number of uniformly sampled non-edges (without replacement, fixed
    at split time); the remaining edges are symmetrized into the training
    adjacency.
    """
    if not 0.0 < val_frac + test_frac < 1.0:
        raise ValueError("val_frac + test_frac must lie strictly between 0 and 1")
    edges = undirected_edges(graph.adjacency)
    n_edges = len(edges)
    n_val = int(np.floor(val_frac * n_edges))
    n_test = int(np.floor(test_frac * n_edges))
    if n_val == 0 or n_test == 0:
        raise ValueError("held-out count is zero; graph too small for the requested fractions")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_edges)
    test_pos = edges[order[:n_test]]
    val_pos = edges[order[n_test:n_test + n_val]]
    train_edges = edges[order[n_test + n_val:]]

    forbidden = set(_pair_keys(edges, graph.n).tolist())
    test_neg = sample_nonedges(graph.n, n_test, forbidden, rng)
    forbidden |= set(_pair_keys(test_neg, graph.n).tolist())
    val_neg = sample_nonedges(graph.n, n_val, forbidden, rng)

    return EdgeSplit(adjacency_from_edges(graph.n, train_edges),
                     val_pos, val_neg, test_pos, test_neg)
