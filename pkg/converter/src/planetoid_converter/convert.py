"""Convert the upstream citation-network distribution files to text bundles.

The upstream distribution ships eight files per dataset,
``ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}``: pickled scipy
sparse matrices and one-hot label arrays (Python-2 era pickles, hence
latin1 decoding), a pickled neighbor-list dict, and a plain-text list of
test node indices. The converter reassembles them into the bundle layout
(meta.txt, edges.tsv, features.tsv, labels.tsv, train/val/test.idx):

* node order is allx rows followed by test rows, with the test block
  reordered into test.index positions;
* gaps in the test index range (Citeseer has isolated test documents that
  never received features) are filled with zero feature rows and an
  unlabeled (-1) marker, and excluded from every mask;
* the neighbor-list graph is symmetrized, deduplicated, and stripped of
  self-loops;
* features stay as distributed (bag-of-words counts or TF-IDF); any row
  normalization is the consumer's decision.

Output is a pure function of the input files, so converting twice yields
byte-identical bundles.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

DATASETS = ("cora", "citeseer", "pubmed")
VALIDATION_SIZE = 500  # labeled nodes right after the training block

_PICKLED = ("x", "y", "tx", "ty", "allx", "ally", "graph")


class ConversionError(ValueError):
    pass


@dataclass(frozen=True)
class PlanetoidSource:
    """Location and name of one upstream dataset; validates file presence."""

    name: str
    directory: Path

    def __post_init__(self):
        if self.name not in DATASETS:
            raise ConversionError(f"unknown dataset {self.name!r}; expected one of {DATASETS}")
        object.__setattr__(self, "directory", Path(self.directory))
        missing = [p.name for p in self.paths() if not p.exists()]
        if missing:
            raise ConversionError(f"missing upstream files in {self.directory}: {missing}")

    def paths(self) -> list[Path]:
        names = [f"ind.{self.name}.{suffix}" for suffix in _PICKLED]
        names.append(f"ind.{self.name}.test.index")
        return [self.directory / n for n in names]

    def load(self) -> dict:
        objects = {}
        for suffix in _PICKLED:
            with open(self.directory / f"ind.{self.name}.{suffix}", "rb") as fh:
                objects[suffix] = pickle.load(fh, encoding="latin1")
        index_path = self.directory / f"ind.{self.name}.test.index"
        test_index = [int(line) for line in index_path.read_text().split() if line.strip()]
        if len(set(test_index)) != len(test_index):
            raise ConversionError("test indices are not unique")
        objects["test.index"] = np.array(test_index, dtype=np.int64)
        return objects


def _assemble(objects: dict, val_size: int = VALIDATION_SIZE) -> dict:
    """Reorder the feature/label blocks into whole-graph node order."""
    allx, tx = objects["allx"], objects["tx"]
    ally, ty = np.asarray(objects["ally"]), np.asarray(objects["ty"])
    y = np.asarray(objects["y"])
    test_index = objects["test.index"]

    n_allx = allx.shape[0]
    if test_index.min() != n_allx:
        raise ConversionError(
            f"index misalignment: test indices start at {test_index.min()}, "
            f"expected {n_allx} (the row count of allx)")
    full_range = np.arange(n_allx, test_index.max() + 1)
    n = int(test_index.max()) + 1

    # place the shipped test rows into their index positions; anything in the
    # range that never got a row stays zero-featured and unlabeled
    tx_ext = sp.lil_matrix((len(full_range), allx.shape[1]), dtype=np.float64)
    ty_ext = np.zeros((len(full_range), ty.shape[1]))
    tx_ext[test_index - n_allx] = sp.lil_matrix(tx, dtype=np.float64)
    ty_ext[test_index - n_allx] = ty

    features = sp.vstack([sp.csr_matrix(allx, dtype=np.float64),
                          sp.csr_matrix(tx_ext)]).toarray()
    onehot = np.vstack([ally, ty_ext])
    if onehot.shape[0] != n:
        raise ConversionError(
            f"index misalignment: {onehot.shape[0]} label rows for {n} nodes")

    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), -1)

    graph = objects["graph"]
    pairs = set()
    for src, neighbors in graph.items():
        if not 0 <= int(src) < n:
            raise ConversionError(f"index misalignment: graph node {src} outside [0, {n})")
        for dst in neighbors:
            if not 0 <= int(dst) < n:
                raise ConversionError(f"index misalignment: graph node {dst} outside [0, {n})")
            if int(src) != int(dst):
                pairs.add((min(int(src), int(dst)), max(int(src), int(dst))))

    n_train = y.shape[0]
    train_idx = np.arange(n_train)
    val_idx = np.arange(n_train, n_train + val_size)
    test_idx = np.sort(test_index)
    if val_idx.max() >= n_allx:
        raise ConversionError("index misalignment: validation block exceeds allx")

    return {"n": n, "features": features, "labels": labels,
            "classes": int(onehot.shape[1]), "edges": sorted(pairs),
            "train_idx": train_idx, "val_idx": val_idx, "test_idx": test_idx}


def _format_value(v: float) -> str:
    return "0" if v == 0.0 else repr(float(v))


def write_bundle(parts: dict, out: Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "meta.txt").write_text(
        f"n={parts['n']}\nm={parts['features'].shape[1]}\nclasses={parts['classes']}\n",
        encoding="utf-8")
    (out / "edges.tsv").write_text(
        "".join(f"{i}\t{j}\n" for i, j in parts["edges"]), encoding="utf-8")
    (out / "features.tsv").write_text(
        "".join("\t".join(_format_value(v) for v in row) + "\n"
                for row in parts["features"]), encoding="utf-8")
    (out / "labels.tsv").write_text(
        "".join(f"{v}\n" for v in parts["labels"]), encoding="utf-8")
    for name in ("train", "val", "test"):
        (out / f"{name}.idx").write_text(
            "".join(f"{i}\n" for i in parts[f"{name}_idx"]), encoding="utf-8")


def convert(source: PlanetoidSource, out: Path,
            val_size: int = VALIDATION_SIZE) -> Path:
    """Convert one dataset; returns the bundle directory."""
    parts = _assemble(source.load(), val_size=val_size)
    write_bundle(parts, out)
    return Path(out)
