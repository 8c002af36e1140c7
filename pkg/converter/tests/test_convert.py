import os
import pickle
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from planetoid_converter import (ConversionError, PlanetoidSource, convert)


def one_hot(labels, classes):
    out = np.zeros((len(labels), classes), dtype=np.int64)
    out[np.arange(len(labels)), labels] = 1
    return out


def write_fake(directory: Path, name: str, *, gaps: bool):
    """Tiny dataset in the upstream layout.

    Layout: 8 allx rows (2 train, 3 val, 3 extra) then a test block.
    With gaps=True the test block spans indices 8..12 but only 8, 10, 12
    ship rows, mimicking the isolated test documents.
    """
    rng = np.random.default_rng(0)
    m, classes = 4, 3
    n_allx = 8
    allx = sp.csr_matrix(rng.integers(0, 2, size=(n_allx, m)).astype(float))
    ally = one_hot(rng.integers(0, classes, size=n_allx), classes)
    x = allx[:2]
    y = ally[:2]
    if gaps:
        test_index = [10, 8, 12]  # shuffled on purpose; 9 and 11 are missing
    else:
        test_index = [10, 8, 9]
    tx = sp.csr_matrix(rng.integers(0, 2, size=(len(test_index), m)).astype(float) + 1.0)
    ty = one_hot(rng.integers(0, classes, size=len(test_index)), classes)
    n = max(test_index) + 1

    graph = defaultdict(list)
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7),
             (7, 8), (8, 10), (0, 10), (1, max(test_index))]
    for i, j in edges:
        graph[i].append(j)
        graph[j].append(i)
    graph[0].append(0)      # self-loop must be dropped
    graph[1].append(2)      # duplicate must collapse
    for node in range(n):
        graph[node]         # defaultdict: ensure every node has a key

    payload = {"x": x, "y": y, "tx": tx, "ty": ty, "allx": allx, "ally": ally,
               "graph": graph}
    for suffix, obj in payload.items():
        with open(directory / f"ind.{name}.{suffix}", "wb") as fh:
            pickle.dump(obj, fh, protocol=2)
    (directory / f"ind.{name}.test.index").write_text(
        "".join(f"{i}\n" for i in test_index))
    return {"n": n, "m": m, "classes": classes, "test_index": test_index,
            "tx": tx.toarray(), "ty": ty, "allx": allx.toarray(), "edges": edges}


class TestConvert:
    def test_contiguous_dataset(self, tmp_path):
        info = write_fake(tmp_path, "cora", gaps=False)
        out = convert(PlanetoidSource("cora", tmp_path), tmp_path / "bundle",
                      val_size=3)
        meta = dict(line.split("=") for line in
                    (out / "meta.txt").read_text().split())
        assert int(meta["n"]) == info["n"] and int(meta["m"]) == info["m"]
        assert int(meta["classes"]) == info["classes"]

        features = np.loadtxt(out / "features.tsv")
        np.testing.assert_array_equal(features[:8], info["allx"])
        # test rows land at their test.index positions
        for row, idx in zip(info["tx"], info["test_index"]):
            np.testing.assert_array_equal(features[idx], row)

        labels = np.loadtxt(out / "labels.tsv", dtype=np.int64)
        for row, idx in zip(info["ty"], info["test_index"]):
            assert labels[idx] == row.argmax()

        assert (out / "train.idx").read_text().split() == ["0", "1"]
        assert (out / "val.idx").read_text().split() == ["2", "3", "4"]
        assert (out / "test.idx").read_text().split() == ["8", "9", "10"]

    def test_gap_fixup_zero_rows_unlabeled_unmasked(self, tmp_path):
        write_fake(tmp_path, "citeseer", gaps=True)
        out = convert(PlanetoidSource("citeseer", tmp_path), tmp_path / "bundle",
                      val_size=3)
        features = np.loadtxt(out / "features.tsv")
        labels = np.loadtxt(out / "labels.tsv", dtype=np.int64)
        for missing in (9, 11):
            np.testing.assert_array_equal(features[missing], 0.0)
            assert labels[missing] == -1
        masks = " ".join((out / name).read_text()
                         for name in ("train.idx", "val.idx", "test.idx")).split()
        assert "9" not in masks and "11" not in masks
        assert (out / "test.idx").read_text().split() == ["8", "10", "12"]

    def test_graph_symmetrized_deduplicated_no_self_loops(self, tmp_path):
        info = write_fake(tmp_path, "cora", gaps=False)
        out = convert(PlanetoidSource("cora", tmp_path), tmp_path / "bundle",
                      val_size=3)
        lines = (out / "edges.tsv").read_text().strip().split("\n")
        pairs = [tuple(map(int, ln.split("\t"))) for ln in lines]
        assert len(pairs) == len(set(pairs)) == len(set(map(tuple, map(sorted, info["edges"]))))
        assert all(i < j for i, j in pairs)

    def test_determinism_byte_identical(self, tmp_path):
        write_fake(tmp_path, "cora", gaps=False)
        src = PlanetoidSource("cora", tmp_path)
        convert(src, tmp_path / "a", val_size=3)
        convert(src, tmp_path / "b", val_size=3)
        for name in ("meta.txt", "edges.tsv", "features.tsv", "labels.tsv",
                     "train.idx", "val.idx", "test.idx"):
            assert (tmp_path / "a" / name).read_bytes() \
                == (tmp_path / "b" / name).read_bytes()

    def test_roundtrip_through_primary_loader(self, tmp_path):
        airgcn = pytest.importorskip("airgcn")
        write_fake(tmp_path, "cora", gaps=False)
        out = convert(PlanetoidSource("cora", tmp_path), tmp_path / "bundle",
                      val_size=3)
        g = airgcn.load_bundle(out)
        assert g.n == 11 and g.num_features == 4
        assert g.adjacency.is_symmetric()
        assert not g.adjacency.has_diagonal_entries()
        assert g.train_mask.sum() == 2 and g.val_mask.sum() == 3
        assert g.test_mask.sum() == 3


class TestErrors:
    def test_missing_file_named(self, tmp_path):
        write_fake(tmp_path, "cora", gaps=False)
        os.remove(tmp_path / "ind.cora.graph")
        with pytest.raises(ConversionError, match="ind.cora.graph"):
            PlanetoidSource("cora", tmp_path)

    def test_unknown_dataset_name(self, tmp_path):
        with pytest.raises(ConversionError, match="unknown dataset"):
            PlanetoidSource("webkb", tmp_path)

    def test_duplicate_test_index(self, tmp_path):
        write_fake(tmp_path, "cora", gaps=False)
        (tmp_path / "ind.cora.test.index").write_text("8\n8\n9\n")
        with pytest.raises(ConversionError, match="unique"):
            PlanetoidSource("cora", tmp_path).load()

    def test_misaligned_test_block(self, tmp_path):
        write_fake(tmp_path, "cora", gaps=False)
        (tmp_path / "ind.cora.test.index").write_text("3\n4\n5\n")
        with pytest.raises(ConversionError, match="misalignment"):
            convert(PlanetoidSource("cora", tmp_path), tmp_path / "b", val_size=3)


TABLE = {
    "cora": dict(n=2708, m=1433, classes=7, train=140, val=500, test=1000),
    "citeseer": dict(n=3327, m=3703, classes=6, train=120, val=500, test=1000),
    "pubmed": dict(n=19717, m=500, classes=3, train=60, val=500, test=1000),
}


@pytest.mark.parametrize("name", sorted(TABLE))
def test_real_dataset_fidelity(name, tmp_path):
    """Counts of the converted real datasets match the published statistics."""
    raw = Path(os.environ.get("PLANETOID_RAW", "/nonexistent"))
    if not (raw / f"ind.{name}.x").exists():
        pytest.skip(f"upstream files for {name} not present; set PLANETOID_RAW "
                    f"to the directory holding ind.{name}.* to run this check")
    out = convert(PlanetoidSource(name, raw), tmp_path / name)
    meta = dict(line.split("=") for line in (out / "meta.txt").read_text().split())
    expected = TABLE[name]
    assert int(meta["n"]) == expected["n"]
    assert int(meta["m"]) == expected["m"]
    assert int(meta["classes"]) == expected["classes"]
    assert len((out / "train.idx").read_text().split()) == expected["train"]
    assert len((out / "val.idx").read_text().split()) == expected["val"]
    assert len((out / "test.idx").read_text().split()) == expected["test"]

    airgcn = pytest.importorskip("airgcn")
    g = airgcn.load_bundle(out)
    assert g.n == expected["n"]
    assert g.adjacency.is_symmetric()
