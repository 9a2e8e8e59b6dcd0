from __future__ import annotations

import itertools
import json

import numpy as np
import pytest

import oracles
from seebench.distance import (
    COSINE_SIMILARITY,
    EDIT_DISTANCE,
    EDIT_DISTANCE_EDGES,
    CrossObjectDistanceError,
    EmbedderError,
    HashingEmbedder,
    attribute_edit_distance,
    bin_concepts,
    cosine_edges,
    edit_distance_matrix,
    embedding_similarity,
    similarity_to,
)
from seebench.prompts import enumerate_variants

FROZEN = json.loads(oracles.FROZEN.read_text())


@pytest.fixture(scope="module")
def cup_records(tree):
    return enumerate_variants(tree.node("cup"))


def test_matches_bfs_oracle_on_all_pairs(cup_records):
    table = FROZEN["distance_table_cup"]
    assert len(table) == 64
    for a, b in itertools.product(cup_records, repeat=2):
        d = attribute_edit_distance(a, b)
        assert d == table[a.class_label][b.class_label]


def test_live_oracle_agrees_with_frozen():
    assert oracles.distance_table("cup") == FROZEN["distance_table_cup"]


def test_metric_axioms(cup_records):
    d = {(a.prompt_id, b.prompt_id): attribute_edit_distance(a, b)
         for a, b in itertools.product(cup_records, repeat=2)}
    ids = [r.prompt_id for r in cup_records]
    for x in ids:
        assert d[x, x] == 0
    for x, y in itertools.product(ids, repeat=2):
        assert d[x, y] == d[y, x]
        if x != y:
            assert d[x, y] > 0
    for x, y, z in itertools.product(ids, repeat=3):
        assert d[x, z] <= d[x, y] + d[y, z]


def test_examples(tree):
    node = lambda n: next(r for r in enumerate_variants(tree.node(n.split()[-1])) if r.class_label == n)
    assert attribute_edit_distance(node("car"), node("red car")) == 1
    assert attribute_edit_distance(node("red car"), node("blue car")) == 1
    assert attribute_edit_distance(node("small red car"), node("large blue wooden car")) == 3


def test_cross_object_rejected(tree):
    car = enumerate_variants(tree.node("car"))[0]
    cup = enumerate_variants(tree.node("cup"))[0]
    with pytest.raises(CrossObjectDistanceError):
        attribute_edit_distance(car, cup)


def test_matrix_matches_scalar(cup_records):
    maps = [dict(r.attributes) for r in cup_records]
    mat = edit_distance_matrix(maps, maps)
    for i, a in enumerate(cup_records):
        for j, b in enumerate(cup_records):
            assert mat[i, j] == attribute_edit_distance(a, b)


def test_distance_populations(cup_records):
    target = cup_records[0]
    counts = np.bincount([attribute_edit_distance(target, r) for r in cup_records], minlength=4)
    assert list(counts) == FROZEN["distance_populations_from_bare"] == [1, 9, 27, 27]


def test_hashing_embedder_similarity():
    emb = HashingEmbedder()
    assert embedding_similarity("red cup", "red cup", emb) == pytest.approx(1.0, abs=1e-12)
    assert embedding_similarity("red cup", "cup", emb) > embedding_similarity("red car", "cup", emb)
    s = embedding_similarity("cup", "zebra", emb)
    assert -1.0 <= s <= 1.0
    sims = similarity_to("cup", ["cup", "red cup", "zebra"], emb)
    assert sims[0] == pytest.approx(1.0)
    assert sims[1] > sims[2]


def test_embedder_errors():
    emb = HashingEmbedder()
    with pytest.raises(ValueError):
        embedding_similarity("", "cup", emb)

    class Broken:
        model_id = "broken"

        def embed(self, text):
            raise RuntimeError("backend down")

    with pytest.raises(EmbedderError, match="cup"):
        embedding_similarity("cup", "car", Broken())

    class Zero:
        model_id = "zero"

        def embed(self, text):
            return np.zeros(4)

    with pytest.raises(EmbedderError):
        embedding_similarity("cup", "car", Zero())


def test_bins_half_open_and_clamped():
    pairs = [("a", 0), ("b", 1), ("c", 1), ("d", 3), ("e", 4), ("f", -1)]
    bins = bin_concepts(pairs, EDIT_DISTANCE_EDGES, EDIT_DISTANCE)
    assert [b.label for b in bins] == ["0", "1", "2", "3"]
    assert bins[0].members == ["a", "f"] and bins[0].clamped == ["f"]
    assert bins[1].members == ["b", "c"]
    assert bins[3].members == ["d", "e"] and bins[3].clamped == ["e"]


def test_bin_edges_validation():
    with pytest.raises(ValueError):
        bin_concepts([], [0.0])
    with pytest.raises(ValueError):
        bin_concepts([], [0.0, 0.0, 1.0])


def test_cosine_edges_cover_values():
    vals = [0.12, 0.5, 0.999, 1.0, -0.3]
    edges = cosine_edges(vals, 0.05)
    assert edges[0] <= min(vals) and edges[-1] > max(vals)
    assert all(b - a == pytest.approx(0.05) for a, b in zip(edges, edges[1:]))
    bins = bin_concepts([(str(v), v) for v in vals], edges, COSINE_SIMILARITY)
    assert sum(len(b.members) for b in bins) == len(vals)
    assert not any(b.clamped for b in bins)
    with pytest.raises(ValueError):
        cosine_edges(vals, 0.0)
